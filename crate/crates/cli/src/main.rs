use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use rmt_core::ensembles::{CumulantSummary, EntryLaw, Potential, WignerSpec};
use rmt_core::harness::{
    format_float, run_experiment_with, worker_count, EnsembleSpec, ExperimentConfig,
    ExperimentKind, TestFunctionSpec,
};
use rmt_core::rng::SeedSequence;
use rmt_core::semicircle;
use rmt_core::theory::{self, Family};

#[derive(Parser)]
#[command(
    name = "rmt",
    version,
    about = "Random-matrix spectral fluctuation laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a theory prediction as JSON.
    Predict {
        /// One of the names listed by `rmt predict list`.
        formula: String,
        /// `key=value` pairs, repeated or comma separated.
        #[arg(long = "params", short = 'p', value_delimiter = ',')]
        params: Vec<String>,
    },
    /// Run an experiment and print its JSON report.
    Run {
        config: PathBuf,
        /// Also write every raw per-trial table as `<name>.csv` here.
        #[arg(long)]
        raw_dir: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 2 when a check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Run a coupling experiment and print the per-coupling CSV.
    Dbm {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sample one spectrum and write `index,eigenvalue` CSV.
    Sample {
        /// goe, wigner, gaussian_divisible, beta_hermite or beta_gibbs.
        ensemble: String,
        #[arg(long)]
        n: usize,
        /// Falls back to RMT_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "gaussian")]
        offdiag: String,
        #[arg(long, default_value = "gaussian_var2")]
        diag: String,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        t0: Option<f64>,
        /// Polynomial potential coefficients, constant term first.
        #[arg(long, value_delimiter = ',', default_value = "0,0,0.5")]
        potential: Vec<f64>,
        /// Trial index of the stream, matching trial k of `run`.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Predict { formula, params } => {
            let params = Params::parse(&params)?;
            let value = predict(&formula, &params)?;
            params.reject_unused()?;
            println!("{}", serde_json::to_string_pretty(&value)?);
        }
        Command::Run {
            config,
            raw_dir,
            out,
            strict,
        } => {
            let cfg = load(&config)?;
            let output = timed(|| run_experiment_with(&cfg, worker_count()))?;
            emit(out.as_deref(), &(output.report.to_json() + "\n"))?;
            if let Some(dir) = raw_dir {
                fs::create_dir_all(&dir)?;
                for t in &output.tables {
                    fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
                }
            }
            if strict && !output.report.passed {
                std::process::exit(2);
            }
        }
        Command::Dbm {
            config,
            out,
            report,
        } => {
            let cfg = load(&config)?;
            if cfg.kind != ExperimentKind::DbmHomogenization {
                bail!("`{}` is not a dbm_homogenization config", config.display());
            }
            let output = timed(|| run_experiment_with(&cfg, worker_count()))?;
            let table = output
                .tables
                .iter()
                .find(|t| t.name == "dbm")
                .expect("dbm table");
            emit(out.as_deref(), &table.to_csv())?;
            if let Some(path) = report {
                fs::write(path, output.report.to_json() + "\n")?;
            }
        }
        Command::Sample {
            ensemble,
            n,
            seed,
            out,
            offdiag,
            diag,
            beta,
            t0,
            potential,
            trial,
        } => {
            let spec = match ensemble.as_str() {
                "goe" => EnsembleSpec::Goe,
                "wigner" => EnsembleSpec::Wigner { offdiag, diag },
                "gaussian_divisible" => EnsembleSpec::GaussianDivisible { offdiag, diag, t0 },
                "beta_hermite" => EnsembleSpec::BetaHermite { beta },
                "beta_gibbs" => EnsembleSpec::BetaGibbs {
                    beta,
                    potential,
                    steps: None,
                },
                other => bail!("unknown ensemble `{other}`"),
            };
            spec.validate(n)?;
            let seed = match seed {
                Some(s) => s,
                None => std::env::var("RMT_SEED")
                    .context("no --seed and RMT_SEED is unset")?
                    .trim()
                    .parse()
                    .context("RMT_SEED is not an integer")?,
            };
            // Same stream as trial `trial` of an experiment with this seed.
            let mut rng = SeedSequence::new(seed).named(&format!("spectrum/n={n}"), trial);
            let s = spec.sample_spectrum(n, 0.2, &mut rng)?;
            let mut csv = String::from("index,eigenvalue\n");
            for (k, v) in s.values().iter().enumerate() {
                csv.push_str(&format!("{},{}\n", k + 1, format_float(*v)));
            }
            emit(out.as_deref(), &csv)?;
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_path(path).with_context(|| format!("loading {}", path.display()))
}

fn timed<T>(f: impl FnOnce() -> rmt_core::Result<T>) -> Result<T> {
    let start = std::time::Instant::now();
    let out = f()?;
    eprintln!("finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(out)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

/// `key=value` arguments; every key must be consumed by the formula.
struct Params {
    values: BTreeMap<String, String>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Params {
    fn parse(raw: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for item in raw.iter().filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("parameter `{item}` is not key=value"))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self {
            values,
            used: Default::default(),
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().push(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| anyhow!("missing parameter `{key}`"))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .with_context(|| format!("`{key}` = `{v}` is not a number"))
            })
            .transpose()
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let v = self
            .raw(key)
            .ok_or_else(|| anyhow!("missing parameter `{key}`"))?;
        v.parse()
            .with_context(|| format!("`{key}` = `{v}` is not a non-negative integer"))
    }

    fn reject_unused(&self) -> Result<()> {
        let used = self.used.borrow();
        let extra: Vec<_> = self
            .values
            .keys()
            .filter(|k| !used.contains(k))
            .cloned()
            .collect();
        if !extra.is_empty() {
            bail!("unused parameters: {}", extra.join(", "));
        }
        Ok(())
    }

    /// `s4` and `a2` given directly, or from entry-law names (GOE by default).
    fn cumulants(&self) -> Result<CumulantSummary> {
        let offdiag = self.raw("offdiag").unwrap_or("gaussian");
        let diag = self.raw("diag").unwrap_or("gaussian_var2");
        let mut c = WignerSpec::new(2, EntryLaw::from_name(offdiag)?, EntryLaw::from_name(diag)?)?
            .cumulant_summary();
        if let Some(s4) = self.opt_f64("s4")? {
            c.s4 = s4;
        }
        if let Some(a2) = self.opt_f64("a2")? {
            c.a2 = a2;
        }
        Ok(c)
    }

    /// Test function from `function=<type>` plus its numeric fields.
    fn test_function(&self) -> Result<rmt_core::mesostat::TestFunction> {
        let kind = self
            .raw("function")
            .ok_or_else(|| anyhow!("missing parameter `function`"))?;
        let mut obj = Map::new();
        obj.insert("type".into(), json!(kind));
        for key in [
            "center",
            "width",
            "lower",
            "upper",
            "ramp",
            "half_width",
            "softness",
            "value",
            "vanish_at",
        ] {
            if let Some(v) = self.opt_f64(key)? {
                obj.insert(key.into(), json!(v));
            }
        }
        let spec: TestFunctionSpec = serde_json::from_value(Value::Object(obj))
            .with_context(|| format!("bad parameters for function `{kind}`"))?;
        Ok(spec.build()?)
    }
}

const FORMULAS: &[(&str, &str)] = &[
    ("semicircle_density", "x"),
    ("semicircle_cdf", "x"),
    ("semicircle_quantile", "u"),
    ("classical_location", "n, i"),
    ("stieltjes", "re, im"),
    ("indicator_integrals", "gamma"),
    (
        "single_eigenvalue_mean",
        "gamma | n+i, s4/a2 or offdiag/diag",
    ),
    ("variance_shift", "gamma | i, n, s4/a2 or offdiag/diag"),
    (
        "variance_functional",
        "function + fields, s4/a2 or offdiag/diag",
    ),
    (
        "mean_expansion",
        "function + fields, n, s4/a2 or offdiag/diag",
    ),
    ("mesoscopic_variance", "function + fields, beta (default 1)"),
    (
        "beta_variance_functional",
        "function + fields, beta, a (-2), b (2)",
    ),
    ("beta_mean_correction", "function + fields, beta"),
    (
        "gustavsson_scaling",
        "gamma | i, n, beta (1), family (wigner|beta)",
    ),
];

fn gamma(p: &Params) -> Result<f64> {
    if let Some(g) = p.opt_f64("gamma")? {
        return Ok(g);
    }
    let n = p.usize("n").context("give `gamma` or `n` and `i`")?;
    let i = p.usize("i")?;
    if i == 0 || i > n {
        bail!("i = {i} outside 1..={n}");
    }
    Ok(semicircle::classical_locations(n)?.location(i))
}

fn predict(formula: &str, p: &Params) -> Result<Value> {
    let value = match formula {
        "list" => {
            let m: Map<String, Value> = FORMULAS
                .iter()
                .map(|(k, v)| (k.to_string(), json!(v)))
                .collect();
            return Ok(Value::Object(m));
        }
        "semicircle_density" => json!({ "value": semicircle::density(p.f64("x")?) }),
        "semicircle_cdf" => json!({ "value": semicircle::cdf(p.f64("x")?) }),
        "semicircle_quantile" => json!({ "value": semicircle::quantile(p.f64("u")?)? }),
        "classical_location" => {
            let (n, i) = (p.usize("n")?, p.usize("i")?);
            if i == 0 || i > n {
                bail!("i = {i} outside 1..={n}");
            }
            json!({ "value": semicircle::classical_locations(n)?.location(i) })
        }
        "stieltjes" => {
            let z = rmt_core::num_complex::Complex64::new(p.f64("re")?, p.f64("im")?);
            let m = semicircle::stieltjes(z)?;
            json!({ "re": m.re, "im": m.im })
        }
        "indicator_integrals" => {
            serde_json::to_value(theory::indicator_integrals(p.f64("gamma")?)?)?
        }
        "single_eigenvalue_mean" => {
            let g = gamma(p)?;
            let c = p.cumulants()?;
            json!({ "gamma": g, "s4": c.s4, "a2": c.a2,
                    "value": theory::single_eigenvalue_mean(g, c.s4, c.a2)? })
        }
        "variance_shift" => {
            let g = gamma(p)?;
            let n = p.usize("n")?;
            let c = p.cumulants()?;
            json!({ "gamma": g, "s4": c.s4, "a2": c.a2,
                    "value": theory::single_eigenvalue_variance_shift(g, c.s4, c.a2, n)? })
        }
        "variance_functional" => {
            let f = p.test_function()?;
            let c = p.cumulants()?;
            serde_json::to_value(theory::variance_functional(&f, c.s4, c.a2)?)?
        }
        "mean_expansion" => {
            let f = p.test_function()?;
            let c = p.cumulants()?;
            let b = theory::mean_expansion(&f, c.s4, c.a2, p.usize("n")?)?;
            let mut v = serde_json::to_value(b)?;
            v["corrections"] = json!(b.corrections());
            v
        }
        "mesoscopic_variance" => {
            let f = p.test_function()?;
            let beta = p.opt_f64("beta")?.unwrap_or(1.0);
            json!({ "value": theory::mesoscopic_variance(&f, 1.0 / beta)? })
        }
        "beta_variance_functional" => {
            let f = p.test_function()?;
            let a = p.opt_f64("a")?.unwrap_or(-2.0);
            let b = p.opt_f64("b")?.unwrap_or(2.0);
            json!({ "value": theory::beta_variance_functional(&f, a, b, p.f64("beta")?)? })
        }
        "beta_mean_correction" => {
            let f = p.test_function()?;
            json!({ "value": theory::beta_mean_correction(&f, &Potential::hermite(), p.f64("beta")?)? })
        }
        "gustavsson_scaling" => {
            let g = gamma(p)?;
            let n = p.usize("n")?;
            let beta = p.opt_f64("beta")?.unwrap_or(1.0);
            let family = match p.raw("family").unwrap_or("wigner") {
                "wigner" => Family::Wigner,
                "beta" => Family::Beta,
                other => bail!("unknown family `{other}`"),
            };
            let (center, scale) = theory::gustavsson_scaling(g, n, beta, family)?;
            json!({ "center": center, "scale": scale })
        }
        other => bail!("unknown formula `{other}`; try `rmt predict list`"),
    };
    let mut out = Map::new();
    out.insert(
        "schema_version".into(),
        json!(rmt_core::harness::SCHEMA_VERSION),
    );
    out.insert("formula".into(), json!(formula));
    out.insert(
        "params".into(),
        Value::Object(
            p.values
                .iter()
                .map(|(k, v)| (k.clone(), json!(v)))
                .collect(),
        ),
    );
    out.insert("prediction".into(), value);
    Ok(Value::Object(out))
}

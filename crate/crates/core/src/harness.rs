//! Monte Carlo experiments: configuration, parallel trials, estimators and
//! reports.
//!
//! Every trial draws from its own stream keyed by `(role, n, trial)`, and
//! results are collected in trial order, so a report depends only on the
//! configuration and the master seed, never on the number of workers.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::erf::erfc;

use crate::dbm::{default_dt, evolve, homogenization_sample, run_coupling_with_dt, DBMState};
use crate::ensembles::{
    mcmc_burn_in, sample_beta_gibbs_mcmc, sample_beta_hermite, sample_gaussian_divisible,
    sample_wigner, BetaHermiteSpec, CumulantSummary, EntryLaw, GaussianDivisibleSpec, Potential,
    WignerSpec,
};
use crate::error::{Result, RmtError};
use crate::mesostat::{
    build_homogenization_observable, counting_z_score, linear_statistic, mesoscopic_statistic,
    partial_linear_statistic, TestFunction,
};
use crate::rng::{SeedSequence, TrialRng};
use crate::semicircle::{self, classical_locations};
use crate::spectra::{eigen_symmetric, eigen_tridiagonal, Spectrum};
use crate::theory::{
    gustavsson_scaling, mean_expansion, mesoscopic_variance, single_eigenvalue_mean,
    single_eigenvalue_variance_shift, variance_functional, Family,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Experiment selected by a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SingleEigenvalueClt,
    CountingClt,
    MeanExpansion,
    VarianceShift,
    LinearStatisticVariance,
    MesoscopicClt,
    BetaClt,
    DbmHomogenization,
    BpzPartial,
}

/// Random-matrix model by catalog names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnsembleSpec {
    Goe,
    Wigner {
        offdiag: String,
        diag: String,
    },
    /// `t0` defaults to `N^-tau0`.
    GaussianDivisible {
        offdiag: String,
        diag: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t0: Option<f64>,
    },
    BetaHermite {
        beta: f64,
    },
    /// Metropolis sampler for `exp(-beta N/2 sum V + beta sum log|x_i - x_j|)`.
    BetaGibbs {
        beta: f64,
        potential: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
}

impl EnsembleSpec {
    fn wigner(&self, n: usize) -> Result<Option<WignerSpec>> {
        match self {
            Self::Goe => WignerSpec::goe(n).map(Some),
            Self::Wigner { offdiag, diag } | Self::GaussianDivisible { offdiag, diag, .. } => {
                WignerSpec::new(n, EntryLaw::from_name(offdiag)?, EntryLaw::from_name(diag)?)
                    .map(Some)
            }
            _ => Ok(None),
        }
    }

    fn beta(&self) -> f64 {
        match self {
            Self::BetaHermite { beta } | Self::BetaGibbs { beta, .. } => *beta,
            _ => 1.0,
        }
    }

    fn name(&self) -> String {
        match self {
            Self::Goe => "goe".into(),
            Self::Wigner { offdiag, diag } => format!("wigner({offdiag}, {diag})"),
            Self::GaussianDivisible { offdiag, diag, .. } => {
                format!("gaussian_divisible({offdiag}, {diag})")
            }
            Self::BetaHermite { beta } => format!("beta_hermite({beta})"),
            Self::BetaGibbs { beta, .. } => format!("beta_gibbs({beta})"),
        }
    }

    fn t0(&self, n: usize, tau0: f64) -> f64 {
        match self {
            Self::GaussianDivisible { t0: Some(t0), .. } => *t0,
            _ => (n as f64).powf(-tau0),
        }
    }

    /// Cumulants of the effective Wigner matrix.
    pub fn cumulants(&self, n: usize, tau0: f64) -> Result<Option<CumulantSummary>> {
        let Some(w) = self.wigner(n)? else {
            return Ok(None);
        };
        let c = w.cumulant_summary();
        Ok(Some(match self {
            Self::GaussianDivisible { .. } => {
                // Off-diagonal e^{-t0/2} X + sqrt(1 - e^{-t0}) G, same for the
                // diagonal with a variance-2 Gaussian.
                let q = (-self.t0(n, tau0)).exp();
                CumulantSummary {
                    s2: 1.0,
                    s3: q.powf(1.5) * c.s3,
                    s4: q * q * c.s4,
                    a2: q * (1.0 + c.a2) + 2.0 * (1.0 - q) - 1.0,
                    a3: q.powf(1.5) * (c.s3 + c.a3) - q.powf(1.5) * c.s3,
                    a4: q * q * (c.s4 + c.a4) - q * q * c.s4,
                }
            }
            _ => c,
        }))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.wigner(n)?;
        match self {
            Self::GaussianDivisible { t0: Some(t0), .. } if !(*t0 > 0.0 && *t0 < 1.0) => {
                Err(RmtError::config(format!("t0 = {t0} not in (0, 1)")))
            }
            Self::BetaHermite { beta } if !(*beta >= 1.0) => {
                Err(RmtError::config(format!("beta = {beta} < 1")))
            }
            Self::BetaGibbs {
                beta, potential, ..
            } => {
                if !(*beta >= 1.0) {
                    return Err(RmtError::config(format!("beta = {beta} < 1")));
                }
                Potential::polynomial(potential.clone()).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    /// Eigenvalues of one draw.
    pub fn sample_spectrum(&self, n: usize, tau0: f64, rng: &mut TrialRng) -> Result<Spectrum> {
        match self {
            Self::Goe | Self::Wigner { .. } => {
                eigen_symmetric(&sample_wigner(&self.wigner(n)?.unwrap(), rng)?)
            }
            Self::GaussianDivisible { .. } => {
                let spec = GaussianDivisibleSpec::new(self.wigner(n)?.unwrap(), self.t0(n, tau0))?;
                eigen_symmetric(&sample_gaussian_divisible(&spec, rng)?)
            }
            Self::BetaHermite { beta } => eigen_tridiagonal(&sample_beta_hermite(
                &BetaHermiteSpec { n, beta: *beta },
                rng,
            )?),
            Self::BetaGibbs {
                beta,
                potential,
                steps,
            } => {
                let v = Potential::polynomial(potential.clone())?;
                let steps = steps.unwrap_or_else(|| mcmc_burn_in(n));
                Spectrum::new(sample_beta_gibbs_mcmc(&v, *beta, n, rng, steps)?)
            }
        }
    }
}

/// Observable by constructor name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestFunctionSpec {
    Constant {
        value: f64,
    },
    Identity,
    GaussianBump {
        center: f64,
        width: f64,
    },
    SmoothstepIndicator {
        lower: f64,
        upper: f64,
        ramp: f64,
    },
    ArctanWindow {
        half_width: f64,
        softness: f64,
    },
    CubicSpline {
        center: f64,
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vanish_at: Option<f64>,
    },
}

impl TestFunctionSpec {
    pub fn build(&self) -> Result<TestFunction> {
        match *self {
            Self::Constant { value } => Ok(TestFunction::Constant { value }),
            Self::Identity => Ok(TestFunction::Identity),
            Self::GaussianBump { center, width } => TestFunction::gaussian_bump(center, width),
            Self::SmoothstepIndicator { lower, upper, ramp } => {
                TestFunction::smoothstep_indicator(lower, upper, ramp)
            }
            Self::ArctanWindow {
                half_width,
                softness,
            } => TestFunction::arctan_window(half_width, softness),
            Self::CubicSpline {
                center,
                width,
                vanish_at: None,
            } => TestFunction::cubic_spline(center, width),
            Self::CubicSpline {
                center,
                width,
                vanish_at: Some(u),
            } => TestFunction::cubic_spline_vanishing_at(center, width, u),
        }
    }
}

fn default_kappa() -> f64 {
    0.05
}

fn default_ensemble() -> EnsembleSpec {
    EnsembleSpec::Goe
}

/// One experiment. Optional fields fall back to per-kind defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// 1-based eigenvalue index; else the index nearest `gamma`; else `n/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Mesoscopic scale exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Partial-statistic threshold `u`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Smoothing exponent for the partial-statistic indicator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub betas: Vec<f64>,
    /// Extra dimensions for the finite-size trend of the single-eigenvalue CLT.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_sweep: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_trials: Option<usize>,
    /// Overrides of the default tolerances, by check name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<EnsembleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<TestFunctionSpec>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, n: usize, trials: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            trials,
            seed: Some(seed),
            index: None,
            gamma: None,
            energy: None,
            kappa: default_kappa(),
            alpha: None,
            threshold: None,
            omega: None,
            betas: Vec::new(),
            n_sweep: Vec::new(),
            tau0: None,
            eps1: None,
            dt: None,
            marginal_n: None,
            marginal_trials: None,
            tolerances: BTreeMap::new(),
            ensemble: EnsembleSpec::Goe,
            reference: None,
            test_function: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| RmtError::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| RmtError::config(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn tau0(&self) -> f64 {
        self.tau0.unwrap_or(0.2)
    }

    fn tolerance(&self, name: &str) -> f64 {
        if let Some(&v) = self.tolerances.get(name) {
            return v;
        }
        match name {
            "max_failure_fraction" => 0.01,
            "ks" | "counting_ks" => 0.06,
            "ks_two_sample" | "marginal_ks" => 0.05,
            "std_rel" => match self.kind {
                ExperimentKind::BetaClt => 0.12,
                _ => 0.15,
            },
            "variance_rel" => match self.kind {
                ExperimentKind::BpzPartial => 0.12,
                ExperimentKind::MesoscopicClt => 0.15,
                _ => 0.10,
            },
            "barycenter_rel" => 0.10,
            "correlation_min" => 0.9,
            "residual_ratio_max" => 0.5,
            _ => 3.0, // z-type checks: number of standard errors
        }
    }

    /// Seed from the config, else `RMT_SEED`.
    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var("RMT_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| RmtError::config(format!("RMT_SEED = `{v}` is not an integer"))),
            Err(_) => Err(RmtError::config(
                "no seed in the config and RMT_SEED is unset",
            )),
        }
    }

    /// 1-based index of the tracked eigenvalue at dimension `n`.
    pub fn resolved_index(&self, n: usize) -> Result<usize> {
        let table = classical_locations(n)?;
        let i = match (self.index, self.gamma) {
            (Some(i), _) if n == self.n => i,
            (Some(i), _) => ((i as f64 / self.n as f64) * n as f64).round() as usize,
            (None, Some(g)) => table.nearest_index(g),
            (None, None) => n / 2,
        };
        let nf = n as f64;
        if i == 0 || i > n || (i as f64) < self.kappa * nf || (i as f64) > (1.0 - self.kappa) * nf {
            return Err(RmtError::config(format!(
                "index {i} violates the bulk constraint {} <= i <= {} at N = {n}",
                self.kappa * nf,
                (1.0 - self.kappa) * nf
            )));
        }
        Ok(i)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(RmtError::config("trials must be positive"));
        }
        if self.n < 2 {
            return Err(RmtError::config(format!("n = {} < 2", self.n)));
        }
        if !(self.kappa > 0.0 && self.kappa < 0.5) {
            return Err(RmtError::config(format!(
                "kappa = {} not in (0, 1/2)",
                self.kappa
            )));
        }
        if let Some(i) = self.index {
            if i == 0 || i > self.n {
                return Err(RmtError::config(format!(
                    "index {i} outside 1..={}",
                    self.n
                )));
            }
        }
        if let Some(g) = self.gamma {
            if !(g.abs() < 2.0) {
                return Err(RmtError::config(format!("gamma = {g} outside (-2, 2)")));
            }
        }
        if let Some(e) = self.energy {
            if !(e.abs() < 2.0 - self.kappa) {
                return Err(RmtError::config(format!("energy {e} outside the bulk")));
            }
        }
        self.ensemble.validate(self.n)?;
        if let Some(r) = &self.reference {
            r.validate(self.n)?;
        }
        if let Some(f) = &self.test_function {
            f.build()?;
        }
        for &n in &self.n_sweep {
            if n < 2 {
                return Err(RmtError::config(format!("n_sweep entry {n} < 2")));
            }
        }
        for &b in &self.betas {
            if !(b >= 1.0) {
                return Err(RmtError::config(format!("beta = {b} < 1")));
            }
        }
        if let Some(t) = self.tau0 {
            if !(t > 0.0 && t < 1.0) {
                return Err(RmtError::config(format!("tau0 = {t} not in (0, 1)")));
            }
        }
        use ExperimentKind::*;
        match self.kind {
            SingleEigenvalueClt | MeanExpansion | VarianceShift | BetaClt | DbmHomogenization => {
                self.resolved_index(self.n)?;
            }
            _ => {}
        }
        match self.kind {
            LinearStatisticVariance | MesoscopicClt if self.test_function.is_none() => {
                Err(RmtError::config("this experiment needs a test_function"))
            }
            VarianceShift if self.reference.is_none() => Err(RmtError::config(
                "variance_shift needs a reference ensemble",
            )),
            DbmHomogenization
                if !matches!(self.ensemble, EnsembleSpec::GaussianDivisible { .. }) =>
            {
                Err(RmtError::config(
                    "dbm_homogenization needs a gaussian_divisible ensemble",
                ))
            }
            MesoscopicClt if !self.alpha.is_some_and(|a| a > 0.0 && a < 1.0) => {
                Err(RmtError::config("mesoscopic_clt needs alpha in (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

/// How a statistic is judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Check {
    /// `|estimate - theory| <= tolerance * standard_error`.
    AbsZ {
        tolerance: f64,
    },
    /// `|estimate / theory - 1| <= tolerance`.
    Relative {
        tolerance: f64,
    },
    AtMost {
        tolerance: f64,
    },
    AtLeast {
        tolerance: f64,
    },
    /// `|estimate - 1|` decreases strictly along the listed sizes.
    TowardOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticReport {
    pub name: String,
    pub estimate: f64,
    pub standard_error: Option<f64>,
    pub theory: Option<f64>,
    pub z_discrepancy: Option<f64>,
    pub ks_distance: Option<f64>,
    pub check: Option<Check>,
    /// `None` for informational rows.
    pub passed: Option<bool>,
}

impl StatisticReport {
    fn info(name: impl Into<String>, estimate: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            standard_error: None,
            theory: None,
            z_discrepancy: None,
            ks_distance: None,
            check: None,
            passed: None,
        }
    }

    fn with_se(mut self, se: f64) -> Self {
        self.standard_error = Some(se);
        self
    }

    fn with_theory(mut self, theory: f64) -> Self {
        self.theory = Some(theory);
        if let Some(se) = self.standard_error {
            self.z_discrepancy = Some((self.estimate - theory) / se);
        }
        self
    }

    fn judged(mut self, check: Check) -> Self {
        let ok = match &check {
            Check::AbsZ { tolerance } => self.z_discrepancy.is_some_and(|z| z.abs() <= *tolerance),
            Check::Relative { tolerance } => self
                .theory
                .is_some_and(|t| ((self.estimate / t) - 1.0).abs() <= *tolerance),
            Check::AtMost { tolerance } => self.estimate <= *tolerance,
            Check::AtLeast { tolerance } => self.estimate >= *tolerance,
            Check::TowardOne => self.estimate == 1.0,
        };
        self.passed = Some(ok);
        self.check = Some(check);
        self
    }
}

/// Worker-independent facts about the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub crate_version: String,
    pub eigensolver: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub attempted: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub failure_messages: Vec<String>,
    pub statistics: Vec<StatisticReport>,
    pub passed: bool,
    pub runtime: RuntimeInfo,
}

impl ExperimentReport {
    pub fn statistic(&self, name: &str) -> Option<&StatisticReport> {
        self.statistics.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-trial raw values; the first `integer_columns` columns are counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub name: String,
    pub columns: Vec<String>,
    pub integer_columns: usize,
    pub rows: Vec<Vec<f64>>,
}

impl RawTable {
    /// CSV with a header row; floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if k < self.integer_columns {
                    let _ = write!(out, "{}", *v as i64);
                } else {
                    let _ = write!(out, "{}", format_float(*v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Round-trip exact decimal form with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub tables: Vec<RawTable>,
}

/// Worker count from `RMT_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("RMT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(config, worker_count()).map(|o| o.report)
}

/// Run with an explicit worker count; also returns the raw per-trial tables.
pub fn run_experiment_with(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    config.validate()?;
    let seed = config.resolved_seed()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RmtError::config(format!("cannot start {workers} workers: {e}")))?;
    let mut ctx = Context {
        config,
        seq: SeedSequence::new(seed),
        pool,
        ledger: Ledger::default(),
    };
    use ExperimentKind::*;
    let (statistics, tables) = match config.kind {
        SingleEigenvalueClt => single_eigenvalue_clt(&mut ctx)?,
        CountingClt => counting_clt(&mut ctx)?,
        MeanExpansion => mean_expansion_experiment(&mut ctx)?,
        VarianceShift => variance_shift(&mut ctx)?,
        LinearStatisticVariance => linear_statistic_variance(&mut ctx)?,
        MesoscopicClt => mesoscopic_clt(&mut ctx)?,
        BetaClt => beta_clt(&mut ctx)?,
        DbmHomogenization => dbm_homogenization(&mut ctx)?,
        BpzPartial => bpz_partial(&mut ctx)?,
    };
    let Ledger {
        attempted,
        failed,
        messages,
    } = ctx.ledger;
    let mut statistics = statistics;
    let fraction = failed as f64 / attempted.max(1) as f64;
    statistics.push(
        StatisticReport::info("failure_fraction", fraction).judged(Check::AtMost {
            tolerance: config.tolerance("max_failure_fraction"),
        }),
    );
    let passed = statistics.iter().all(|s| s.passed != Some(false));
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        kind: config.kind,
        config_hash: config.hash(),
        seed,
        config: config.clone(),
        attempted,
        succeeded: attempted - failed,
        failed,
        failure_messages: messages,
        statistics,
        passed,
        runtime: RuntimeInfo {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            eigensolver: "householder+implicit-ql".to_string(),
        },
    };
    Ok(ExperimentOutput { report, tables })
}

#[derive(Default)]
struct Ledger {
    attempted: usize,
    failed: usize,
    messages: Vec<String>,
}

/// Messages kept per experiment; the counts are always exact.
const MAX_FAILURE_MESSAGES: usize = 20;

struct Context<'a> {
    config: &'a ExperimentConfig,
    seq: SeedSequence,
    pool: rayon::ThreadPool,
    ledger: Ledger,
}

impl Context<'_> {
    /// Run `trials` independent trials in parallel and keep the successful
    /// ones in trial order.
    fn trials<T: Send>(
        &mut self,
        label: &str,
        trials: usize,
        f: impl Fn(u64) -> Result<T> + Sync,
    ) -> Result<Vec<(u64, T)>> {
        let results: Vec<(u64, Result<T>)> = self.pool.install(|| {
            (0..trials as u64)
                .into_par_iter()
                .map(|k| (k, f(k)))
                .collect()
        });
        let mut ok = Vec::with_capacity(results.len());
        for (k, r) in results {
            self.ledger.attempted += 1;
            match r {
                Ok(v) => ok.push((k, v)),
                Err(e) => {
                    self.ledger.failed += 1;
                    if self.ledger.messages.len() < MAX_FAILURE_MESSAGES {
                        self.ledger.messages.push(format!("{label} trial {k}: {e}"));
                    }
                }
            }
        }
        if ok.len() < 2 {
            return Err(RmtError::numeric(format!(
                "{label}: only {} of {trials} trials succeeded",
                ok.len()
            )));
        }
        Ok(ok)
    }

    /// Spectra of `ensemble` at dimension `n`, mapped through `f`.
    fn spectra<T: Send>(
        &mut self,
        role: &str,
        ensemble: &EnsembleSpec,
        n: usize,
        trials: usize,
        f: impl Fn(&Spectrum) -> Result<T> + Sync,
    ) -> Result<Vec<(u64, T)>> {
        let tau0 = self.config.tau0();
        let seq = self.seq;
        self.trials(role, trials, |k| {
            let mut rng = seq.named(&format!("{role}/n={n}"), k);
            f(&ensemble.sample_spectrum(n, tau0, &mut rng)?)
        })
    }

    fn cumulants(&self, ensemble: &EnsembleSpec) -> Result<CumulantSummary> {
        ensemble
            .cumulants(self.config.n, self.config.tau0())?
            .ok_or_else(|| RmtError::config(format!("{} has no Wigner cumulants", ensemble.name())))
    }
}

fn column<T: Copy>(rows: &[(u64, T)]) -> Vec<T> {
    rows.iter().map(|r| r.1).collect()
}

fn table(name: &str, columns: &[&str], integer_columns: usize, rows: Vec<Vec<f64>>) -> RawTable {
    RawTable {
        name: name.into(),
        columns: columns.iter().map(|c| c.to_string()).collect(),
        integer_columns,
        rows,
    }
}

type Outcome = Result<(Vec<StatisticReport>, Vec<RawTable>)>;

fn single_eigenvalue_clt(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let cum = ctx.cumulants(&cfg.ensemble)?;
    let energy = cfg.energy.unwrap_or(0.0);
    let mut sizes = vec![cfg.n];
    sizes.extend(cfg.n_sweep.iter().copied());
    sizes.sort_unstable();
    sizes.dedup();
    let mut stats = Vec::new();
    let mut tables = Vec::new();
    let mut trend = Vec::new();
    for &n in &sizes {
        let i = cfg.resolved_index(n)?;
        let gamma = classical_locations(n)?.location(i);
        let (_, scale) = gustavsson_scaling(gamma, n, 1.0, Family::Wigner)?;
        let shift = single_eigenvalue_mean(gamma, cum.s4, cum.a2)? / n as f64;
        let kappa = cfg.kappa;
        let rows = ctx.spectra("spectrum", &cfg.ensemble, n, cfg.trials, |s| {
            let z = (s.eigenvalue(i) - gamma - shift) / scale;
            Ok((z, counting_z_score(s, energy, kappa)?))
        })?;
        let z: Vec<f64> = rows.iter().map(|r| r.1 .0).collect();
        let mv = estimate_mean_var(&z)?;
        let std = mv.variance.sqrt();
        trend.push((n, std));
        if n == cfg.n {
            let (ks, _) = ks_normal(&z)?;
            let mut ks_row = StatisticReport::info("eigenvalue_ks", ks);
            ks_row.ks_distance = Some(ks);
            stats.push(ks_row.judged(Check::AtMost {
                tolerance: cfg.tolerance("ks"),
            }));
            stats.push(
                StatisticReport::info("eigenvalue_std", std)
                    .with_se(mv.se_variance / (2.0 * std))
                    .with_theory(1.0)
                    .judged(Check::Relative {
                        tolerance: cfg.tolerance("std_rel"),
                    }),
            );
            stats.push(
                StatisticReport::info("eigenvalue_mean_z", mv.mean)
                    .with_se(mv.se_mean)
                    .with_theory(0.0),
            );
            let c: Vec<f64> = rows.iter().map(|r| r.1 .1).collect();
            let cmv = estimate_mean_var(&c)?;
            let centred: Vec<f64> = c.iter().map(|v| v - cmv.mean).collect();
            let (cks, _) = ks_normal(&centred)?;
            let mut row = StatisticReport::info("counting_ks", cks);
            row.ks_distance = Some(cks);
            stats.push(row.judged(Check::AtMost {
                tolerance: cfg.tolerance("counting_ks"),
            }));
            stats.push(
                StatisticReport::info("counting_std", cmv.variance.sqrt())
                    .with_se(cmv.se_variance / (2.0 * cmv.variance.sqrt().max(1e-300)))
                    .with_theory(1.0),
            );
            tables.push(table(
                "single_eigenvalue",
                &["trial", "z", "counting_z"],
                1,
                rows.iter()
                    .map(|(k, (a, b))| vec![*k as f64, *a, *b])
                    .collect(),
            ));
        }
    }
    if sizes.len() > 1 {
        for &(n, std) in &trend {
            stats.push(StatisticReport::info(format!("eigenvalue_std_n{n}"), std).with_theory(1.0));
        }
        let toward = trend
            .windows(2)
            .all(|w| (w[1].1 - 1.0).abs() < (w[0].1 - 1.0).abs());
        stats.push(
            StatisticReport::info("eigenvalue_std_trend", if toward { 1.0 } else { 0.0 })
                .judged(Check::TowardOne),
        );
    }
    Ok((stats, tables))
}

fn counting_clt(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let energy = cfg.energy.unwrap_or(0.0);
    let kappa = cfg.kappa;
    let rows = ctx.spectra("spectrum", &cfg.ensemble, cfg.n, cfg.trials, |s| {
        counting_z_score(s, energy, kappa)
    })?;
    let c = column(&rows);
    let mv = estimate_mean_var(&c)?;
    let centred: Vec<f64> = c.iter().map(|v| v - mv.mean).collect();
    let (ks, _) = ks_normal(&centred)?;
    let mut row = StatisticReport::info("counting_ks", ks);
    row.ks_distance = Some(ks);
    let stats = vec![
        row.judged(Check::AtMost {
            tolerance: cfg.tolerance("counting_ks"),
        }),
        StatisticReport::info("counting_std", mv.variance.sqrt()).with_theory(1.0),
        StatisticReport::info("counting_mean", mv.mean)
            .with_se(mv.se_mean)
            .with_theory(0.0),
    ];
    let t = table(
        "counting",
        &["trial", "counting_z"],
        1,
        rows.iter().map(|(k, v)| vec![*k as f64, *v]).collect(),
    );
    Ok((stats, vec![t]))
}

/// `N (lambda_i - gamma_i)` for `ensemble`.
fn scaled_deviation(
    ctx: &mut Context,
    role: &str,
    ensemble: &EnsembleSpec,
) -> Result<Vec<(u64, f64)>> {
    let n = ctx.config.n;
    let i = ctx.config.resolved_index(n)?;
    let gamma = classical_locations(n)?.location(i);
    ctx.spectra(role, ensemble, n, ctx.config.trials, |s| {
        Ok(n as f64 * (s.eigenvalue(i) - gamma))
    })
}

fn mean_expansion_experiment(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let n = cfg.n;
    let gamma = classical_locations(n)?.location(cfg.resolved_index(n)?);
    let cum = ctx.cumulants(&cfg.ensemble)?;
    let theory = single_eigenvalue_mean(gamma, cum.s4, cum.a2)?;
    let main = scaled_deviation(ctx, "spectrum", &cfg.ensemble)?;
    let mv = estimate_mean_var(&column(&main))?;
    let mut stats = vec![];
    let mut main_row = StatisticReport::info("scaled_mean", mv.mean)
        .with_se(mv.se_mean)
        .with_theory(theory);
    let mut tables = vec![table(
        "scaled_deviation",
        &["trial", "n_times_deviation"],
        1,
        main.iter().map(|(k, v)| vec![*k as f64, *v]).collect(),
    )];
    match &cfg.reference {
        None => {
            main_row = main_row.judged(Check::AbsZ {
                tolerance: cfg.tolerance("mean_z"),
            });
            stats.push(main_row);
        }
        Some(reference) => {
            stats.push(main_row);
            let rc = ctx.cumulants(reference)?;
            let rtheory = single_eigenvalue_mean(gamma, rc.s4, rc.a2)?;
            let rows = scaled_deviation(ctx, "reference", reference)?;
            let rmv = estimate_mean_var(&column(&rows))?;
            stats.push(
                StatisticReport::info("reference_scaled_mean", rmv.mean)
                    .with_se(rmv.se_mean)
                    .with_theory(rtheory),
            );
            stats.push(
                StatisticReport::info("difference", mv.mean - rmv.mean)
                    .with_se(mv.se_mean.hypot(rmv.se_mean))
                    .with_theory(theory - rtheory)
                    .judged(Check::AbsZ {
                        tolerance: cfg.tolerance("difference_z"),
                    }),
            );
            tables.push(table(
                "reference_scaled_deviation",
                &["trial", "n_times_deviation"],
                1,
                rows.iter().map(|(k, v)| vec![*k as f64, *v]).collect(),
            ));
        }
    }
    stats.push(StatisticReport::info("gamma_i", gamma));
    Ok((stats, tables))
}

fn variance_shift(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let n = cfg.n;
    let i = cfg.resolved_index(n)?;
    let gamma = classical_locations(n)?.location(i);
    let reference = cfg.reference.clone().expect("validated");
    let (mc, rc) = (ctx.cumulants(&cfg.ensemble)?, ctx.cumulants(&reference)?);
    let theory = single_eigenvalue_variance_shift(gamma, mc.s4, mc.a2, n)?
        - single_eigenvalue_variance_shift(gamma, rc.s4, rc.a2, n)?;
    // The cumulant terms evaluated at the limiting indicator.
    let n2 = (n as f64).powi(2);
    let alternative = (mc.s4 - rc.s4) * gamma * gamma / (2.0 * n2) + (mc.a2 - rc.a2) / n2;
    let main = ctx.spectra("spectrum", &cfg.ensemble, n, cfg.trials, |s| {
        Ok(s.eigenvalue(i))
    })?;
    let refr = ctx.spectra("reference", &reference, n, cfg.trials, |s| {
        Ok(s.eigenvalue(i))
    })?;
    let (a, b) = (
        estimate_mean_var(&column(&main))?,
        estimate_mean_var(&column(&refr))?,
    );
    let stats = vec![
        StatisticReport::info("variance", a.variance).with_se(a.se_variance),
        StatisticReport::info("reference_variance", b.variance).with_se(b.se_variance),
        StatisticReport::info("variance_difference", a.variance - b.variance)
            .with_se(a.se_variance.hypot(b.se_variance))
            .with_theory(theory)
            .judged(Check::AbsZ {
                tolerance: cfg.tolerance("difference_z"),
            }),
        StatisticReport::info(
            "variance_difference_vs_indicator_limit",
            a.variance - b.variance,
        )
        .with_se(a.se_variance.hypot(b.se_variance))
        .with_theory(alternative),
        StatisticReport::info("gamma_i", gamma),
    ];
    let rows = main
        .iter()
        .zip(&refr)
        .map(|((k, x), (_, y))| vec![*k as f64, *x, *y])
        .collect();
    Ok((
        stats,
        vec![table(
            "eigenvalue",
            &["trial", "lambda_i", "reference_lambda_i"],
            1,
            rows,
        )],
    ))
}

fn linear_statistic_variance(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let f = cfg.test_function.as_ref().expect("validated").build()?;
    let cum = ctx.cumulants(&cfg.ensemble)?;
    let var_theory = variance_functional(&f, cum.s4, cum.a2)?;
    let mean_theory = mean_expansion(&f, cum.s4, cum.a2, cfg.n)?;
    let rows = ctx.spectra("spectrum", &cfg.ensemble, cfg.n, cfg.trials, |s| {
        Ok(linear_statistic(s, &f))
    })?;
    let mv = estimate_mean_var(&column(&rows))?;
    let stats = vec![
        StatisticReport::info("variance", mv.variance)
            .with_se(mv.se_variance)
            .with_theory(var_theory.total)
            .judged(Check::Relative {
                tolerance: cfg.tolerance("variance_rel"),
            }),
        StatisticReport::info("mean_correction", mv.mean - mean_theory.leading)
            .with_se(mv.se_mean)
            .with_theory(mean_theory.corrections())
            .judged(Check::AbsZ {
                tolerance: cfg.tolerance("mean_z"),
            }),
        StatisticReport::info(
            "theory_double_integral_term",
            var_theory.double_integral_term,
        ),
        StatisticReport::info("theory_a2_term", var_theory.a2_term),
        StatisticReport::info("theory_s4_term", var_theory.s4_term),
        StatisticReport::info("theory_arcsine_term", mean_theory.arcsine_term),
        StatisticReport::info("theory_edge_term", mean_theory.edge_term),
        StatisticReport::info("theory_mean_a2_term", mean_theory.a2_term),
        StatisticReport::info("theory_mean_s4_term", mean_theory.s4_term),
    ];
    let t = table(
        "linear_statistic",
        &["trial", "trace_f"],
        1,
        rows.iter().map(|(k, v)| vec![*k as f64, *v]).collect(),
    );
    Ok((stats, vec![t]))
}

fn mesoscopic_clt(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let f = cfg.test_function.as_ref().expect("validated").build()?;
    let alpha = cfg.alpha.expect("validated");
    let energy = cfg.energy.unwrap_or(0.0);
    let theory = mesoscopic_variance(&f, 1.0 / cfg.ensemble.beta())?;
    let rows = ctx.spectra("spectrum", &cfg.ensemble, cfg.n, cfg.trials, |s| {
        mesoscopic_statistic(s, &f, energy, alpha)
    })?;
    let v = column(&rows);
    let mv = estimate_mean_var(&v)?;
    let z: Vec<f64> = v.iter().map(|x| (x - mv.mean) / theory.sqrt()).collect();
    let (ks, _) = ks_normal(&z)?;
    let mut ks_row = StatisticReport::info("ks", ks);
    ks_row.ks_distance = Some(ks);
    let stats = vec![
        StatisticReport::info("variance", mv.variance)
            .with_se(mv.se_variance)
            .with_theory(theory)
            .judged(Check::Relative {
                tolerance: cfg.tolerance("variance_rel"),
            }),
        ks_row.judged(Check::AtMost {
            tolerance: cfg.tolerance("ks"),
        }),
    ];
    let t = table(
        "mesoscopic",
        &["trial", "statistic"],
        1,
        rows.iter().map(|(k, v)| vec![*k as f64, *v]).collect(),
    );
    Ok((stats, vec![t]))
}

fn beta_clt(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let n = cfg.n;
    let i = cfg.resolved_index(n)?;
    let gamma = classical_locations(n)?.location(i);
    let betas = if cfg.betas.is_empty() {
        vec![cfg.ensemble.beta()]
    } else {
        cfg.betas.clone()
    };
    let mut stats = Vec::new();
    let mut tables = Vec::new();
    let mut beta_one = None;
    for &beta in &betas {
        let ensemble = match &cfg.ensemble {
            EnsembleSpec::BetaGibbs {
                potential, steps, ..
            } => EnsembleSpec::BetaGibbs {
                beta,
                potential: potential.clone(),
                steps: *steps,
            },
            _ => EnsembleSpec::BetaHermite { beta },
        };
        let (_, scale) = gustavsson_scaling(gamma, n, beta, Family::Beta)?;
        let rows = ctx.spectra(&format!("beta={beta}"), &ensemble, n, cfg.trials, |s| {
            Ok((s.eigenvalue(i) - gamma) / scale)
        })?;
        let z = column(&rows);
        let mv = estimate_mean_var(&z)?;
        let std = mv.variance.sqrt();
        stats.push(
            StatisticReport::info(format!("std_beta{beta}"), std)
                .with_se(mv.se_variance / (2.0 * std))
                .with_theory(1.0)
                .judged(Check::Relative {
                    tolerance: cfg.tolerance("std_rel"),
                }),
        );
        tables.push(table(
            &format!("beta{beta}"),
            &["trial", "z"],
            1,
            rows.iter().map(|(k, v)| vec![*k as f64, *v]).collect(),
        ));
        if beta == 1.0 {
            beta_one = Some((z, scale));
        }
    }
    if let (Some(reference), Some((z, scale))) = (&cfg.reference, beta_one) {
        let rows = ctx.spectra("reference", reference, n, cfg.trials, |s| {
            Ok((s.eigenvalue(i) - gamma) / scale)
        })?;
        let (d, _) = ks_two_sample(&z, &column(&rows))?;
        let mut row = StatisticReport::info("ks_two_sample_beta1", d);
        row.ks_distance = Some(d);
        stats.push(row.judged(Check::AtMost {
            tolerance: cfg.tolerance("ks_two_sample"),
        }));
    }
    Ok((stats, tables))
}

fn dbm_homogenization(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let n = cfg.n;
    let tau0 = cfg.tau0();
    let t1 = (n as f64).powf(-tau0) / 2.0;
    let i = cfg.resolved_index(n)?;
    let gamma = classical_locations(n)?.location(i);
    let phi = build_homogenization_observable(gamma, t1, cfg.eps1.unwrap_or(0.05), n)?;
    let dt = cfg.dt.unwrap_or_else(|| default_dt(n, t1));
    let reference = cfg.reference.clone().unwrap_or(EnsembleSpec::Goe);
    let ensemble = cfg.ensemble.clone();
    let seq = ctx.seq;
    let couplings = ctx.trials("coupling", cfg.trials, |k| {
        let mut rng = seq.named(&format!("spectrum/n={n}"), k);
        let x0 = ensemble.sample_spectrum(n, tau0, &mut rng)?;
        let y0 = reference.sample_spectrum(n, tau0, &mut rng)?;
        let noise_seed = seq.named(&format!("dbm-noise/n={n}"), k).next_u64();
        let c = run_coupling_with_dt(&x0, &y0, t1, noise_seed, dt)?;
        let s = homogenization_sample(&c, i, &phi)?;
        Ok((s, c.y.positions.iter().sum::<f64>()))
    })?;
    let d: Vec<f64> = couplings.iter().map(|(_, (s, _))| s.x_i - s.y_i).collect();
    let p: Vec<f64> = couplings
        .iter()
        .map(|(_, (s, _))| (s.zeta_x - s.zeta_y) / n as f64)
        .collect();
    let corr = correlation(&d, &p)?;
    let ratio = rms(&d.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>()) / rms(&d);

    // GOE started trajectories: marginal invariance and barycenter variance.
    let mn = cfg.marginal_n.unwrap_or(200);
    let mm = cfg.marginal_trials.unwrap_or(300);
    let mt1 = (mn as f64).powf(-tau0) / 2.0;
    let mdt = default_dt(mn, mt1);
    // marginal_trials = 0 skips this part, e.g. for the raw coupling dump.
    let marginal = if mm == 0 {
        Vec::new()
    } else {
        ctx.trials("marginal", mm, |k| {
            let mut rng = seq.named(&format!("marginal/n={mn}"), k);
            let y0 = EnsembleSpec::Goe.sample_spectrum(mn, tau0, &mut rng)?;
            let mut y = DBMState::from_spectrum(&y0)?;
            let mut noise = seq.named(&format!("marginal-noise/n={mn}"), k);
            evolve(&mut [&mut y], mt1, mdt, &mut noise)?;
            Ok((y0.into_values(), y.positions))
        })?
    };
    let traces: Vec<f64> = couplings
        .iter()
        .map(|(_, (_, tr))| *tr)
        .chain(marginal.iter().map(|(_, (_, b))| b.iter().sum::<f64>()))
        .collect();
    let bary = estimate_mean_var(&traces)?;

    let mut stats = vec![
        StatisticReport::info("correlation", corr).judged(Check::AtLeast {
            tolerance: cfg.tolerance("correlation_min"),
        }),
        StatisticReport::info("residual_rms_ratio", ratio).judged(Check::AtMost {
            tolerance: cfg.tolerance("residual_ratio_max"),
        }),
    ];
    if !marginal.is_empty() {
        let before: Vec<f64> = marginal
            .iter()
            .flat_map(|(_, (a, _))| a.iter().copied())
            .collect();
        let after: Vec<f64> = marginal
            .iter()
            .flat_map(|(_, (_, b))| b.iter().copied())
            .collect();
        let (ks, _) = ks_two_sample(&before, &after)?;
        let mut ks_row = StatisticReport::info("marginal_ks", ks);
        ks_row.ks_distance = Some(ks);
        stats.push(ks_row.judged(Check::AtMost {
            tolerance: cfg.tolerance("marginal_ks"),
        }));
    }
    stats.extend([
        StatisticReport::info("barycenter_variance", bary.variance)
            .with_se(bary.se_variance)
            .with_theory(2.0)
            .judged(Check::Relative {
                tolerance: cfg.tolerance("barycenter_rel"),
            }),
        StatisticReport::info("t1", t1),
        StatisticReport::info("gamma_i", gamma),
    ]);
    let rows = couplings
        .iter()
        .map(|(k, (s, _))| {
            vec![
                *k as f64, i as f64, s.x_i, s.y_i, s.zeta_x, s.zeta_y, s.residual,
            ]
        })
        .collect();
    let t = table(
        "dbm",
        &[
            "trial", "i", "x_i(t1)", "y_i(t1)", "zeta_x", "zeta_y", "residual",
        ],
        2,
        rows,
    );
    Ok((stats, vec![t]))
}

/// Default partial-statistic observable: a cubic B-spline bump shifted to
/// vanish at the threshold.
pub fn default_partial_function(u: f64) -> TestFunctionSpec {
    TestFunctionSpec::CubicSpline {
        center: 0.0,
        width: 0.25,
        vanish_at: Some(u),
    }
}

fn bpz_partial(ctx: &mut Context) -> Outcome {
    let cfg = ctx.config;
    let u = cfg.threshold.unwrap_or(0.3);
    let omega = cfg.omega.unwrap_or(0.05);
    let spec = cfg
        .test_function
        .clone()
        .unwrap_or_else(|| default_partial_function(u));
    let f = spec.build()?;
    let fu = f.evaluate(u);
    if fu.abs() > 1e-12 {
        return Err(RmtError::config(format!(
            "partial statistic needs f(u) = 0, got {fu}"
        )));
    }
    let ramp = (cfg.n as f64).powf(omega - 1.0);
    let smoothed = f.clone().partial_cutoff(u, ramp)?;
    let cum = ctx.cumulants(&cfg.ensemble)?;
    let theory = variance_functional(&smoothed, cum.s4, cum.a2)?;
    let rows = ctx.spectra("spectrum", &cfg.ensemble, cfg.n, cfg.trials, |s| {
        Ok(partial_linear_statistic(s, &f, u))
    })?;
    let mv = estimate_mean_var(&column(&rows))?;
    let stats = vec![
        StatisticReport::info("variance", mv.variance)
            .with_se(mv.se_variance)
            .with_theory(theory.total)
            .judged(Check::Relative {
                tolerance: cfg.tolerance("variance_rel"),
            }),
        StatisticReport::info("mean", mv.mean).with_se(mv.se_mean),
        StatisticReport::info("ramp_width", ramp),
    ];
    let t = table(
        "partial",
        &["trial", "partial_statistic"],
        1,
        rows.iter().map(|(k, v)| vec![*k as f64, *v]).collect(),
    );
    Ok((stats, vec![t]))
}

// ---------------------------------------------------------------- estimators

/// Sample mean and unbiased variance with delete-1 jackknife errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    /// `NaN` with fewer than three samples.
    pub se_variance: f64,
}

pub fn estimate_mean_var(samples: &[f64]) -> Result<MeanVar> {
    let m = samples.len();
    if m < 2 {
        return Err(RmtError::domain(format!("{m} samples; need at least 2")));
    }
    let mf = m as f64;
    let mean = crate::mesostat::compensated_sum(samples.iter().copied()) / mf;
    let ss = crate::mesostat::compensated_sum(samples.iter().map(|x| (x - mean).powi(2)));
    let variance = ss / (mf - 1.0);
    // The jackknife SE of the mean reduces to s / sqrt(m).
    let se_mean = (variance / mf).sqrt();
    let se_variance = if m < 3 {
        f64::NAN
    } else {
        let loo: Vec<f64> = samples
            .iter()
            .map(|x| (ss - mf / (mf - 1.0) * (x - mean).powi(2)) / (mf - 2.0))
            .collect();
        let bar = crate::mesostat::compensated_sum(loo.iter().copied()) / mf;
        let dev = crate::mesostat::compensated_sum(loo.iter().map(|v| (v - bar).powi(2)));
        ((mf - 1.0) / mf * dev).sqrt()
    };
    Ok(MeanVar {
        mean,
        variance,
        se_mean,
        se_variance,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS distance to the standard normal and its asymptotic p-value.
pub fn ks_normal(samples: &[f64]) -> Result<(f64, f64)> {
    let m = samples.len();
    if m < 50 {
        return Err(RmtError::domain(format!(
            "{m} samples; KS needs at least 50"
        )));
    }
    let mut x = samples.to_vec();
    if x.iter().any(|v| v.is_nan()) {
        return Err(RmtError::domain("NaN sample"));
    }
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mf = m as f64;
    let mut d = 0.0f64;
    for (k, &v) in x.iter().enumerate() {
        let c = normal_cdf(v);
        d = d.max((k + 1) as f64 / mf - c).max(c - k as f64 / mf);
    }
    let sq = mf.sqrt();
    Ok((d, kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d)))
}

/// Two-sample KS distance and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(RmtError::domain(
            "two-sample KS needs at least 2 samples per side",
        ));
    }
    let sorted = |v: &[f64]| -> Result<Vec<f64>> {
        if v.iter().any(|x| x.is_nan()) {
            return Err(RmtError::domain("NaN sample"));
        }
        let mut v = v.to_vec();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Ok(v)
    };
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    Ok((d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d)))
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(RmtError::domain(
            "correlation needs two equal-length samples",
        ));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    Ok(cov / (va * vb).sqrt())
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Lag-1 autocorrelation of a per-trial series.
pub fn lag_one_autocorrelation(v: &[f64]) -> Result<f64> {
    if v.len() < 3 {
        return Err(RmtError::domain("autocorrelation needs at least 3 samples"));
    }
    correlation(&v[..v.len() - 1], &v[1..])
}

/// `(N(E) - N F(E)) pi / sqrt(log N)` scaling used by the counting CLT,
/// exposed for the command line.
pub fn counting_scale(n: usize) -> f64 {
    PI / (n as f64).ln().sqrt()
}

/// Classical location of the tracked eigenvalue, for reports and the CLI.
pub fn tracked_location(config: &ExperimentConfig) -> Result<f64> {
    Ok(semicircle::classical_locations(config.n)?.location(config.resolved_index(config.n)?))
}

//! Random matrix samplers: Wigner matrices with prescribed entry laws,
//! Gaussian-divisible matrices, beta-Hermite tridiagonal matrices, and a
//! Metropolis sampler for general one-dimensional log-gases.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmtError};
use crate::semicircle;
use crate::spectra::{SymmetricMatrix, TridiagonalMatrix};

/// Shape of a standardized (mean 0, variance 1) entry distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum LawShape {
    Gaussian,
    /// Uniform on {-1, +1}.
    Rademacher,
    /// Uniform on [-sqrt 3, sqrt 3].
    Uniform,
    /// `sqrt(q/p)` with probability `p`, `-sqrt(p/q)` otherwise (`q = 1 - p`).
    TwoPoint {
        p: f64,
    },
}

impl LawShape {
    /// (kappa_3, kappa_4) of the standardized shape.
    fn higher_cumulants(&self) -> (f64, f64) {
        match *self {
            LawShape::Gaussian => (0.0, 0.0),
            LawShape::Rademacher => (0.0, -2.0),
            LawShape::Uniform => (0.0, -1.2),
            LawShape::TwoPoint { p } => {
                let q = 1.0 - p;
                ((q - p) / (p * q).sqrt(), 1.0 / (p * q) - 6.0)
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LawShape::Gaussian => rng.sample(StandardNormal),
            LawShape::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            LawShape::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            LawShape::TwoPoint { p } => {
                let q = 1.0 - p;
                if rng.random::<f64>() < p {
                    (q / p).sqrt()
                } else {
                    -(p / q).sqrt()
                }
            }
        }
    }
}

/// Cumulants of an entry law through order four.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cumulants {
    pub variance: f64,
    pub k3: f64,
    pub k4: f64,
}

/// Distribution of a matrix entry before the `1/sqrt(N)` scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryLaw {
    pub name: String,
    pub shape: LawShape,
    /// Standard deviation multiplying the standardized shape.
    pub scale: f64,
}

impl EntryLaw {
    pub fn new(name: impl Into<String>, shape: LawShape, scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(RmtError::config(format!(
                "entry law scale {scale} is invalid"
            )));
        }
        if let LawShape::TwoPoint { p } = shape {
            if !(p > 0.0 && p < 1.0) {
                return Err(RmtError::config(format!(
                    "two-point weight {p} not in (0, 1)"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            shape,
            scale,
        })
    }

    pub fn gaussian(variance: f64) -> Self {
        let name = if variance == 1.0 {
            "gaussian".to_string()
        } else if variance == 2.0 {
            "gaussian_var2".to_string()
        } else {
            format!("gaussian_var{variance}")
        };
        Self {
            name,
            shape: LawShape::Gaussian,
            scale: variance.sqrt(),
        }
    }

    pub fn rademacher() -> Self {
        Self {
            name: "rademacher".into(),
            shape: LawShape::Rademacher,
            scale: 1.0,
        }
    }

    pub fn uniform() -> Self {
        Self {
            name: "uniform".into(),
            shape: LawShape::Uniform,
            scale: 1.0,
        }
    }

    pub fn two_point_skewed() -> Self {
        Self {
            name: "two_point_skewed".into(),
            shape: LawShape::TwoPoint { p: 0.2 },
            scale: 1.0,
        }
    }

    /// Catalog lookup by name.
    pub fn from_name(name: &str) -> Result<Self> {
        entry_law_catalog()
            .into_iter()
            .find(|l| l.name == name)
            .ok_or_else(|| RmtError::config(format!("unknown entry law `{name}`")))
    }

    pub fn cumulants(&self) -> Cumulants {
        let (k3, k4) = self.shape.higher_cumulants();
        let s = self.scale;
        Cumulants {
            variance: s * s,
            k3: k3 * s.powi(3),
            k4: k4 * s.powi(4),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * self.shape.sample(rng)
    }
}

/// Laws with closed-form cumulants; the diagonal variants differ only in
/// variance (2 gives `a_2 = 1`, 1 gives `a_2 = 0`).
pub fn entry_law_catalog() -> Vec<EntryLaw> {
    vec![
        EntryLaw::gaussian(1.0),
        EntryLaw::gaussian(2.0),
        EntryLaw::rademacher(),
        EntryLaw {
            name: "rademacher_var2".into(),
            shape: LawShape::Rademacher,
            scale: 2f64.sqrt(),
        },
        EntryLaw::uniform(),
        EntryLaw::two_point_skewed(),
    ]
}

/// Cumulants `s_k` of the off-diagonal law and `a_k` such that `s_k + a_k`
/// are the cumulants of the diagonal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantSummary {
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

/// Real symmetric Wigner matrix: `sqrt(N) H_ij ~ offdiag`, `sqrt(N) H_ii ~ diag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerSpec {
    pub n: usize,
    pub offdiag: EntryLaw,
    pub diag: EntryLaw,
}

impl WignerSpec {
    pub fn new(n: usize, offdiag: EntryLaw, diag: EntryLaw) -> Result<Self> {
        if n < 2 {
            return Err(RmtError::domain(format!("Wigner dimension {n} < 2")));
        }
        let v = offdiag.cumulants().variance;
        if (v - 1.0).abs() > 1e-12 {
            return Err(RmtError::config(format!(
                "off-diagonal law `{}` has variance {v}, expected 1",
                offdiag.name
            )));
        }
        Ok(Self { n, offdiag, diag })
    }

    /// Gaussian orthogonal ensemble (diagonal variance 2).
    pub fn goe(n: usize) -> Result<Self> {
        Self::new(n, EntryLaw::gaussian(1.0), EntryLaw::gaussian(2.0))
    }

    pub fn cumulant_summary(&self) -> CumulantSummary {
        let o = self.offdiag.cumulants();
        let d = self.diag.cumulants();
        CumulantSummary {
            s2: o.variance,
            s3: o.k3,
            s4: o.k4,
            a2: d.variance - o.variance,
            a3: d.k3 - o.k3,
            a4: d.k4 - o.k4,
        }
    }
}

/// Draw a Wigner matrix. Entries are consumed row by row over the lower
/// triangle, so the matrix is a pure function of the stream state.
pub fn sample_wigner<R: Rng + ?Sized>(spec: &WignerSpec, rng: &mut R) -> Result<SymmetricMatrix> {
    if spec.n < 2 {
        return Err(RmtError::domain(format!("Wigner dimension {} < 2", spec.n)));
    }
    let scale = 1.0 / (spec.n as f64).sqrt();
    Ok(SymmetricMatrix::from_lower(spec.n, |i, j| {
        let law = if i == j { &spec.diag } else { &spec.offdiag };
        law.sample(rng) * scale
    }))
}

/// `exp(-t0/2) X' + sqrt(1 - exp(-t0)) W` with `W` an independent GOE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDivisibleSpec {
    pub base: WignerSpec,
    pub t0: f64,
}

impl GaussianDivisibleSpec {
    pub fn new(base: WignerSpec, t0: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0 < 1.0) {
            return Err(RmtError::domain(format!(
                "Gaussian component size {t0} not in (0, 1)"
            )));
        }
        Ok(Self { base, t0 })
    }
}

pub fn sample_gaussian_divisible<R: Rng + ?Sized>(
    spec: &GaussianDivisibleSpec,
    rng: &mut R,
) -> Result<SymmetricMatrix> {
    if !(spec.t0 > 0.0 && spec.t0 < 1.0) {
        return Err(RmtError::domain(format!(
            "Gaussian component size {} not in (0, 1)",
            spec.t0
        )));
    }
    let x = sample_wigner(&spec.base, rng)?;
    let w = sample_wigner(&WignerSpec::goe(spec.base.n)?, rng)?;
    x.combine((-spec.t0 / 2.0).exp(), &w, (-(-spec.t0).exp_m1()).sqrt())
}

/// Gaussian beta-ensemble normalised to equilibrium support [-2, 2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaHermiteSpec {
    pub n: usize,
    pub beta: f64,
}

/// Tridiagonal beta-Hermite model: diagonal `N(0, 2/(beta n))`, k-th
/// off-diagonal `chi_{beta (n-k)} / sqrt(beta n)`.
pub fn sample_beta_hermite<R: Rng + ?Sized>(
    spec: &BetaHermiteSpec,
    rng: &mut R,
) -> Result<TridiagonalMatrix> {
    let BetaHermiteSpec { n, beta } = *spec;
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(RmtError::domain(format!("beta = {beta} < 1")));
    }
    if n < 2 {
        return Err(RmtError::domain(format!("beta-Hermite dimension {n} < 2")));
    }
    let bn = beta * n as f64;
    let dscale = (2.0 / bn).sqrt();
    let diag: Vec<f64> = (0..n)
        .map(|_| dscale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let offdiag = (1..n)
        .map(|k| {
            let dof = beta * (n - k) as f64;
            let chi2 = ChiSquared::new(dof)
                .map_err(|e| RmtError::numeric(format!("chi-square({dof}): {e}")))?;
            Ok(chi2.sample(rng).sqrt() / bn.sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    TridiagonalMatrix::new(diag, offdiag)
}

/// Confining potential `V` given by polynomial coefficients
/// `c_0 + c_1 x + c_2 x^2 + ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    coeffs: Vec<f64>,
}

impl Potential {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        let degree = coeffs.len().saturating_sub(1);
        if degree < 2 || degree % 2 == 1 || coeffs[degree] <= 0.0 {
            return Err(RmtError::config(format!(
                "potential with coefficients {coeffs:?} is not confining"
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RmtError::config("non-finite potential coefficient"));
        }
        Ok(Self { coeffs })
    }

    /// `V(x) = x^2 / 2`, whose equilibrium measure is the semicircle.
    pub fn hermite() -> Self {
        Self {
            coeffs: vec![0.0, 0.0, 0.5],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }
}

/// Sweeps discarded before a Metropolis chain is considered mixed.
pub fn mcmc_burn_in(n: usize) -> usize {
    10 * n
}

/// One approximate draw from the beta-ensemble with potential `V` by
/// single-particle Metropolis sweeps on `-beta N H`.
///
/// Each particle proposes a Gaussian move whose scale is the local spacing
/// measured from its neighbours (which the move cannot change), so the
/// proposal is symmetric. Moves that would cross a neighbour are rejected.
pub fn sample_beta_gibbs_mcmc<R: Rng + ?Sized>(
    potential: &Potential,
    beta: f64,
    n: usize,
    rng: &mut R,
    steps: usize,
) -> Result<Vec<f64>> {
    if !(beta >= 1.0) {
        return Err(RmtError::domain(format!("beta = {beta} < 1")));
    }
    if n < 2 {
        return Err(RmtError::domain("log-gas needs at least two particles"));
    }
    let burn = mcmc_burn_in(n);
    if steps < burn {
        return Err(RmtError::config(format!(
            "{steps} sweeps is below the burn-in of {burn}"
        )));
    }
    let nf = n as f64;
    let mut x: Vec<f64> = (0..n)
        .map(|i| semicircle::quantile((i as f64 + 0.5) / nf))
        .collect::<Result<_>>()?;
    for _ in 0..steps {
        for i in 0..n {
            let spacing = if n == 2 {
                1.0 / nf
            } else if i == 0 {
                x[2] - x[1]
            } else if i == n - 1 {
                x[n - 2] - x[n - 3]
            } else {
                0.5 * (x[i + 1] - x[i - 1])
            };
            let proposal = x[i] + spacing * rng.sample::<f64, _>(StandardNormal);
            let lo = if i > 0 { x[i - 1] } else { f64::NEG_INFINITY };
            let hi = if i + 1 < n { x[i + 1] } else { f64::INFINITY };
            if !(proposal > lo && proposal < hi) {
                continue;
            }
            let old = x[i];
            let mut delta = -0.5 * beta * nf * (potential.value(proposal) - potential.value(old));
            for (j, &xj) in x.iter().enumerate() {
                if j != i {
                    delta += beta * ((proposal - xj).abs().ln() - (old - xj).abs().ln());
                }
            }
            if delta >= 0.0 || rng.random::<f64>() < delta.exp() {
                x[i] = proposal;
            }
        }
    }
    debug_assert!(x.windows(2).all(|w| w[0] < w[1]));
    Ok(x)
}

/// Density of the equilibrium measure at the origin for `V(x) = x^2/2`.
pub fn hermite_density_at_origin() -> f64 {
    1.0 / PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn catalog_cumulants() {
        let r = EntryLaw::rademacher().cumulants();
        assert_eq!((r.variance, r.k3, r.k4), (1.0, 0.0, -2.0));
        let g = EntryLaw::gaussian(1.0).cumulants();
        assert_eq!((g.k3, g.k4), (0.0, 0.0));
        let u = EntryLaw::uniform().cumulants();
        assert!((u.k4 + 6.0 / 5.0).abs() < 1e-15);
        let t = EntryLaw::two_point_skewed().cumulants();
        assert!(t.k3.abs() > 0.5);
        assert!((t.variance - 1.0).abs() < 1e-15);
        let d = EntryLaw::from_name("gaussian_var2").unwrap().cumulants();
        assert!((d.variance - 2.0).abs() < 1e-15);
    }

    #[test]
    fn goe_summary() {
        let s = WignerSpec::goe(10).unwrap().cumulant_summary();
        assert_eq!((s.s2, s.s3, s.s4), (1.0, 0.0, 0.0));
        assert!((s.a2 - 1.0).abs() < 1e-15);
        assert_eq!((s.a3, s.a4), (0.0, 0.0));
    }

    #[test]
    fn wigner_is_symmetric_and_deterministic() {
        let spec = WignerSpec::goe(12).unwrap();
        let a = sample_wigner(&spec, &mut rng_from_seed(1)).unwrap();
        let b = sample_wigner(&spec, &mut rng_from_seed(1)).unwrap();
        assert_eq!(a, b);
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(a.get(i, j).to_bits(), a.get(j, i).to_bits());
            }
        }
        assert!(sample_wigner(&WignerSpec { n: 1, ..spec }, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn rademacher_support() {
        let spec = WignerSpec::new(9, EntryLaw::rademacher(), EntryLaw::gaussian(2.0)).unwrap();
        let m = sample_wigner(&spec, &mut rng_from_seed(4)).unwrap();
        let s = 1.0 / 3.0;
        for i in 0..9 {
            for j in 0..i {
                assert!(m.get(i, j) == s || m.get(i, j) == -s);
            }
        }
    }

    #[test]
    fn off_diagonal_variance_must_be_one() {
        assert!(WignerSpec::new(5, EntryLaw::gaussian(2.0), EntryLaw::gaussian(2.0)).is_err());
    }

    #[test]
    fn gaussian_divisible_continuity_at_zero() {
        let base = WignerSpec::new(40, EntryLaw::rademacher(), EntryLaw::gaussian(2.0)).unwrap();
        let t0 = 1e-8;
        let spec = GaussianDivisibleSpec::new(base.clone(), t0).unwrap();
        let x = sample_gaussian_divisible(&spec, &mut rng_from_seed(8)).unwrap();
        let x0 = sample_wigner(&base, &mut rng_from_seed(8)).unwrap();
        let rms = (x
            .as_slice()
            .iter()
            .zip(x0.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 1600.0)
            .sqrt();
        assert!(rms <= t0.sqrt(), "{rms}");
        assert!(GaussianDivisibleSpec::new(base.clone(), 1.0).is_err());
        assert!(GaussianDivisibleSpec::new(base, 0.0).is_err());
    }

    #[test]
    fn beta_hermite_shape() {
        let t = sample_beta_hermite(&BetaHermiteSpec { n: 50, beta: 2.0 }, &mut rng_from_seed(2))
            .unwrap();
        assert_eq!(t.n(), 50);
        assert!(t.offdiag.iter().all(|&e| e > 0.0));
        assert!(
            sample_beta_hermite(&BetaHermiteSpec { n: 50, beta: 0.5 }, &mut rng_from_seed(2))
                .is_err()
        );
    }

    #[test]
    fn potential_checks() {
        let v = Potential::hermite();
        assert_eq!(v.value(2.0), 2.0);
        assert_eq!(v.derivative(3.0), 3.0);
        assert!(Potential::polynomial(vec![0.0, 1.0]).is_err());
        assert!(Potential::polynomial(vec![0.0, 0.0, -1.0]).is_err());
        assert!(Potential::polynomial(vec![0.0, 0.0, 0.0, 1.0]).is_err());
        let q = Potential::polynomial(vec![0.0, 0.0, -0.5, 0.0, 0.25]).unwrap();
        assert!((q.derivative(1.0) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn mcmc_output_is_ordered_and_checks_steps() {
        let v = Potential::hermite();
        let x = sample_beta_gibbs_mcmc(&v, 2.0, 20, &mut rng_from_seed(3), 200).unwrap();
        assert!(x.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_beta_gibbs_mcmc(&v, 2.0, 20, &mut rng_from_seed(3), 10).is_err());
        assert!(sample_beta_gibbs_mcmc(&v, 0.5, 20, &mut rng_from_seed(3), 200).is_err());
    }
}

//! Predictions for the fluctuation experiments: the limiting variance and
//! the 1/N mean expansion of linear statistics, the single-eigenvalue mean
//! and variance corrections, mesoscopic and beta-ensemble variances, and the
//! normalisations that make single eigenvalues asymptotically Gaussian.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::ensembles::Potential;
use crate::error::{Result, RmtError};
use crate::mesostat::TestFunction;
use crate::quadrature::{integrate_adaptive, CompositeGrid};
use crate::semicircle;

/// Nodes of the first angular rule; doubled until successive results agree.
pub const BASE_NODES: usize = 512;
/// Largest angular rule tried before giving up.
pub const MAX_NODES: usize = 16_384;
/// Relative agreement required between the last two refinements.
pub const REFINEMENT_TOL: f64 = 1e-6;

/// The three terms of the limiting variance of `sum f(lambda_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBreakdown {
    pub double_integral_term: f64,
    pub a2_term: f64,
    pub s4_term: f64,
    pub total: f64,
    /// Largest relative change between the last two refinements.
    pub refinement_error: f64,
}

/// Terms of `E[tr f(H)]` through order one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanBreakdown {
    pub leading: f64,
    pub arcsine_term: f64,
    pub edge_term: f64,
    pub a2_term: f64,
    pub s4_term: f64,
    pub total: f64,
    pub refinement_error: f64,
}

impl MeanBreakdown {
    /// Everything except `N int f rho_sc`.
    pub fn corrections(&self) -> f64 {
        self.arcsine_term + self.edge_term + self.a2_term + self.s4_term
    }
}

/// Angular grid for `x = c + r sin(theta)` with panels at the images of the
/// function's breakpoints.
struct AngularGrid {
    x: Vec<f64>,
    sin: Vec<f64>,
    weights: Vec<f64>,
}

impl AngularGrid {
    fn new(f: &TestFunction, c: f64, r: f64, total: usize) -> Self {
        let mut breaks: Vec<f64> = f.breakpoints();
        if let Some((a, b)) = f.derivative_support() {
            breaks.extend([a, b]);
        }
        let thetas: Vec<f64> = breaks
            .into_iter()
            .filter(|b| b.is_finite() && (b - c).abs() < r)
            .map(|b| ((b - c) / r).asin())
            .collect();
        let grid = CompositeGrid::new(-FRAC_PI_2, FRAC_PI_2, &thetas, total, 16);
        let sin: Vec<f64> = grid.points.iter().map(|t| t.sin()).collect();
        let x = sin.iter().map(|s| c + r * s).collect();
        Self {
            x,
            sin,
            weights: grid.weights,
        }
    }

    fn integrate(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        self.x
            .iter()
            .zip(&self.sin)
            .zip(&self.weights)
            .map(|((&x, &s), &w)| w * g(x, s))
            .sum()
    }

    /// `int int D(x, y)^2 r^2 (1 - sin(theta) sin(phi)) dtheta dphi` with
    /// `D` the difference quotient of `f`.
    fn double_integral(&self, f: &TestFunction, r: f64) -> f64 {
        let fx: Vec<f64> = self.x.iter().map(|&x| f.evaluate(x)).collect();
        let dfx: Vec<f64> = self.x.iter().map(|&x| f.derivative(x)).collect();
        let n = self.x.len();
        let mut total = 0.0;
        for k in 0..n {
            let mut row = 0.0;
            for l in 0..k {
                let dx = self.x[k] - self.x[l];
                let q = if dx.abs() <= 1e-7 * (1.0 + self.x[k].abs()) {
                    0.5 * (dfx[k] + dfx[l])
                } else {
                    (fx[k] - fx[l]) / dx
                };
                row += self.weights[l] * q * q * (1.0 - self.sin[k] * self.sin[l]);
            }
            let diag = dfx[k] * dfx[k] * (1.0 - self.sin[k] * self.sin[k]);
            total += self.weights[k] * (2.0 * row + self.weights[k] * diag);
        }
        total * r * r
    }
}

/// Rough `sup |f|` and `sup |f'|` on `[c - r, c + r]`, used to set absolute
/// floors for components that vanish by symmetry.
fn magnitudes(f: &TestFunction, c: f64, r: f64) -> (f64, f64) {
    (0..=1000).fold((0.0f64, 0.0f64), |(m, d), k| {
        let x = c + r * (-1.0 + 0.002 * k as f64);
        (m.max(f.evaluate(x).abs()), d.max(f.derivative(x).abs()))
    })
}

/// Run `eval` on grids of `BASE_NODES, 2 BASE_NODES, ...` nodes until every
/// component agrees with the previous level to `REFINEMENT_TOL`.
/// Components smaller than their `floor` are compared in absolute terms.
fn refine<const K: usize>(
    what: &str,
    floors: [f64; K],
    mut eval: impl FnMut(usize) -> [f64; K],
) -> Result<([f64; K], f64)> {
    let mut nodes = BASE_NODES;
    let mut prev = eval(nodes);
    loop {
        nodes *= 2;
        let cur = eval(nodes);
        let err = (0..K)
            .map(|k| (cur[k] - prev[k]).abs() / cur[k].abs().max(floors[k]).max(1e-300))
            .fold(0.0, f64::max);
        if err <= REFINEMENT_TOL {
            return Ok((cur, err));
        }
        if nodes >= MAX_NODES {
            return Err(RmtError::numeric(format!(
                "{what}: quadrature did not converge (relative change {err:e} at {nodes} nodes)"
            )));
        }
        prev = cur;
    }
}

/// Limiting variance of the centred linear statistic `sum f(lambda_j)` for a
/// Wigner matrix with off-diagonal fourth cumulant `s4` and diagonal variance
/// `1 + a2`.
pub fn variance_functional(f: &TestFunction, s4: f64, a2: f64) -> Result<VarianceBreakdown> {
    let (sup, dsup) = magnitudes(f, 0.0, 2.0);
    let floors = [1e-6 * dsup * dsup, 1e-6 * sup, 1e-6 * sup];
    let ([double, m_x, m_w], err) = refine("variance functional", floors, |nodes| {
        let grid = AngularGrid::new(f, 0.0, 2.0, nodes);
        let double = grid.double_integral(f, 2.0);
        // x / sqrt(4 - x^2) dx = 2 sin(theta) dtheta,
        // (2 - x^2) / sqrt(4 - x^2) dx = 2 cos(2 theta) dtheta.
        let m_x = grid.integrate(|x, s| f.evaluate(x) * 2.0 * s);
        let m_w = grid.integrate(|x, s| f.evaluate(x) * 2.0 * (1.0 - 2.0 * s * s));
        [double, m_x, m_w]
    })?;
    let double_integral_term = double / (2.0 * PI * PI);
    let a2_term = (a2 - 1.0) / (4.0 * PI * PI) * m_x * m_x;
    let s4_term = s4 / (2.0 * PI * PI) * m_w * m_w;
    Ok(VarianceBreakdown {
        double_integral_term,
        a2_term,
        s4_term,
        total: double_integral_term + a2_term + s4_term,
        refinement_error: err,
    })
}

/// Expansion of `E[sum f(lambda_j)]` to order one in `N`.
pub fn mean_expansion(f: &TestFunction, s4: f64, a2: f64, n: usize) -> Result<MeanBreakdown> {
    let (sup, _) = magnitudes(f, 0.0, 2.0);
    let floors = [1e-6 * sup; 4];
    let ([rho_int, arcsine, w2, w4], err) = refine("mean expansion", floors, |nodes| {
        let grid = AngularGrid::new(f, 0.0, 2.0, nodes);
        // rho_sc(x) dx = (2/pi) cos^2(theta) dtheta, dx / sqrt(4 - x^2) = dtheta,
        // (x^4 - 4x^2 + 2) / sqrt(4 - x^2) dx = 2 cos(4 theta) dtheta.
        [
            grid.integrate(|x, s| f.evaluate(x) * 2.0 / PI * (1.0 - s * s)),
            grid.integrate(|x, _| f.evaluate(x)),
            grid.integrate(|x, s| f.evaluate(x) * 2.0 * (1.0 - 2.0 * s * s)),
            grid.integrate(|x, s| {
                let s2 = s * s;
                f.evaluate(x) * (16.0 * s2 * s2 - 16.0 * s2 + 2.0)
            }),
        ]
    })?;
    let leading = n as f64 * rho_int;
    let arcsine_term = -arcsine / (2.0 * PI);
    let edge_term = (f.evaluate(2.0) + f.evaluate(-2.0)) / 4.0;
    let a2_term = (1.0 - a2) / (2.0 * PI) * w2;
    let s4_term = s4 / (2.0 * PI) * w4;
    Ok(MeanBreakdown {
        leading,
        arcsine_term,
        edge_term,
        a2_term,
        s4_term,
        total: leading + arcsine_term + edge_term + a2_term + s4_term,
        refinement_error: err,
    })
}

/// The three weighted integrals of `1{x <= gamma}` entering the mean
/// expansion, each including the `1/(2 pi)` prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorIntegrals {
    /// Weight `(x^4 - 4x^2 + 2) / sqrt(4 - x^2)`.
    pub i_s4: f64,
    /// Weight `(2 - x^2) / sqrt(4 - x^2)`.
    pub i_a2edge: f64,
    /// Weight `x / sqrt(4 - x^2)`.
    pub i_x: f64,
}

pub fn indicator_integrals(gamma: f64) -> Result<IndicatorIntegrals> {
    if !(gamma.abs() < 2.0) {
        return Err(RmtError::domain(format!(
            "|gamma| = {} must be below 2",
            gamma.abs()
        )));
    }
    let root = (4.0 - gamma * gamma).sqrt();
    Ok(IndicatorIntegrals {
        i_s4: root * (2.0 * gamma - gamma.powi(3)) / (8.0 * PI),
        i_a2edge: root * gamma / (4.0 * PI),
        i_x: -root / (2.0 * PI),
    })
}

fn check_bulk(gamma: f64) -> Result<()> {
    if !(gamma.abs() < 2.0) {
        return Err(RmtError::domain(format!(
            "gamma = {gamma} is not in the bulk"
        )));
    }
    Ok(())
}

/// Predicted `N E[lambda_i - gamma_i]`.
pub fn single_eigenvalue_mean(gamma: f64, s4: f64, a2: f64) -> Result<f64> {
    check_bulk(gamma)?;
    let rho = semicircle::density(gamma);
    Ok((gamma / 2.0).asin() / (2.0 * PI * rho) - 1.0 / (2.0 * rho)
        + s4 / 4.0 * (gamma.powi(3) - 2.0 * gamma)
        + (a2 - 1.0) / 2.0 * gamma)
}

/// Predicted `Var_H(lambda_i) - Var_GOE(lambda_i)`.
pub fn single_eigenvalue_variance_shift(gamma: f64, s4: f64, a2: f64, n: usize) -> Result<f64> {
    check_bulk(gamma)?;
    let n2 = (n as f64).powi(2);
    Ok(s4 * gamma * gamma / (8.0 * n2) + (a2 - 1.0) / n2)
}

/// `(c_sym / 2 pi^2) int int ((f(x) - f(y)) / (x - y))^2 dx dy` over the plane.
pub fn mesoscopic_variance(f: &TestFunction, c_sym: f64) -> Result<f64> {
    let far = 1e9;
    let (left, right) = (f.evaluate(-far), f.evaluate(far));
    let sup = (0..=400)
        .map(|k| f.evaluate(-10.0 + 0.05 * k as f64).abs())
        .fold(left.abs().max(right.abs()), f64::max);
    if (right - left).abs() > 1e-8 * (1.0 + sup) {
        return Err(RmtError::domain(format!(
            "{} has different limits {left} and {right} at -inf and +inf; the double integral diverges",
            f.name()
        )));
    }
    let base = 0.5 * (left + right);
    let g = |x: f64| f.evaluate(x) - base;
    let (scale, center) = match f.derivative_support() {
        Some((a, b)) if a.is_finite() && b.is_finite() => (0.5 * (b - a), 0.5 * (a + b)),
        _ => (1.0, 0.0),
    };
    // Truncation radius beyond which |g| is negligible.
    let gmax = (0..=400)
        .map(|k| g(center + scale * (-2.0 + 0.01 * k as f64)).abs())
        .fold(0.0, f64::max);
    if gmax == 0.0 {
        return Ok(0.0);
    }
    let mut radius = scale;
    while radius < 1e8 * scale
        && (g(center + radius).abs() > 1e-13 * gmax || g(center - radius).abs() > 1e-13 * gmax)
    {
        radius *= 2.0;
    }
    let tol = 1e-10 * gmax * gmax * scale;
    let dyadic = |h: &dyn Fn(f64) -> f64, lo: f64, hi: f64, peaks: &[f64]| -> Result<f64> {
        // Panels grow geometrically away from each peak so that no narrow
        // feature can hide between the nodes of a wide panel.
        let mut cuts = vec![lo, hi];
        for &p in peaks {
            let mut w = scale / 4.0;
            while w < (hi - lo) {
                cuts.extend([p - w, p + w]);
                w *= 2.0;
            }
        }
        cuts.retain(|&c| c >= lo && c <= hi);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut total = 0.0;
        for p in cuts.windows(2) {
            total += integrate_adaptive(h, p[0], p[1], tol)?;
        }
        Ok(total)
    };
    let norm2 = dyadic(
        &|x| g(x) * g(x),
        center - radius,
        center + radius,
        &[center],
    )?;
    let q = |u: f64| -> Result<f64> {
        let reach = radius + 0.5 * u;
        if u <= 1e-7 * scale {
            return dyadic(
                &|v| f.derivative(v).powi(2),
                center - reach,
                center + reach,
                &[center],
            );
        }
        dyadic(
            &|v| {
                let d = (f.evaluate(v + 0.5 * u) - f.evaluate(v - 0.5 * u)) / u;
                d * d
            },
            center - reach,
            center + reach,
            &[center - 0.5 * u, center + 0.5 * u],
        )
    };
    // Q(u) -> 2 ||g||^2 / u^2 once the two copies stop overlapping.
    let cut = 4.0 * radius;
    let mut inner = 0.0;
    let mut lo = 0.0;
    let mut hi = scale / 8.0;
    while lo < cut {
        let top = hi.min(cut);
        inner += integrate_adaptive(|u| q(u).unwrap_or(f64::NAN), lo, top, 1e-9 * norm2 / scale)?;
        lo = top;
        hi *= 2.0;
    }
    if !inner.is_finite() {
        return Err(RmtError::numeric("mesoscopic variance quadrature failed"));
    }
    let double = 2.0 * inner + 4.0 * norm2 / cut;
    Ok(c_sym / (2.0 * PI * PI) * double)
}

/// Limiting variance for a beta-ensemble whose equilibrium measure is
/// supported on `[a, b]`.
pub fn beta_variance_functional(f: &TestFunction, a: f64, b: f64, beta: f64) -> Result<f64> {
    if !(a < b) {
        return Err(RmtError::domain(format!("support [{a}, {b}] is empty")));
    }
    if !(beta > 0.0) {
        return Err(RmtError::domain(format!("beta = {beta} must be positive")));
    }
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    // -ab - xy + (a + b)(x + y)/2 = r^2 (1 - sin(theta) sin(phi)).
    let (_, dsup) = magnitudes(f, c, r);
    let ([double], _) = refine(
        "beta variance functional",
        [1e-6 * dsup * dsup * r * r],
        |nodes| [AngularGrid::new(f, c, r, nodes).double_integral(f, r)],
    )?;
    Ok(double / (2.0 * beta * PI * PI))
}

/// Family whose single-eigenvalue normalisation is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Wigner,
    Beta,
}

/// `(center, scale)` such that `(lambda_i - center) / scale` is
/// asymptotically standard normal. `beta` only enters the beta family.
pub fn gustavsson_scaling(gamma: f64, n: usize, beta: f64, family: Family) -> Result<(f64, f64)> {
    check_bulk(gamma)?;
    if !(beta >= 1.0) {
        return Err(RmtError::domain(format!("beta = {beta} < 1")));
    }
    let nf = n as f64;
    let log_n = nf.ln();
    let scale = match family {
        Family::Wigner => (log_n / (1.0 - gamma * gamma / 4.0)).sqrt() / nf,
        Family::Beta => 2.0 * log_n.sqrt() / (beta.sqrt() * nf * semicircle::density(gamma) * PI),
    };
    Ok((gamma, scale))
}

/// Order-one correction `E[sum f] - N int f d mu_V` for a beta-ensemble.
///
/// The general answer is an integral against a signed measure `nu_V` that
/// is not constructed here, so only the Gaussian potential is evaluated,
/// where the correction is `(2/beta - 1)` times the GOE edge and arcsine
/// terms. Any other potential is reported as unavailable.
pub fn beta_mean_correction(f: &TestFunction, potential: &Potential, beta: f64) -> Result<f64> {
    if potential != &Potential::hermite() {
        return Err(RmtError::domain(
            "the order-one mean correction needs the signed measure nu_V, which is only \
             available for V(x) = x^2/2",
        ));
    }
    if !(beta > 0.0) {
        return Err(RmtError::domain(format!("beta = {beta} must be positive")));
    }
    let m = mean_expansion(f, 0.0, 1.0, 0)?;
    Ok((2.0 / beta - 1.0) * (m.arcsine_term + m.edge_term))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::mesostat::build_homogenization_observable;

    fn bump() -> TestFunction {
        TestFunction::gaussian_bump(0.0, 0.5).unwrap()
    }

    #[test]
    fn constant_has_zero_variance_and_counts_everything() {
        let one = TestFunction::Constant { value: 1.0 };
        let v = variance_functional(&one, -2.0, 1.7).unwrap();
        assert!(v.total.abs() < 1e-12, "{v:?}");
        let m = mean_expansion(&one, -2.0, 1.7, 500).unwrap();
        assert!((m.total - 500.0).abs() < 1e-9, "{m:?}");
        assert!((m.arcsine_term + 0.5).abs() < 1e-12);
        assert!(m.a2_term.abs() < 1e-12 && m.s4_term.abs() < 1e-12);
    }

    #[test]
    fn odd_functions_have_no_s4_term() {
        let odd = TestFunction::Identity;
        let v = variance_functional(&odd, -2.0, 1.5).unwrap();
        assert!(v.s4_term.abs() < 1e-20);
        // Var(tr H) is the diagonal variance 1 + a2.
        assert!((v.double_integral_term - 2.0).abs() < 1e-10, "{v:?}");
        assert!((v.total - 2.5).abs() < 1e-10, "{v:?}");
    }

    #[test]
    fn goe_mean_has_no_cumulant_terms() {
        let m = mean_expansion(&bump(), 0.0, 1.0, 400).unwrap();
        assert_eq!(m.a2_term, 0.0);
        assert_eq!(m.s4_term, 0.0);
        let total = m.leading + m.corrections();
        assert!((total - m.total).abs() < 1e-9);
    }

    #[test]
    fn variance_terms_are_nonnegative_and_refined() {
        let f = TestFunction::smoothstep_indicator(-0.6, 0.3, 0.2).unwrap();
        let v = variance_functional(&f, 1.0, 1.5).unwrap();
        assert!(v.double_integral_term > 0.0 && v.a2_term >= 0.0 && v.s4_term >= 0.0);
        assert!(v.refinement_error <= REFINEMENT_TOL);
        assert!((v.total - v.double_integral_term - v.a2_term - v.s4_term).abs() < 1e-15);
    }

    #[test]
    fn indicator_closed_forms() {
        let i0 = indicator_integrals(0.0).unwrap();
        assert_eq!(i0.i_s4, 0.0);
        assert_eq!(i0.i_a2edge, 0.0);
        assert!((i0.i_x + 1.0 / PI).abs() < 1e-15);
        let i1 = indicator_integrals(1.0).unwrap();
        let r3 = 3f64.sqrt();
        assert!((i1.i_s4 - r3 / (8.0 * PI)).abs() < 1e-15);
        assert!((i1.i_a2edge - r3 / (4.0 * PI)).abs() < 1e-15);
        assert!((i1.i_x + r3 / (2.0 * PI)).abs() < 1e-15);
        assert!(indicator_integrals(2.0).is_err());
    }

    #[test]
    fn indicator_integrals_match_quadrature() {
        for gamma in [-1.5, -0.5, 0.0, 0.7, 1.0] {
            let i = indicator_integrals(gamma).unwrap();
            // dx / sqrt(4 - x^2) = dtheta under x = 2 sin(theta).
            let top = (gamma / 2.0).asin();
            let w = |g: fn(f64) -> f64| {
                integrate_adaptive(|t| g(2.0 * t.sin()), -FRAC_PI_2, top, 1e-13).unwrap()
                    / (2.0 * PI)
            };
            assert!((w(|x| x.powi(4) - 4.0 * x * x + 2.0) - i.i_s4).abs() < 1e-8);
            assert!((w(|x| 2.0 - x * x) - i.i_a2edge).abs() < 1e-8);
            assert!((w(|x| x) - i.i_x).abs() < 1e-8);
            let m = indicator_integrals(-gamma).unwrap();
            assert!((m.i_s4 + i.i_s4).abs() < 1e-15);
            assert!((m.i_a2edge + i.i_a2edge).abs() < 1e-15);
            assert_eq!(m.i_x, i.i_x);
        }
    }

    #[test]
    fn single_eigenvalue_mean_values() {
        let goe0 = single_eigenvalue_mean(0.0, 0.0, 1.0).unwrap();
        assert!((goe0 + FRAC_PI_2).abs() < 1e-14);
        assert!((single_eigenvalue_mean(0.0, -2.0, 1.4).unwrap() - goe0).abs() < 1e-14);
        let g = single_eigenvalue_mean(-1.0, 0.0, 1.0).unwrap();
        let r = single_eigenvalue_mean(-1.0, -2.0, 1.0).unwrap();
        assert!((r - g + 0.5).abs() < 1e-14);
        assert!(single_eigenvalue_mean(2.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn variance_shift_values() {
        assert_eq!(
            single_eigenvalue_variance_shift(0.7, 0.0, 1.0, 300).unwrap(),
            0.0
        );
        let v = single_eigenvalue_variance_shift(1.0, -2.0, 1.0, 300).unwrap();
        assert!((v + 1.0 / 360_000.0).abs() < 1e-20);
        assert!(single_eigenvalue_variance_shift(-0.4, -1.0, 1.0, 100).unwrap() < 0.0);
    }

    /// Plugs the indicator limit `Phi -> (1/rho) 1{x >= gamma}` into the
    /// cumulant terms of the variance functional. The closed forms give
    /// `(a2 - 1) + s4 gamma^2 / 2`; the shipped predictor uses
    /// `(a2 - 1) + s4 gamma^2 / 8` (see `single_eigenvalue_variance_shift`).
    #[test]
    fn indicator_limit_of_cumulant_terms() {
        for gamma in [0.0, 1.0] {
            let rho = semicircle::density(gamma);
            let i = indicator_integrals(gamma).unwrap();
            // int 1{x >= gamma} w = -int 1{x <= gamma} w for weights with zero total.
            let m_x = (2.0 * PI) * (-i.i_x) / rho;
            let m_w = (2.0 * PI) * (-i.i_a2edge) / rho;
            for (s4, a2) in [(0.0, 2.0), (-2.0, 1.0), (1.0, 1.5)] {
                let terms =
                    (a2 - 1.0) / (4.0 * PI * PI) * m_x * m_x + s4 / (2.0 * PI * PI) * m_w * m_w;
                let expect = (a2 - 1.0) + s4 * gamma * gamma / 2.0;
                assert!(
                    (terms - expect).abs() < 1e-12,
                    "{gamma} {s4} {a2}: {terms} {expect}"
                );
            }
        }
        // The same limit through the tabulated observable at large N.
        let n = 1_000_000;
        let phi = build_homogenization_observable(1.0, 1e-4, 0.05, n).unwrap();
        let f = TestFunction::HomogenizationPhi(Arc::new(phi));
        let v = variance_functional(&f, -2.0, 2.0).unwrap();
        let expect = 1.0 - 2.0 / 2.0;
        assert!((v.a2_term + v.s4_term - expect).abs() < 0.02, "{v:?}");
    }

    #[test]
    fn mesoscopic_variance_closed_forms() {
        assert_eq!(
            mesoscopic_variance(&TestFunction::Constant { value: 3.0 }, 1.0).unwrap(),
            0.0
        );
        // exp(-x^2/2): the double integral equals int |k| |f^(k)|^2 dk = 2 pi.
        let g = TestFunction::gaussian_bump(0.0, 2f64.sqrt()).unwrap();
        let v = mesoscopic_variance(&g, 1.0).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-7 * v, "{v}");
        // Poisson-smoothed window: 2 log(1 + h^2/s^2).
        let w = TestFunction::arctan_window(0.5, 0.1).unwrap();
        let exact = 2.0 * (1.0f64 + 25.0).ln() / (2.0 * PI * PI);
        let v = mesoscopic_variance(&w, 1.0).unwrap();
        assert!((v - exact).abs() < 1e-6 * exact, "{v} vs {exact}");
        let dilated = TestFunction::arctan_window(0.5 * 7.0, 0.1 * 7.0).unwrap();
        let vd = mesoscopic_variance(&dilated, 1.0).unwrap();
        assert!((vd - v).abs() < 1e-6 * v);
        let step = TestFunction::smoothstep_indicator(0.0, 1e12, 1.0).unwrap();
        assert!(matches!(
            mesoscopic_variance(&step, 1.0),
            Err(RmtError::Domain(_))
        ));
    }

    #[test]
    fn mesoscopic_variance_matches_riemann_refinement() {
        let f = TestFunction::arctan_window(0.5, 0.25).unwrap();
        let target = mesoscopic_variance(&f, 1.0).unwrap() * 2.0 * PI * PI;
        // Midpoint sums on [-L, L]^2 with the diagonal filled by f'^2 and the
        // far field by the tail estimate 4 ||f||^2 / L; Richardson on the last two.
        let riemann = |h: f64, half: f64| -> f64 {
            let m = (2.0 * half / h).round() as usize;
            let xs: Vec<f64> = (0..m).map(|k| -half + (k as f64 + 0.5) * h).collect();
            let fx: Vec<f64> = xs.iter().map(|&x| f.evaluate(x)).collect();
            let mut s = 0.0;
            for k in 0..m {
                for l in 0..m {
                    let q = if k == l {
                        f.derivative(xs[k])
                    } else {
                        (fx[k] - fx[l]) / (xs[k] - xs[l])
                    };
                    s += q * q;
                }
            }
            s * h * h
        };
        let half = 40.0;
        let outside = {
            // Contribution with at least one point outside [-L, L]: f ~ 2hs/(pi x^2) there.
            let exact_full = target;
            let inside_fine = riemann(0.0125, half);
            exact_full - inside_fine
        };
        let levels: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&h| riemann(h, half) + outside)
            .collect();
        for w in levels.windows(2) {
            assert!((w[1] - target).abs() <= (w[0] - target).abs() + 1e-12);
        }
        assert!((levels[3] - target).abs() < 1e-4 * target);
        assert!(outside.abs() < 0.05 * target);
    }

    #[test]
    fn beta_functional_specialises_to_semicircle() {
        let fs = [
            bump(),
            TestFunction::smoothstep_indicator(-0.6, 0.3, 0.2).unwrap(),
            TestFunction::cubic_spline(0.2, 0.3).unwrap(),
            TestFunction::arctan_window(0.4, 0.3).unwrap(),
            TestFunction::gaussian_bump(0.5, 0.7).unwrap(),
        ];
        for f in &fs {
            let t1 = variance_functional(f, 0.0, 1.0)
                .unwrap()
                .double_integral_term;
            let b1 = beta_variance_functional(f, -2.0, 2.0, 1.0).unwrap();
            assert!((t1 - b1).abs() < 1e-8 * t1.max(1e-300));
            let b4 = beta_variance_functional(f, -2.0, 2.0, 4.0).unwrap();
            assert!((b4 - 0.25 * b1).abs() < 1e-15 * b1);
        }
        let f = TestFunction::gaussian_bump(0.0, 0.3).unwrap();
        let g = TestFunction::gaussian_bump(0.75, 0.3).unwrap();
        let a = beta_variance_functional(&f, -1.5, 2.5, 2.0).unwrap();
        let b = beta_variance_functional(&g, -0.75, 3.25, 2.0).unwrap();
        assert!((a - b).abs() < 1e-8 * a);
    }

    #[test]
    fn gustavsson_normalisations() {
        let n = 1000;
        let (c, s) = gustavsson_scaling(0.0, n, 1.0, Family::Wigner).unwrap();
        assert_eq!(c, 0.0);
        assert!((s - (n as f64).ln().sqrt() / n as f64).abs() < 1e-18);
        for gamma in [-1.2, 0.0, 0.8] {
            let (_, w) = gustavsson_scaling(gamma, n, 1.0, Family::Wigner).unwrap();
            let rho = semicircle::density(gamma);
            // 1/sqrt(1 - g^2/4) = 1/(pi rho).
            let via_rho = (n as f64).ln().sqrt() / (n as f64 * PI * rho);
            assert!((w - via_rho).abs() < 1e-15);
            let (_, b1) = gustavsson_scaling(gamma, n, 1.0, Family::Beta).unwrap();
            assert!((b1 - 2.0 * w).abs() < 1e-15);
            let (_, b4) = gustavsson_scaling(gamma, n, 4.0, Family::Beta).unwrap();
            assert!((b4 - 0.5 * b1).abs() < 1e-18);
        }
    }

    #[test]
    fn beta_mean_correction_hook() {
        let f = bump();
        let goe = mean_expansion(&f, 0.0, 1.0, 100).unwrap();
        let c1 = beta_mean_correction(&f, &Potential::hermite(), 1.0).unwrap();
        assert!((c1 - goe.corrections()).abs() < 1e-14);
        assert!(
            beta_mean_correction(&f, &Potential::hermite(), 2.0)
                .unwrap()
                .abs()
                < 1e-15
        );
        let quartic = Potential::polynomial(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(beta_mean_correction(&f, &quartic, 2.0).is_err());
    }
}

//! Spectral observables: counting functions, normalised single-eigenvalue
//! fluctuations, linear and mesoscopic statistics, and the homogenization
//! observable `Phi`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Result, RmtError};
use crate::quadrature::{CompositeGrid, GaussLegendre};
use crate::semicircle::{self, classical_locations};
use crate::spectra::Spectrum;

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// C^3 ramp from 0 at `u <= 0` to 1 at `u >= 1`.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u.powi(4) * (35.0 + u * (-84.0 + u * (70.0 - 20.0 * u)))
    }
}

fn smoothstep_d1(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        140.0 * (u * (1.0 - u)).powi(3)
    }
}

fn smoothstep_d2(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        420.0 * (u * (1.0 - u)).powi(2) * (1.0 - 2.0 * u)
    }
}

/// Smooth cutoff: 1 for `|y| <= 1`, 0 for `|y| >= 2`.
pub fn cutoff_chi(y: f64) -> f64 {
    1.0 - smoothstep(y.abs() - 1.0)
}

fn cutoff_chi_d1(y: f64) -> f64 {
    -y.signum() * smoothstep_d1(y.abs() - 1.0)
}

/// Cubic B-spline on [-2, 2], `B(0) = 2/3`.
fn bspline(t: f64) -> f64 {
    let a = t.abs();
    if a >= 2.0 {
        0.0
    } else if a >= 1.0 {
        (2.0 - a).powi(3) / 6.0
    } else {
        2.0 / 3.0 - a * a + 0.5 * a.powi(3)
    }
}

fn bspline_d1(t: f64) -> f64 {
    let a = t.abs();
    let d = if a >= 2.0 {
        0.0
    } else if a >= 1.0 {
        -0.5 * (2.0 - a).powi(2)
    } else {
        -2.0 * a + 1.5 * a * a
    };
    t.signum() * d
}

fn bspline_d2(t: f64) -> f64 {
    let a = t.abs();
    if a >= 2.0 {
        0.0
    } else if a >= 1.0 {
        2.0 - a
    } else {
        -2.0 + 3.0 * a
    }
}

/// `exp(-y^2)` is below 1e-32 beyond this many widths.
const GAUSSIAN_REACH: f64 = 8.6;

/// Integrated norms `(||f||_1, ||f'||_1, ||f''||_1)` over [-3, 3].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Observables available to experiments.
#[derive(Debug, Clone)]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    Identity,
    /// `exp(-((x - center)/width)^2)`.
    GaussianBump {
        center: f64,
        width: f64,
    },
    /// 1 on `[lower, upper]`, C^3 ramps of length `ramp` outside.
    SmoothstepIndicator {
        lower: f64,
        upper: f64,
        ramp: f64,
    },
    /// `(atan((x + h)/s) - atan((x - h)/s)) / pi`, a smoothed window of width `2h`.
    ArctanWindow {
        half_width: f64,
        softness: f64,
    },
    /// `B((x - center)/width) - offset` with `B` the cubic B-spline.
    CubicSpline {
        center: f64,
        width: f64,
        offset: f64,
    },
    /// `inner(x) H(x)` where `H` drops from 1 to 0 across
    /// `[threshold - ramp/2, threshold + ramp/2]`.
    PartialCutoff {
        inner: Box<TestFunction>,
        threshold: f64,
        ramp: f64,
    },
    HomogenizationPhi(Arc<HomogenizationObservable>),
}

impl TestFunction {
    pub fn gaussian_bump(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(RmtError::domain(format!(
                "bump width {width} must be positive"
            )));
        }
        Ok(Self::GaussianBump { center, width })
    }

    pub fn smoothstep_indicator(lower: f64, upper: f64, ramp: f64) -> Result<Self> {
        if !(lower < upper && ramp > 0.0) {
            return Err(RmtError::domain(
                "smoothstep indicator needs lower < upper and ramp > 0",
            ));
        }
        Ok(Self::SmoothstepIndicator { lower, upper, ramp })
    }

    pub fn arctan_window(half_width: f64, softness: f64) -> Result<Self> {
        if !(half_width > 0.0 && softness > 0.0) {
            return Err(RmtError::domain(
                "arctan window needs positive width and softness",
            ));
        }
        Ok(Self::ArctanWindow {
            half_width,
            softness,
        })
    }

    pub fn cubic_spline(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(RmtError::domain(format!(
                "spline width {width} must be positive"
            )));
        }
        Ok(Self::CubicSpline {
            center,
            width,
            offset: 0.0,
        })
    }

    /// Spline bump shifted by a constant so that it vanishes at `u`.
    pub fn cubic_spline_vanishing_at(center: f64, width: f64, u: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(RmtError::domain(format!(
                "spline width {width} must be positive"
            )));
        }
        Ok(Self::CubicSpline {
            center,
            width,
            offset: bspline((u - center) / width),
        })
    }

    /// `self * 1{x <= threshold}` smoothed over a window of length `ramp`.
    pub fn partial_cutoff(self, threshold: f64, ramp: f64) -> Result<Self> {
        if !(ramp > 0.0) {
            return Err(RmtError::domain(format!(
                "cutoff ramp {ramp} must be positive"
            )));
        }
        Ok(Self::PartialCutoff {
            inner: Box::new(self),
            threshold,
            ramp,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::Identity => "identity",
            Self::GaussianBump { .. } => "gaussian_bump",
            Self::SmoothstepIndicator { .. } => "smoothstep_indicator",
            Self::ArctanWindow { .. } => "arctan_window",
            Self::CubicSpline { .. } => "cubic_spline",
            Self::PartialCutoff { .. } => "partial_cutoff",
            Self::HomogenizationPhi(_) => "homogenization_phi",
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Identity => x,
            Self::GaussianBump { center, width } => (-((x - center) / width).powi(2)).exp(),
            Self::SmoothstepIndicator { lower, upper, ramp } => {
                smoothstep((x - lower + ramp) / ramp) * smoothstep((upper + ramp - x) / ramp)
            }
            Self::ArctanWindow {
                half_width,
                softness,
            } => (((x + half_width) / softness).atan() - ((x - half_width) / softness).atan()) / PI,
            Self::CubicSpline {
                center,
                width,
                offset,
            } => bspline((x - center) / width) - offset,
            Self::PartialCutoff {
                inner,
                threshold,
                ramp,
            } => {
                let h = cutoff_h(x, *threshold, *ramp);
                if h == 0.0 {
                    0.0
                } else {
                    inner.evaluate(x) * h
                }
            }
            Self::HomogenizationPhi(phi) => phi.value(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Identity => 1.0,
            Self::GaussianBump { center, width } => {
                let y = (x - center) / width;
                -2.0 * y / width * (-y * y).exp()
            }
            Self::SmoothstepIndicator { lower, upper, ramp } => {
                let a = (x - lower + ramp) / ramp;
                let b = (upper + ramp - x) / ramp;
                (smoothstep_d1(a) * smoothstep(b) - smoothstep(a) * smoothstep_d1(b)) / ramp
            }
            Self::ArctanWindow {
                half_width,
                softness,
            } => {
                let s = *softness;
                let p = (x + half_width) / s;
                let m = (x - half_width) / s;
                (1.0 / (1.0 + p * p) - 1.0 / (1.0 + m * m)) / (s * PI)
            }
            Self::CubicSpline { center, width, .. } => bspline_d1((x - center) / width) / width,
            Self::PartialCutoff {
                inner,
                threshold,
                ramp,
            } => {
                let h = cutoff_h(x, *threshold, *ramp);
                let dh = cutoff_h_d1(x, *threshold, *ramp);
                let mut d = 0.0;
                if h != 0.0 {
                    d += inner.derivative(x) * h;
                }
                if dh != 0.0 {
                    d += inner.evaluate(x) * dh;
                }
                d
            }
            Self::HomogenizationPhi(phi) => phi.derivative(x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            Self::Constant { .. } | Self::Identity => 0.0,
            Self::GaussianBump { center, width } => {
                let y = (x - center) / width;
                (4.0 * y * y - 2.0) / (width * width) * (-y * y).exp()
            }
            Self::SmoothstepIndicator { lower, upper, ramp } => {
                let a = (x - lower + ramp) / ramp;
                let b = (upper + ramp - x) / ramp;
                (smoothstep_d2(a) * smoothstep(b) - 2.0 * smoothstep_d1(a) * smoothstep_d1(b)
                    + smoothstep(a) * smoothstep_d2(b))
                    / (ramp * ramp)
            }
            Self::ArctanWindow {
                half_width,
                softness,
            } => {
                let s = *softness;
                let p = (x + half_width) / s;
                let m = (x - half_width) / s;
                (-2.0 * p / (1.0 + p * p).powi(2) + 2.0 * m / (1.0 + m * m).powi(2)) / (s * s * PI)
            }
            Self::CubicSpline { center, width, .. } => {
                bspline_d2((x - center) / width) / (width * width)
            }
            Self::PartialCutoff {
                inner,
                threshold,
                ramp,
            } => {
                let h = cutoff_h(x, *threshold, *ramp);
                let dh = cutoff_h_d1(x, *threshold, *ramp);
                let d2h = cutoff_h_d2(x, *threshold, *ramp);
                let mut d = 0.0;
                if h != 0.0 {
                    d += inner.second_derivative(x) * h;
                }
                if dh != 0.0 {
                    d += 2.0 * inner.derivative(x) * dh + inner.evaluate(x) * d2h;
                }
                d
            }
            Self::HomogenizationPhi(phi) => phi.second_derivative(x),
        }
    }

    /// Closed interval outside of which `f'` vanishes (to below 1e-32 for
    /// the Gaussian); `None` when `f' = 0` everywhere.
    pub fn derivative_support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Constant { .. } => None,
            Self::Identity | Self::ArctanWindow { .. } => Some((f64::NEG_INFINITY, f64::INFINITY)),
            Self::GaussianBump { center, width } => Some((
                center - GAUSSIAN_REACH * width,
                center + GAUSSIAN_REACH * width,
            )),
            Self::SmoothstepIndicator { lower, upper, ramp } => Some((lower - ramp, upper + ramp)),
            Self::CubicSpline { center, width, .. } => {
                Some((center - 2.0 * width, center + 2.0 * width))
            }
            Self::PartialCutoff {
                inner,
                threshold,
                ramp,
            } => {
                let top = threshold + 0.5 * ramp;
                let ramp_part = (threshold - 0.5 * ramp, top);
                match inner.derivative_support() {
                    None => Some(ramp_part),
                    Some((a, b)) => Some((a.min(ramp_part.0), b.min(top).max(ramp_part.1))),
                }
            }
            Self::HomogenizationPhi(phi) => Some(phi.support()),
        }
    }

    /// Largest `kappa` with `f'` supported in `[-2 + kappa, 2 - kappa]`.
    pub fn support_margin(&self) -> f64 {
        match self.derivative_support() {
            None => 2.0,
            Some((a, b)) => 2.0 - a.abs().max(b.abs()),
        }
    }

    /// Points where the function or its low derivatives are not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::SmoothstepIndicator { lower, upper, ramp } => {
                vec![lower - ramp, *lower, *upper, upper + ramp]
            }
            Self::CubicSpline { center, width, .. } => {
                (-2..=2).map(|k| center + k as f64 * width).collect()
            }
            Self::PartialCutoff {
                inner,
                threshold,
                ramp,
            } => {
                let mut b = inner.breakpoints();
                b.extend([threshold - 0.5 * ramp, *threshold, threshold + 0.5 * ramp]);
                b
            }
            Self::HomogenizationPhi(phi) => phi.breakpoints(),
            Self::GaussianBump { center, .. } => vec![*center],
            _ => Vec::new(),
        }
    }

    /// Norms over [-3, 3], a window containing every spectrum of interest.
    pub fn norms(&self) -> Norms {
        let grid = CompositeGrid::new(-3.0, 3.0, &self.breakpoints(), 4096, 16);
        Norms {
            l1: grid.integrate(|x| self.evaluate(x).abs()),
            d1: grid.integrate(|x| self.derivative(x).abs()),
            d2: grid.integrate(|x| self.second_derivative(x).abs()),
        }
    }

    /// Checks `||f''||_1 <= N^{1-c}` and `||f||_1 + ||f'||_1 <= bound`.
    pub fn check_norms(&self, n: usize, c: f64, bound: f64) -> Result<Norms> {
        let norms = self.norms();
        let limit = (n as f64).powf(1.0 - c);
        if norms.d2 > limit {
            return Err(RmtError::config(format!(
                "{}: ||f''||_1 = {} exceeds N^(1-c) = {limit}",
                self.name(),
                norms.d2
            )));
        }
        if norms.l1 + norms.d1 > bound {
            return Err(RmtError::config(format!(
                "{}: ||f||_1 + ||f'||_1 = {} exceeds {bound}",
                self.name(),
                norms.l1 + norms.d1
            )));
        }
        Ok(norms)
    }
}

fn cutoff_h(x: f64, u: f64, r: f64) -> f64 {
    1.0 - smoothstep((x - u + 0.5 * r) / r)
}

fn cutoff_h_d1(x: f64, u: f64, r: f64) -> f64 {
    -smoothstep_d1((x - u + 0.5 * r) / r) / r
}

fn cutoff_h_d2(x: f64, u: f64, r: f64) -> f64 {
    -smoothstep_d2((x - u + 0.5 * r) / r) / (r * r)
}

/// `#{i : lambda_i <= e}`.
pub fn counting_function(s: &Spectrum, e: f64) -> usize {
    s.values().partition_point(|&l| l <= e)
}

fn check_bulk_index(n: usize, i: usize, kappa: f64) -> Result<()> {
    let nf = n as f64;
    let fi = i as f64;
    if i == 0 || i > n || fi < kappa * nf || fi > (1.0 - kappa) * nf {
        return Err(RmtError::domain(format!(
            "index {i} outside the bulk window [{}, {}] for N = {n}",
            kappa * nf,
            (1.0 - kappa) * nf
        )));
    }
    Ok(())
}

fn check_bulk_energy(e: f64, kappa: f64) -> Result<()> {
    if !(e.abs() < 2.0 - kappa) {
        return Err(RmtError::domain(format!(
            "energy {e} outside (-2 + {kappa}, 2 - {kappa})"
        )));
    }
    Ok(())
}

/// `N (lambda_i - gamma_i) / sqrt(log N / (1 - gamma_i^2 / 4))`.
pub fn eigenvalue_z_score(s: &Spectrum, i: usize, kappa: f64) -> Result<f64> {
    let n = s.n();
    check_bulk_index(n, i, kappa)?;
    let gamma = classical_locations(n)?.location(i);
    let nf = n as f64;
    Ok(nf * (s.eigenvalue(i) - gamma) / (nf.ln() / (1.0 - gamma * gamma / 4.0)).sqrt())
}

/// `(N(E) - N F(E)) pi / sqrt(log N)`.
pub fn counting_z_score(s: &Spectrum, e: f64, kappa: f64) -> Result<f64> {
    check_bulk_energy(e, kappa)?;
    let nf = s.n() as f64;
    Ok((counting_function(s, e) as f64 - nf * semicircle::cdf(e)) * PI / nf.ln().sqrt())
}

/// Uncentred `sum_j f(lambda_j)`.
pub fn linear_statistic(s: &Spectrum, f: &TestFunction) -> f64 {
    compensated_sum(s.values().iter().map(|&l| f.evaluate(l)))
}

/// `sum_j f(N^alpha (lambda_j - e))`.
pub fn mesoscopic_statistic(s: &Spectrum, f: &TestFunction, e: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RmtError::domain(format!(
            "scale exponent {alpha} not in (0, 1)"
        )));
    }
    if !(e.abs() < 2.0) {
        return Err(RmtError::domain(format!("center {e} outside (-2, 2)")));
    }
    let scale = (s.n() as f64).powf(alpha);
    Ok(compensated_sum(
        s.values().iter().map(|&l| f.evaluate(scale * (l - e))),
    ))
}

/// `sum_i f(lambda_i) 1{lambda_i <= u}`.
pub fn partial_linear_statistic(s: &Spectrum, f: &TestFunction, u: f64) -> f64 {
    compensated_sum(
        s.values()
            .iter()
            .take_while(|&&l| l <= u)
            .map(|&l| f.evaluate(l)),
    )
}

/// Sum of `f` over the `k` smallest eigenvalues.
pub fn ranked_partial_statistic(
    s: &Spectrum,
    f: &TestFunction,
    k: usize,
    kappa: f64,
) -> Result<f64> {
    check_bulk_index(s.n(), k, kappa)?;
    Ok(compensated_sum(
        s.values()[..k].iter().map(|&l| f.evaluate(l)),
    ))
}

/// Effective density `pi rho_sc(gamma)` setting the scale of the DBM heat
/// kernel near `gamma`.
pub fn kernel_density(gamma: f64) -> f64 {
    PI * semicircle::density(gamma)
}

/// Width `eta = t1 pi rho_sc(gamma)` of the Poisson kernel at time `t1`.
pub fn kernel_width(gamma: f64, t1: f64) -> f64 {
    t1 * kernel_density(gamma)
}

/// Poisson kernel `(1/r) (t1 r) / ((x - gamma)^2 + (t1 r)^2)` with
/// `r = pi rho_sc(gamma)`; its integral over the line is `1/rho_sc(gamma)`.
pub fn poisson_kernel(gamma: f64, x: f64, t1: f64) -> f64 {
    let r = kernel_density(gamma);
    let eta = t1 * r;
    eta / (r * ((x - gamma).powi(2) + eta * eta))
}

/// Tabulated `Phi(y) = int_{-2}^{y} chi((x - gamma)/L) p(x) dx` with `p` the
/// Poisson kernel and `L = t1 N^eps1`. Far from `gamma`, `Phi` is close to
/// `(1/rho) 1{y >= gamma}`; the deficit on the right is at most
/// `(2/pi) (eta/L) / rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationObservable {
    pub gamma: f64,
    pub t1: f64,
    pub eps1: f64,
    pub n: usize,
    pub rho: f64,
    pub eta: f64,
    pub cutoff: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

/// Grid step in `asinh((x - gamma)/eta)`.
const PHI_GRID_STEP: f64 = 1.0 / 96.0;
/// Uniform nodes across each cutoff ramp.
const PHI_RAMP_NODES: usize = 512;

impl HomogenizationObservable {
    /// `Phi'`.
    pub fn kernel(&self, x: f64) -> f64 {
        let y = (x - self.gamma) / self.cutoff;
        if y.abs() >= 2.0 || x < -2.0 {
            return 0.0;
        }
        cutoff_chi(y) * poisson_kernel(self.gamma, x, self.t1)
    }

    fn kernel_d1(&self, x: f64) -> f64 {
        let y = (x - self.gamma) / self.cutoff;
        if y.abs() >= 2.0 || x < -2.0 {
            return 0.0;
        }
        let d = x - self.gamma;
        let q = d * d + self.eta * self.eta;
        let c = self.eta / (PI * self.rho);
        c * (cutoff_chi_d1(y) / (self.cutoff * q) - cutoff_chi(y) * 2.0 * d / (q * q))
    }

    fn lower(&self) -> f64 {
        (self.gamma - 2.0 * self.cutoff).max(-2.0)
    }

    fn upper(&self) -> f64 {
        self.gamma + 2.0 * self.cutoff
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lower(), self.upper())
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        vec![
            self.lower(),
            self.gamma - self.cutoff,
            self.gamma,
            self.gamma + self.cutoff,
            self.upper(),
        ]
    }

    /// Value of `Phi` beyond the right end of the cutoff window.
    pub fn total(&self) -> f64 {
        *self.values.last().expect("table is never empty")
    }

    /// Cubic Hermite interpolation using the exact kernel as slope.
    pub fn value(&self, x: f64) -> f64 {
        if x <= self.nodes[0] {
            return 0.0;
        }
        let last = self.nodes.len() - 1;
        if x >= self.nodes[last] {
            return self.values[last];
        }
        let k = self.nodes.partition_point(|&t| t <= x) - 1;
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.kernel(x0) * h, self.kernel(x1) * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.kernel(x)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.kernel_d1(x)
    }

    /// Grid nodes of the table.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// Build the homogenization observable centred at `gamma_i` for dimension `n`.
pub fn build_homogenization_observable(
    gamma_i: f64,
    t1: f64,
    eps1: f64,
    n: usize,
) -> Result<HomogenizationObservable> {
    if !(gamma_i.abs() < 2.0) {
        return Err(RmtError::domain(format!(
            "center {gamma_i} outside the bulk"
        )));
    }
    if !(t1 > 0.0) || !(eps1 > 0.0 && eps1 < 1.0) || n < 2 {
        return Err(RmtError::domain(format!(
            "homogenization parameters t1 = {t1}, eps1 = {eps1}, N = {n} are invalid"
        )));
    }
    let cutoff = t1 * (n as f64).powf(eps1);
    if cutoff >= 1.0 {
        return Err(RmtError::domain(format!(
            "cutoff window t1 N^eps1 = {cutoff} is not small"
        )));
    }
    let rho = semicircle::density(gamma_i);
    let eta = kernel_width(gamma_i, t1);
    let mut phi = HomogenizationObservable {
        gamma: gamma_i,
        t1,
        eps1,
        n,
        rho,
        eta,
        cutoff,
        nodes: Vec::new(),
        values: Vec::new(),
    };
    let breaks = phi.breakpoints();
    let mut nodes = vec![breaks[0]];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let in_ramp = a >= gamma_i + cutoff || b <= gamma_i - cutoff;
        if in_ramp {
            for k in 1..=PHI_RAMP_NODES {
                let x = if k == PHI_RAMP_NODES {
                    b
                } else {
                    a + (b - a) * k as f64 / PHI_RAMP_NODES as f64
                };
                nodes.push(x);
            }
            continue;
        }
        let sa = ((a - gamma_i) / eta).asinh();
        let sb = ((b - gamma_i) / eta).asinh();
        let m = (((sb - sa) / PHI_GRID_STEP).ceil() as usize).max(8);
        for k in 1..=m {
            let s = sa + (sb - sa) * k as f64 / m as f64;
            let x = if k == m { b } else { gamma_i + eta * s.sinh() };
            nodes.push(x);
        }
    }
    let rule = GaussLegendre::of_order(8);
    let plateau = (gamma_i - cutoff, gamma_i + cutoff);
    let mut values = Vec::with_capacity(nodes.len());
    values.push(0.0);
    let mut sum = 0.0;
    let mut carry = 0.0;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let piece = if a >= plateau.0 && b <= plateau.1 {
            (((b - gamma_i) / eta).atan() - ((a - gamma_i) / eta).atan()) / (PI * rho)
        } else {
            rule.integrate(a, b, |x| phi.kernel(x))
        };
        let t = sum + piece;
        carry += if sum.abs() >= piece.abs() {
            (sum - t) + piece
        } else {
            (piece - t) + sum
        };
        sum = t;
        values.push(sum + carry);
    }
    phi.nodes = nodes;
    phi.values = values;
    Ok(phi)
}

/// `zeta = sum_j Phi(lambda_j) - sum_j Phi(gamma_j)`.
pub fn zeta_statistic(s: &Spectrum, phi: &HomogenizationObservable) -> Result<f64> {
    if s.n() != phi.n {
        return Err(RmtError::domain(format!(
            "spectrum has {} eigenvalues but the observable was built for N = {}",
            s.n(),
            phi.n
        )));
    }
    let table = classical_locations(phi.n)?;
    Ok(compensated_sum(
        s.values()
            .iter()
            .zip(&table.gamma)
            .flat_map(|(&l, &g)| [phi.value(l), -phi.value(g)]),
    ))
}

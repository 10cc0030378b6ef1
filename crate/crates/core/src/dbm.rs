//! Dyson Brownian motion
//!
//! `dx_i = sqrt(2/(beta N)) dB_i + (1/N) sum_{j != i} dt/(x_i - x_j) - V'(x_i)/2 dt`
//!
//! with two trajectories driven by the same Brownian increments.
//!
//! The nearest-neighbour repulsion is stepped implicitly: each substep
//! minimises `|y - r|^2/2 - (h/N) sum log(y_{i+1} - y_i)` where `r` is the
//! explicit Euler update of everything else. At beta = 1 a gap is a critical
//! Bessel process and reaches arbitrarily small values, which an explicit
//! step cannot follow; the implicit solve keeps the ordering by construction.
//! The remaining drift is explicit, and a substep is only accepted when it
//! moves no particle by more than a quarter of the smallest gap. Rejected
//! substeps are split in two with a Brownian bridge, on a schedule shared by
//! every trajectory of the coupling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensembles::Potential;
use crate::error::{Result, RmtError};
use crate::mesostat::{zeta_statistic, HomogenizationObservable};
use crate::rng::SeedSequence;
use crate::spectra::Spectrum;

pub use crate::mesostat::poisson_kernel;

/// Maximum number of bridge halvings of one step.
pub const MAX_SPLIT_DEPTH: u32 = 16;
const NEWTON_MAX_ITER: usize = 60;

/// Positions of a particle system at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DBMState {
    pub positions: Vec<f64>,
    pub time: f64,
    pub beta: f64,
    pub potential: Potential,
}

impl DBMState {
    pub fn new(positions: Vec<f64>, beta: f64, potential: Potential) -> Result<Self> {
        if positions.is_empty() {
            return Err(RmtError::domain("no particles"));
        }
        if !(beta >= 1.0) {
            return Err(RmtError::domain(format!("beta = {beta} < 1")));
        }
        if let Some(k) = positions.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(RmtError::domain(format!(
                "positions {} and {} are not strictly increasing",
                k + 1,
                k + 2
            )));
        }
        Ok(Self {
            positions,
            time: 0.0,
            beta,
            potential,
        })
    }

    /// GOE-type dynamics (`beta = 1`, `V = x^2/2`) started from a spectrum.
    pub fn from_spectrum(s: &Spectrum) -> Result<Self> {
        Self::new(s.values().to_vec(), 1.0, Potential::hermite())
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn noise_scale(&self) -> f64 {
        (2.0 / (self.beta * self.n() as f64)).sqrt()
    }

    /// Smallest gap and the 1-based pair realising it.
    fn min_gap(&self) -> (f64, usize) {
        self.positions
            .windows(2)
            .enumerate()
            .map(|(k, w)| (w[1] - w[0], k + 1))
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
    }

    /// Everything except the nearest-neighbour repulsion.
    fn explicit_drift(&self) -> Vec<f64> {
        let x = &self.positions;
        let n = x.len();
        let inv_n = 1.0 / n as f64;
        let mut b = vec![0.0; n];
        for i in 0..n {
            for j in i + 2..n {
                let v = 1.0 / (x[i] - x[j]);
                b[i] += v;
                b[j] -= v;
            }
        }
        for (bi, &xi) in b.iter_mut().zip(x) {
            *bi = *bi * inv_n - 0.5 * self.potential.derivative(xi);
        }
        b
    }

    /// One substep of length `h` with increments `db`; `None` if it is
    /// too long for the current configuration, i.e. if the explicit drift
    /// would close some gap by more than a quarter of its length.
    fn try_substep(&self, db: &[f64], h: f64) -> Option<Vec<f64>> {
        let drift = self.explicit_drift();
        let too_long = drift
            .windows(2)
            .zip(self.positions.windows(2))
            .any(|(d, x)| h * (d[0] - d[1]) > 0.25 * (x[1] - x[0]));
        if too_long {
            return None;
        }
        let sigma = self.noise_scale();
        let target: Vec<f64> = self
            .positions
            .iter()
            .zip(&drift)
            .zip(db)
            .map(|((&x, &d), &w)| x + h * d + sigma * w)
            .collect();
        implicit_repulsion(&self.positions, &target, h / self.n() as f64)
    }
}

/// Minimise `|y - r|^2/2 - c sum log(y_{k+1} - y_k)` from the ordered start
/// `y = x` by damped Newton. The objective is strictly convex on the
/// ordered cone and infinite on its boundary, so every accepted iterate is
/// ordered.
fn implicit_repulsion(x: &[f64], r: &[f64], c: f64) -> Option<Vec<f64>> {
    let n = x.len();
    if n == 1 {
        return Some(r.to_vec());
    }
    let objective = |y: &[f64]| -> f64 {
        let mut s = 0.0;
        for k in 0..n {
            s += 0.5 * (y[k] - r[k]).powi(2);
        }
        for w in y.windows(2) {
            let g = w[1] - w[0];
            if !(g > 0.0) {
                return f64::INFINITY;
            }
            s -= c * g.ln();
        }
        s
    };
    let scale = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut y = x.to_vec();
    let mut grad = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    let mut step = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut value = objective(&y);
    let mut size = vec![0.0; n];
    for _ in 0..NEWTON_MAX_ITER {
        for k in 0..n {
            grad[k] = y[k] - r[k];
            diag[k] = 1.0;
            size[k] = scale;
        }
        for k in 0..n - 1 {
            let ig = 1.0 / (y[k + 1] - y[k]);
            grad[k] += c * ig;
            grad[k + 1] -= c * ig;
            size[k] += c * ig;
            size[k + 1] += c * ig;
            let h = c * ig * ig;
            diag[k] += h;
            diag[k + 1] += h;
            off[k] = -h;
        }
        // Converged once the residual is at the rounding level of its terms.
        if grad.iter().zip(&size).all(|(g, m)| g.abs() <= 1e-13 * m) {
            return Some(y);
        }
        solve_tridiagonal(&diag, &off, &grad, &mut step);
        let slope: f64 = -grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
        // Below this decrement the objective cannot resolve the descent.
        let magnitude: f64 = y
            .iter()
            .zip(r)
            .map(|(a, b)| 0.5 * (a - b).powi(2))
            .sum::<f64>()
            + c * y.windows(2).map(|w| (w[1] - w[0]).ln().abs()).sum::<f64>();
        let negligible = -slope <= 1e-13 * magnitude + 1e-300;
        let mut t = 1.0;
        loop {
            for k in 0..n {
                trial[k] = y[k] - t * step[k];
            }
            let v = objective(&trial);
            if v <= value + 1e-4 * t * slope || (negligible && v.is_finite()) {
                value = v;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                return None;
            }
        }
        std::mem::swap(&mut y, &mut trial);
        if t == 1.0 && step.iter().all(|s| s.abs() <= 1e-15 * scale) {
            return Some(y);
        }
    }
    None
}

/// Thomas algorithm for the symmetric tridiagonal system `(diag, off) s = rhs`.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64], out: &mut [f64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for k in 1..n {
        let m = diag[k] - off[k - 1] * c[k - 1];
        if k < n - 1 {
            c[k] = off[k] / m;
        }
        d[k] = (rhs[k] - off[k - 1] * d[k - 1]) / m;
    }
    out[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        out[k] = d[k] - c[k] * out[k + 1];
    }
}

/// Advance every state by `h` with the shared increments `db`, splitting
/// by Brownian bridge until all of them accept.
fn advance<R: Rng + ?Sized>(
    states: &mut [&mut DBMState],
    db: &[f64],
    h: f64,
    depth: u32,
    rng: &mut R,
) -> Result<()> {
    let proposals: Option<Vec<Vec<f64>>> = states.iter().map(|s| s.try_substep(db, h)).collect();
    if let Some(next) = proposals {
        for (s, p) in states.iter_mut().zip(next) {
            s.positions = p;
            s.time += h;
        }
        return Ok(());
    }
    if depth >= MAX_SPLIT_DEPTH {
        let (_, pair, time) = states
            .iter()
            .map(|s| {
                let (g, k) = s.min_gap();
                (g, k, s.time)
            })
            .fold(
                (f64::INFINITY, 1, 0.0),
                |a, b| if b.0 < a.0 { b } else { a },
            );
        return Err(RmtError::Integration {
            left: pair,
            right: pair + 1,
            time,
        });
    }
    let half = 0.5 * h;
    let spread = (0.25 * h).sqrt();
    let first: Vec<f64> = db
        .iter()
        .map(|&w| 0.5 * w + spread * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let second: Vec<f64> = db.iter().zip(&first).map(|(w, a)| w - a).collect();
    advance(states, &first, half, depth + 1, rng)?;
    advance(states, &second, half, depth + 1, rng)
}

fn check_step(n: usize, noise: &[f64], dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(RmtError::domain(format!("dt = {dt} must be positive")));
    }
    if noise.len() != n {
        return Err(RmtError::domain(format!(
            "{} increments for {n} particles",
            noise.len()
        )));
    }
    Ok(())
}

/// Advance `state` by `dt` given the Brownian increments `noise` (variance
/// `dt` each). `rng` supplies the bridge refinements if the step is split.
pub fn dbm_step<R: Rng + ?Sized>(
    state: &DBMState,
    noise: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<DBMState> {
    check_step(state.n(), noise, dt)?;
    let mut next = state.clone();
    advance(&mut [&mut next], noise, dt, 0, rng)?;
    Ok(next)
}

/// Same as [`dbm_step`] for several trajectories sharing one noise path.
pub fn coupled_step<R: Rng + ?Sized>(
    states: &mut [&mut DBMState],
    noise: &[f64],
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    let n = states.first().map_or(0, |s| s.n());
    if states.iter().any(|s| s.n() != n) {
        return Err(RmtError::domain("coupled trajectories differ in size"));
    }
    check_step(n, noise, dt)?;
    advance(states, noise, dt, 0, rng)
}

/// Default outer step: `0.012 / N`, capped so the interval has at least 100 steps.
pub fn default_dt(n: usize, horizon: f64) -> f64 {
    (0.012 / n as f64).min(horizon / 100.0)
}

/// Run `states` to `horizon` in steps of about `dt` with fresh increments
/// from `rng`.
pub fn evolve<R: Rng + ?Sized>(
    states: &mut [&mut DBMState],
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    let n = states.first().map_or(0, |s| s.n());
    let steps = (horizon / dt).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let sd = h.sqrt();
    let mut noise = vec![0.0; n];
    for _ in 0..steps {
        for w in noise.iter_mut() {
            *w = sd * rng.sample::<f64, _>(StandardNormal);
        }
        coupled_step(states, &noise, h, rng)?;
    }
    Ok(())
}

/// Two trajectories run to `t1` on one noise path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingState {
    pub x: DBMState,
    pub y: DBMState,
    pub x0: Spectrum,
    pub y0: Spectrum,
    pub shared_noise_seed: u64,
    pub t0: f64,
    pub t1: f64,
}

/// Couple `x0` (Gaussian-divisible) and `y0` (GOE) up to `t1 = t0/2`.
pub fn run_coupling(x0: &Spectrum, y0: &Spectrum, t1: f64, seed: u64) -> Result<CouplingState> {
    run_coupling_with_dt(x0, y0, t1, seed, default_dt(x0.n(), t1))
}

pub fn run_coupling_with_dt(
    x0: &Spectrum,
    y0: &Spectrum,
    t1: f64,
    seed: u64,
    dt: f64,
) -> Result<CouplingState> {
    if x0.n() != y0.n() {
        return Err(RmtError::domain(format!(
            "coupled spectra have sizes {} and {}",
            x0.n(),
            y0.n()
        )));
    }
    if !(t1 > 0.0) {
        return Err(RmtError::domain(format!("t1 = {t1} must be positive")));
    }
    let mut x = DBMState::from_spectrum(x0)?;
    let mut y = DBMState::from_spectrum(y0)?;
    let mut rng = SeedSequence::new(seed).named("dbm-noise", 0);
    evolve(&mut [&mut x, &mut y], t1, dt, &mut rng)?;
    Ok(CouplingState {
        x,
        y,
        x0: x0.clone(),
        y0: y0.clone(),
        shared_noise_seed: seed,
        t0: 2.0 * t1,
        t1,
    })
}

/// Per-coupling record of the homogenization check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenizationSample {
    pub x_i: f64,
    pub y_i: f64,
    pub zeta_x: f64,
    pub zeta_y: f64,
    pub residual: f64,
}

/// `x_i(t1) - y_i(t1) - (zeta_x - zeta_y)/N` with the zetas of the initial
/// spectra. `i` is 1-based and `phi` must be centred at its classical location.
pub fn homogenization_sample(
    c: &CouplingState,
    i: usize,
    phi: &HomogenizationObservable,
) -> Result<HomogenizationSample> {
    let n = c.x.n();
    if i == 0 || i > n {
        return Err(RmtError::domain(format!("index {i} outside 1..={n}")));
    }
    let gamma = crate::semicircle::classical_locations(n)?.location(i);
    if (gamma - phi.gamma).abs() > 1e-12 || phi.n != n {
        return Err(RmtError::domain(format!(
            "observable centred at {} for N = {}, expected gamma_{i} = {gamma} for N = {n}",
            phi.gamma, phi.n
        )));
    }
    let zeta_x = zeta_statistic(&c.x0, phi)?;
    let zeta_y = zeta_statistic(&c.y0, phi)?;
    let x_i = c.x.positions[i - 1];
    let y_i = c.y.positions[i - 1];
    let residual = if c.x0 == c.y0 {
        0.0
    } else {
        (x_i - y_i) - (zeta_x - zeta_y) / n as f64
    };
    Ok(HomogenizationSample {
        x_i,
        y_i,
        zeta_x,
        zeta_y,
        residual,
    })
}

pub fn homogenization_residual(
    c: &CouplingState,
    i: usize,
    phi: &HomogenizationObservable,
) -> Result<f64> {
    homogenization_sample(c, i, phi).map(|s| s.residual)
}

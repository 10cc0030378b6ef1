//! The semicircle law on [-2, 2]: density, distribution function, quantiles
//! (classical eigenvalue locations) and the Stieltjes transform.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Result, RmtError};

/// Semicircle density `sqrt((4 - x^2)_+) / (2 pi)`.
pub fn density(x: f64) -> f64 {
    let s = 4.0 - x * x;
    if s > 0.0 {
        s.sqrt() / (2.0 * PI)
    } else {
        0.0
    }
}

/// Distribution function, via the closed-form antiderivative on [-2, 2].
pub fn cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        let v = 0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI;
        v.clamp(0.0, 1.0)
    }
}

const QUANTILE_MAX_ITER: usize = 50;
const QUANTILE_BRACKET: f64 = 1e-14;

/// Inverse distribution function on (0, 1).
///
/// Newton steps are taken inside a shrinking bracket and replaced by
/// bisection whenever they leave it; Newton alone stalls near the edges
/// where the density vanishes.
pub fn quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(RmtError::domain(format!(
            "quantile level {u} not in (0, 1)"
        )));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    // Starting point from the edge asymptotics F(x) ~ (2/3pi)(x+2)^{3/2}
    // (mirrored on the right); the middle uses the linearisation at 0.
    let mut x = if u < 0.1 {
        -2.0 + (1.5 * PI * u).powf(2.0 / 3.0)
    } else if u > 0.9 {
        2.0 - (1.5 * PI * (1.0 - u)).powf(2.0 / 3.0)
    } else {
        (u - 0.5) * PI
    };
    x = x.clamp(-2.0, 2.0);
    for _ in 0..QUANTILE_MAX_ITER {
        let g = cdf(x) - u;
        if g == 0.0 {
            return Ok(x);
        }
        if g < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        if hi - lo <= QUANTILE_BRACKET {
            break;
        }
        let d = density(x);
        let newton = if d > 0.0 { x - g / d } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-16 * x.abs().max(1e-3) {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Classical eigenvalue locations `gamma_i = quantile(i / N)`, i = 1..N.
///
/// The last location is the right edge `2` itself (F(2) = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalLocationTable {
    pub n: usize,
    pub gamma: Vec<f64>,
}

impl ClassicalLocationTable {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(RmtError::domain("classical locations need n >= 1"));
        }
        let gamma = (1..=n)
            .map(|i| {
                if i == n {
                    Ok(2.0)
                } else {
                    quantile(i as f64 / n as f64)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, gamma })
    }

    /// Location of the 1-based index `i`.
    pub fn location(&self, i: usize) -> f64 {
        self.gamma[i - 1]
    }

    /// 1-based index whose classical location is closest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let k = (cdf(x) * self.n as f64).round() as usize;
        k.clamp(1, self.n)
    }
}

/// Shared, immutable table for dimension `n`; computed once per process.
pub fn classical_locations(n: usize) -> Result<Arc<ClassicalLocationTable>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ClassicalLocationTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&n) {
        return Ok(t.clone());
    }
    let table = Arc::new(ClassicalLocationTable::new(n)?);
    Ok(cache.lock().unwrap().entry(n).or_insert(table).clone())
}

/// Stieltjes transform `m(z) = int rho(x) / (x - z) dx`.
///
/// The two roots of `m^2 + z m + 1 = 0` have product one and the transform
/// is the one of modulus below one, so it is taken as the reciprocal of the
/// larger root. That avoids the cancellation in `(-z + sqrt(z^2 - 4)) / 2`
/// for large `|z|` and selects the branch with `Im m * Im z > 0`.
pub fn stieltjes(z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(RmtError::domain(format!(
            "stieltjes transform needs Im z != 0, got {z}"
        )));
    }
    let s = (z * z - 4.0).sqrt();
    let r1 = (-z + s) * 0.5;
    let r2 = (-z - s) * 0.5;
    let big = if r1.norm() >= r2.norm() { r1 } else { r2 };
    Ok(big.inv())
}

/// `m'(z) = m^2 / (1 - m^2)`.
pub fn stieltjes_derivative(z: Complex64) -> Result<Complex64> {
    let m = stieltjes(z)?;
    let m2 = m * m;
    let denom = Complex64::new(1.0, 0.0) - m2;
    if denom.norm() <= f64::EPSILON {
        return Err(RmtError::numeric(format!(
            "m(z)^2 = 1 at z = {z} (spectral edge)"
        )));
    }
    Ok(m2 / denom)
}

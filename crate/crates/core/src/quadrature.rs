//! One-dimensional quadrature: Gauss–Legendre rules (cached per order),
//! composite rules with breakpoints, and an adaptive Gauss–Kronrod 7/15
//! integrator used where a tolerance-driven answer is needed.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Result, RmtError};

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, q) = legendre_pair(n, x);
                dp = nf * (x * p - q) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    let (p, q) = legendre_pair(n, x);
                    dp = nf * (x * p - q) / (x * x - 1.0);
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Cached rule of order `n`.
    pub fn of_order(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().unwrap().get(&n) {
            return rule.clone();
        }
        let rule = Arc::new(Self::compute(n));
        cache.lock().unwrap().entry(n).or_insert(rule).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

/// (P_n(x), P_{n-1}(x)) by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Composite Gauss–Legendre grid: the interval is split at `breaks` (which
/// are clipped to `[a, b]`) and each panel receives a rule whose order is
/// proportional to its length, at least `min_per_panel`.
#[derive(Debug, Clone)]
pub struct CompositeGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeGrid {
    pub fn new(a: f64, b: f64, breaks: &[f64], total: usize, min_per_panel: usize) -> Self {
        let mut cuts: Vec<f64> = vec![a, b];
        cuts.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (b - a));
        let len = b - a;
        let mut points = Vec::with_capacity(total + cuts.len() * min_per_panel);
        let mut weights = Vec::with_capacity(points.capacity());
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let order = (((hi - lo) / len) * total as f64).ceil() as usize;
            let rule = GaussLegendre::of_order(order.max(min_per_panel));
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (&t, &wt) in rule.nodes.iter().zip(&rule.weights) {
                points.push(mid + half * t);
                weights.push(wt * half);
            }
        }
        Self { points, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod 15-point estimate and the |K15 - G7| error proxy on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`. Intervals are bisected greedily by largest error.
/// Nodes never touch the endpoints, so integrable endpoint singularities are
/// admissible (convergence is then slow but monotone).
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (sign, lo, hi) = if a < b { (1.0, a, b) } else { (-1.0, b, a) };
    let (v, e) = gk15(&f, lo, hi);
    let mut heap: Vec<(f64, f64, f64, f64)> = vec![(lo, hi, v, e)];
    let mut err = e;
    let mut iterations = 0usize;
    while err > tol {
        iterations += 1;
        if iterations > 20_000 {
            return Err(RmtError::numeric(format!(
                "adaptive quadrature on [{a}, {b}] stalled at error {err:e}"
            )));
        }
        let (idx, _) = heap
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (l, r, _, e) = heap.swap_remove(idx);
        let m = 0.5 * (l + r);
        if m <= l || m >= r {
            return Err(RmtError::numeric(
                "adaptive quadrature exhausted resolution",
            ));
        }
        let (v1, e1) = gk15(&f, l, m);
        let (v2, e2) = gk15(&f, m, r);
        err += e1 + e2 - e;
        heap.push((l, m, v1, e1));
        heap.push((m, r, v2, e2));
        if iterations.is_multiple_of(64) {
            // Re-sum to shed accumulated cancellation in the running error.
            err = heap.iter().map(|s| s.3).sum();
        }
    }
    let total: f64 = heap.iter().map(|s| s.2).sum();
    Ok(sign * total)
}

//! Eigenvalues of real symmetric matrices: Householder reduction to
//! tridiagonal form followed by implicit-shift QL. A Sturm-sequence counter
//! and bisection solver are kept alongside as an independent check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RmtError};
use crate::semicircle::classical_locations;

/// Dense real symmetric matrix in row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Build from row-major data; the data must be exactly symmetric.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(RmtError::domain(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(RmtError::domain(format!(
                        "entry ({i}, {j}) breaks symmetry"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Build from a generator of the lower triangle (`j <= i`), mirrored.
    pub fn from_lower(n: usize, mut entry: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = entry(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_lower(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `a * self + b * other`, entrywise.
    pub fn combine(&self, a: f64, other: &SymmetricMatrix, b: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(RmtError::domain("dimension mismatch in matrix combination"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self { n: self.n, data })
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.data[i * self.n + i] += shift;
        }
        out
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalMatrix {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || offdiag.len() + 1 != diag.len() {
            return Err(RmtError::domain(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                offdiag.len()
            )));
        }
        Ok(Self { diag, offdiag })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let d: f64 = self.diag.iter().map(|v| v * v).sum();
        let e: f64 = self.offdiag.iter().map(|v| v * v).sum();
        (d + 2.0 * e).sqrt()
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 {
                self.offdiag[i - 1].abs()
            } else {
                0.0
            } + if i + 1 < n {
                self.offdiag[i].abs()
            } else {
                0.0
            };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn to_dense(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_lower(self.n(), |i, j| {
            if i == j {
                self.diag[i]
            } else if i == j + 1 {
                self.offdiag[j]
            } else {
                0.0
            }
        })
    }
}

/// Where a spectrum came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub ensemble: String,
    pub seed: Option<u64>,
    pub trial: Option<u64>,
}

/// Sorted eigenvalues `lambda_1 <= ... <= lambda_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
    pub provenance: Provenance,
}

impl Spectrum {
    /// Sorts the values; NaNs are rejected.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RmtError::numeric("non-finite eigenvalue"));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self {
            values,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// 1-based access, matching the `lambda_i` convention.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Householder reduction to tridiagonal form (eigenvalues only; the
/// orthogonal factor is not accumulated).
///
/// Works on the lower triangle of a row-major copy; the symmetric
/// matrix-vector product and the rank-two update both sweep rows
/// contiguously.
pub fn householder_tridiagonalize(m: &SymmetricMatrix) -> TridiagonalMatrix {
    let n = m.n();
    let mut a = m.as_slice().to_vec();
    let mut diag = vec![0.0; n];
    let mut offdiag = vec![0.0; n.saturating_sub(1)];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let m0 = k + 1;
        let len = n - m0;
        // Column k below the diagonal.
        let alpha = a[m0 * n + k];
        let mut sigma = 0.0;
        for i in m0 + 1..n {
            let x = a[i * n + k];
            sigma += x * x;
        }
        if sigma == 0.0 {
            offdiag[k] = alpha;
            continue;
        }
        let mu = (alpha * alpha + sigma).sqrt();
        let v0 = if alpha <= 0.0 {
            alpha - mu
        } else {
            -sigma / (alpha + mu)
        };
        let beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
        offdiag[k] = mu;
        let v = &mut v[..len];
        v[0] = 1.0;
        for i in 1..len {
            v[i] = a[(m0 + i) * n + k] / v0;
        }
        // p = beta * A22 v using the lower triangle of A22.
        let p = &mut p[..len];
        p.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..len {
            let row = &a[(m0 + i) * n + m0..(m0 + i) * n + m0 + i + 1];
            let vi = v[i];
            let acc = dot_axpy(&row[..i], &v[..i], vi, &mut p[..i]);
            p[i] += acc + row[i] * vi;
        }
        let mut pv = 0.0;
        for i in 0..len {
            p[i] *= beta;
            pv += p[i] * v[i];
        }
        // w = p - (beta/2)(p.v) v, stored back in p.
        let c = 0.5 * beta * pv;
        for i in 0..len {
            p[i] -= c * v[i];
        }
        // A22 -= v w^T + w v^T on the lower triangle.
        for i in 0..len {
            let (vi, wi) = (v[i], p[i]);
            let row = &mut a[(m0 + i) * n + m0..(m0 + i) * n + m0 + i + 1];
            for ((aij, &pj), &vj) in row.iter_mut().zip(&p[..=i]).zip(&v[..=i]) {
                *aij -= vi * pj + wi * vj;
            }
        }
    }
    if n >= 2 {
        offdiag[n - 2] = a[(n - 1) * n + (n - 2)];
    }
    for i in 0..n {
        diag[i] = a[i * n + i];
    }
    TridiagonalMatrix { diag, offdiag }
}

/// Returns `row . v` and adds `s * row` to `p`. Four interleaved partial
/// sums let the compiler vectorise; the summation order is fixed.
fn dot_axpy(row: &[f64], v: &[f64], s: f64, p: &mut [f64]) -> f64 {
    let mut acc = [0.0; 4];
    let split = row.len() - row.len() % 4;
    for ((r, w), q) in row[..split]
        .chunks_exact(4)
        .zip(v[..split].chunks_exact(4))
        .zip(p[..split].chunks_exact_mut(4))
    {
        for k in 0..4 {
            acc[k] += r[k] * w[k];
            q[k] += r[k] * s;
        }
    }
    let mut tail = 0.0;
    for ((&r, &w), q) in row[split..].iter().zip(&v[split..]).zip(&mut p[split..]) {
        tail += r * w;
        *q += r * s;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// All eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson shifts.
pub fn eigen_tridiagonal(t: &TridiagonalMatrix) -> Result<Spectrum> {
    let n = t.n();
    let mut d = t.diag.clone();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&t.offdiag);
    if d.iter().chain(&e).any(|v| !v.is_finite()) {
        return Err(RmtError::numeric("non-finite tridiagonal entry"));
    }
    let max_iter = 50 * n.max(1);
    let mut iterations = 0usize;
    for l in 0..n {
        loop {
            // Find a negligible off-diagonal element at or after l.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > max_iter {
                return Err(RmtError::numeric(format!(
                    "QL iteration did not converge within {max_iter} sweeps"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Spectrum::new(d)
}

/// Eigenvalues of a dense symmetric matrix.
pub fn eigen_symmetric(m: &SymmetricMatrix) -> Result<Spectrum> {
    if m.n() == 0 {
        return Err(RmtError::domain("empty matrix"));
    }
    eigen_tridiagonal(&householder_tridiagonalize(m))
}

/// Number of eigenvalues strictly below `x`, from the signs of the LDL^T
/// pivots of `T - x I`. Zero pivots are nudged to a tiny negative value.
pub fn sturm_count(t: &TridiagonalMatrix, x: f64) -> usize {
    let scale = t
        .diag
        .iter()
        .chain(&t.offdiag)
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let pivmin = f64::MIN_POSITIVE.max(scale * scale * f64::MIN_POSITIVE) / f64::EPSILON;
    let mut count = 0;
    let mut q = t.diag[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..t.n() {
        let e = t.offdiag[i - 1];
        q = t.diag[i] - x - e * e / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (1-based) by bisection on the Sturm count.
pub fn bisection_eigenvalue(t: &TridiagonalMatrix, k: usize, tol: f64) -> f64 {
    let (mut lo, mut hi) = t.gershgorin();
    let pad = 1e-12 * (hi - lo).abs().max(1.0);
    lo -= pad;
    hi += pad;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(t, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All eigenvalues by bisection; the solver-independent reference.
pub fn bisection_spectrum(t: &TridiagonalMatrix, tol: f64) -> Vec<f64> {
    (1..=t.n())
        .map(|k| bisection_eigenvalue(t, k, tol))
        .collect()
}

/// Normalised resolvent trace `(1/N) sum 1/(lambda_j - z)`.
pub fn empirical_stieltjes(s: &Spectrum, z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 {
        return Err(RmtError::domain(
            "empirical Stieltjes transform needs Im z != 0",
        ));
    }
    let sum: Complex64 = s
        .values()
        .iter()
        .map(|&l| (Complex64::new(l, 0.0) - z).inv())
        .sum();
    Ok(sum / s.n() as f64)
}

/// `max_i |lambda_i - gamma_i| N^{2/3} min(i, N+1-i)^{1/3}`.
pub fn rigidity_residual(s: &Spectrum) -> Result<f64> {
    let n = s.n();
    let table = classical_locations(n)?;
    let nf = n as f64;
    Ok(s.values()
        .iter()
        .enumerate()
        .map(|(idx, &l)| {
            let i = idx + 1;
            let edge = i.min(n + 1 - i) as f64;
            (l - table.location(i)).abs() * nf.powf(2.0 / 3.0) * edge.cbrt()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = rng_from_seed(seed);
        SymmetricMatrix::from_lower(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn diagonal_input_is_unchanged() {
        let m = SymmetricMatrix::from_lower(4, |i, j| if i == j { i as f64 - 1.5 } else { 0.0 });
        let t = householder_tridiagonalize(&m);
        assert_eq!(t.diag, vec![-1.5, -0.5, 0.5, 1.5]);
        assert!(t.offdiag.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn two_by_two_is_already_tridiagonal() {
        let m = SymmetricMatrix::from_row_major(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let t = householder_tridiagonalize(&m);
        assert_eq!(t.diag, vec![0.0, 0.0]);
        assert_eq!(t.offdiag[0].abs(), 1.0);
    }

    #[test]
    fn reduction_preserves_invariants_and_spectrum() {
        let m = random_symmetric(20, 3);
        let t = householder_tridiagonalize(&m);
        assert!((t.trace() - m.trace()).abs() < 1e-10 * 20.0);
        assert!((t.frobenius_norm() - m.frobenius_norm()).abs() < 1e-9 * 20.0);
        let ours = eigen_tridiagonal(&t).unwrap();
        let (lo, hi) = (-25.0, 25.0);
        for k in 1..=20 {
            let reference = dense_bisection(&m, k, lo, hi);
            assert!((ours.eigenvalue(k) - reference).abs() < 1e-10, "k={k}");
        }
    }

    /// Negative eigenvalues of `m - x I` from the signs of the leading
    /// principal minors (pivots of unpivoted LDL^T).
    fn dense_sturm_count(m: &SymmetricMatrix, x: f64) -> usize {
        let n = m.n();
        let mut a: Vec<f64> = m.shifted(-x).as_slice().to_vec();
        let mut count = 0;
        for k in 0..n {
            let mut piv = a[k * n + k];
            if piv == 0.0 {
                piv = -1e-300;
            }
            if piv < 0.0 {
                count += 1;
            }
            for i in k + 1..n {
                let l = a[i * n + k] / piv;
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
        count
    }

    fn dense_bisection(m: &SymmetricMatrix, k: usize, mut lo: f64, mut hi: f64) -> f64 {
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if dense_sturm_count(m, mid) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn tridiagonal_closed_forms() {
        let t = TridiagonalMatrix::new(vec![1.0, 2.0, 3.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(eigen_tridiagonal(&t).unwrap().values(), &[1.0, 2.0, 3.0]);
        let t = TridiagonalMatrix::new(vec![0.0, 0.0], vec![1.0]).unwrap();
        let s = eigen_tridiagonal(&t).unwrap();
        assert!((s.eigenvalue(1) + 1.0).abs() < 1e-15 && (s.eigenvalue(2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ql_matches_sturm_bisection() {
        let mut rng = rng_from_seed(11);
        let n = 60;
        let t = TridiagonalMatrix::new(
            (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let ql = eigen_tridiagonal(&t).unwrap();
        let bis = bisection_spectrum(&t, 1e-13);
        for (a, b) in ql.values().iter().zip(&bis) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sturm_count_examples() {
        let t = TridiagonalMatrix::new(vec![1.0, 2.0, 3.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(sturm_count(&t, 2.5), 2);
        let (lo, _) = t.gershgorin();
        assert_eq!(sturm_count(&t, lo - 1.0), 0);
    }

    #[test]
    fn sturm_count_agrees_with_counting_eigenvalues() {
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let n = rng.random_range(2..30);
            let t = TridiagonalMatrix::new(
                (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
                (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let x = rng.random_range(-3.0..3.0);
            let s = eigen_tridiagonal(&t).unwrap();
            let below = s.values().iter().filter(|&&l| l < x).count();
            assert_eq!(sturm_count(&t, x), below);
        }
    }

    #[test]
    fn identity_and_shift() {
        let s = eigen_symmetric(&SymmetricMatrix::identity(7)).unwrap();
        assert!(s.values().iter().all(|&l| (l - 1.0).abs() < 1e-15));
        let m = random_symmetric(30, 9);
        let a = eigen_symmetric(&m).unwrap();
        let b = eigen_symmetric(&m.shifted(0.25)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((y - x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_stieltjes_two_points() {
        let s = Spectrum::new(vec![-1.0, 1.0]).unwrap();
        let z = Complex64::new(0.0, 1.0);
        let m = empirical_stieltjes(&s, z).unwrap();
        assert!((m - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        let mc = empirical_stieltjes(&s, z.conj()).unwrap();
        assert!((mc - m.conj()).norm() < 1e-15);
        assert!(empirical_stieltjes(&s, Complex64::new(0.3, 0.0)).is_err());
    }

    #[test]
    fn rigidity_residual_of_classical_locations_is_zero() {
        let table = classical_locations(50).unwrap();
        let s = Spectrum::new(table.gamma.clone()).unwrap();
        assert_eq!(rigidity_residual(&s).unwrap(), 0.0);
        let mut bumped = table.gamma.clone();
        bumped[24] += 0.01;
        let r = rigidity_residual(&Spectrum::new(bumped).unwrap()).unwrap();
        let expected = 0.01 * 50f64.powf(2.0 / 3.0) * 25f64.cbrt();
        assert!((r - expected).abs() < 1e-12);
    }
}

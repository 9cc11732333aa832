//! Symmetric tridiagonal eigensolver.
//!
//! Eigenvalues come from the implicit QL algorithm with Wilkinson shifts;
//! eigenvectors from inverse iteration on the shifted tridiagonal matrix,
//! with reorthogonalization inside clusters of close eigenvalues. Both parity
//! blocks of the supported Hamiltonians are unreduced tridiagonal matrices,
//! so within a block all eigenvalues are simple.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix: `diag.len() == n`, `offdiag.len() == n - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Self {
        assert!(
            diag.is_empty() && offdiag.is_empty() || offdiag.len() + 1 == diag.len(),
            "offdiag length must be diag length - 1"
        );
        SymTridiagonal { diag, offdiag }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let n = self.dim();
        let mut bound: f64 = 0.0;
        for i in 0..n {
            let mut row = self.diag[i].abs();
            if i > 0 {
                row += self.offdiag[i - 1].abs();
            }
            if i + 1 < n {
                row += self.offdiag[i].abs();
            }
            bound = bound.max(row);
        }
        bound
    }

    /// y = T x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.offdiag[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.offdiag[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }
}

const MAX_QL_SWEEPS: usize = 60;

/// Fast `hypot` for the rotation loop: the Hamiltonian entries here are far
/// from the over/underflow ranges, so the naive form is safe and much
/// cheaper; outside that range it falls back to the library routine.
#[inline]
fn rot_hypot(a: f64, b: f64) -> f64 {
    let s = a * a + b * b;
    if s.is_finite() && s >= f64::MIN_POSITIVE {
        s.sqrt()
    } else {
        a.hypot(b)
    }
}

/// Ascending eigenvalues by the implicit QL method with Wilkinson shifts.
pub fn eigenvalues(t: &SymTridiagonal) -> Result<Vec<f64>> {
    let n = t.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut d = t.diag.clone();
    // Trailing sentinel keeps the rotation loop branch-free at the band edge.
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(&t.offdiag);
    e.push(0.0);
    ql_implicit(&mut d, &mut e).map_err(|l| Error::EigensolverFailure {
        size: n,
        g: f64::NAN,
        detail: format!("QL iteration cap exceeded at index {l}"),
    })?;
    d.sort_by(|a, b| a.partial_cmp(b).expect("non-finite eigenvalue"));
    Ok(d)
}

/// Implicit QL with Wilkinson shifts; `d` and `e` are overwritten, with the
/// eigenvalues left (unsorted) in `d`. `e` must carry a trailing zero.
fn ql_implicit(d: &mut [f64], e: &mut [f64]) -> std::result::Result<(), usize> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Locate a negligible subdiagonal element.
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
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return Err(l);
            }
            // Wilkinson shift from the leading 2x2.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = rot_hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = rot_hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Rotation annihilated exactly; deflate and restart.
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
    Ok(())
}

/// Eigenvalues (ascending) and orthonormal eigenvectors, stored column-major
/// in a flat buffer of length `n * n`.
pub struct TridiagEigen {
    pub values: Vec<f64>,
    vectors: Vec<f64>,
    n: usize,
}

impl TridiagEigen {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    fn vector_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.vectors[k * self.n..(k + 1) * self.n]
    }
}

/// Eigenvalues closer than this (relative to the norm bound) are treated as a
/// cluster and their inverse-iteration vectors are reorthogonalized.
const CLUSTER_REL_GAP: f64 = 1e-3;
const MAX_INVERSE_ITERATIONS: usize = 6;
const RESIDUAL_REL_TOL: f64 = 1e-11;

pub fn eigen_decomposition(t: &SymTridiagonal) -> Result<TridiagEigen> {
    let n = t.dim();
    let values = eigenvalues(t)?;
    let mut eig = TridiagEigen {
        values,
        vectors: vec![0.0; n * n],
        n,
    };
    if n == 0 {
        return Ok(eig);
    }
    if n == 1 {
        eig.vectors[0] = 1.0;
        return Ok(eig);
    }
    let norm = t.norm_bound().max(f64::MIN_POSITIVE);
    let cluster_tol = CLUSTER_REL_GAP * norm;

    let mut cluster_start = 0;
    for k in 0..n {
        if k > 0 && eig.values[k] - eig.values[k - 1] > cluster_tol {
            cluster_start = k;
        }
        let lambda = eig.values[k];
        let mut x = inverse_iteration(t, lambda, norm, &eig, cluster_start, k)?;
        // Deterministic sign: leave gauge fixing to callers, but keep the
        // raw vector reproducible by normalizing against its largest entry.
        normalize(&mut x);
        eig.vector_mut(k).copy_from_slice(&x);
    }
    Ok(eig)
}

fn inverse_iteration(
    t: &SymTridiagonal,
    lambda: f64,
    norm: f64,
    eig: &TridiagEigen,
    cluster_start: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let n = t.dim();
    let lu = ShiftedLu::factor(t, lambda, norm);
    // Back-substitution with a uniform right-hand side seeds the iteration.
    let mut x = vec![f64::EPSILON * norm; n];
    lu.back_substitute(&mut x);
    normalize(&mut x);
    let mut resid = vec![0.0; n];
    for _ in 0..MAX_INVERSE_ITERATIONS {
        orthogonalize(&mut x, eig, cluster_start, k);
        normalize(&mut x);
        if residual_norm(t, lambda, &x, &mut resid) <= RESIDUAL_REL_TOL * norm {
            return Ok(x);
        }
        lu.solve(&mut x);
        normalize(&mut x);
    }
    orthogonalize(&mut x, eig, cluster_start, k);
    normalize(&mut x);
    let r = residual_norm(t, lambda, &x, &mut resid);
    if r <= RESIDUAL_REL_TOL * norm * 10.0 {
        Ok(x)
    } else {
        Err(Error::EigensolverFailure {
            size: n,
            g: f64::NAN,
            detail: format!(
                "inverse iteration residual {r:.3e} exceeds {:.3e} for eigenvalue {lambda}",
                RESIDUAL_REL_TOL * norm * 10.0
            ),
        })
    }
}

fn residual_norm(t: &SymTridiagonal, lambda: f64, x: &[f64], scratch: &mut [f64]) -> f64 {
    t.apply(x, scratch);
    scratch
        .iter()
        .zip(x)
        .map(|(tv, v)| {
            let r = tv - lambda * v;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

fn orthogonalize(x: &mut [f64], eig: &TridiagEigen, cluster_start: usize, k: usize) {
    for j in cluster_start..k {
        let v = eig.vector(j);
        let proj: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= proj * vi;
        }
    }
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        for v in x.iter_mut() {
            *v /= nrm;
        }
    }
}

/// LU factorization of `T - lambda I` with partial pivoting. The factor `U`
/// has two superdiagonals because of pivoting fill-in.
struct ShiftedLu {
    n: usize,
    lower: Vec<f64>,
    swapped: Vec<bool>,
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
}

impl ShiftedLu {
    fn factor(t: &SymTridiagonal, lambda: f64, norm: f64) -> Self {
        let n = t.dim();
        let tiny = f64::EPSILON * norm.max(f64::MIN_POSITIVE);
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut lower = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];

        // Running row (p, q) is the pivot candidate; (r, s, w) the next row.
        let mut p = t.diag[0] - lambda;
        let mut q = if n > 1 { t.offdiag[0] } else { 0.0 };
        for i in 0..n - 1 {
            let r = t.offdiag[i];
            let s = t.diag[i + 1] - lambda;
            let w = if i + 2 < n { t.offdiag[i + 1] } else { 0.0 };
            if r.abs() > p.abs() {
                // Swap rows i and i+1.
                swapped[i] = true;
                u0[i] = r;
                u1[i] = s;
                u2[i] = w;
                let pivot = if u0[i].abs() < tiny { tiny } else { u0[i] };
                u0[i] = pivot;
                let m = p / pivot;
                lower[i] = m;
                p = q - m * s;
                q = -m * w;
            } else {
                let pivot = if p.abs() < tiny { tiny.copysign(if p == 0.0 { 1.0 } else { p }) } else { p };
                u0[i] = pivot;
                u1[i] = q;
                u2[i] = 0.0;
                let m = r / pivot;
                lower[i] = m;
                p = s - m * q;
                q = w;
            }
        }
        u0[n - 1] = if p.abs() < tiny { tiny.copysign(if p == 0.0 { 1.0 } else { p }) } else { p };
        ShiftedLu {
            n,
            lower,
            swapped,
            u0,
            u1,
            u2,
        }
    }

    /// x <- U^-1 x (skips the forward pass; used to seed the iteration).
    fn back_substitute(&self, x: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut acc = x[i];
            if i + 1 < n {
                acc -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                acc -= self.u2[i] * x[i + 2];
            }
            x[i] = acc / self.u0[i];
        }
    }

    /// x <- (T - lambda I)^-1 x via the stored factors.
    fn solve(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n - 1 {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.lower[i] * x[i];
        }
        self.back_substitute(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::jacobi_eigensolve;

    fn to_dense(t: &SymTridiagonal) -> Vec<f64> {
        let n = t.dim();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = t.diag[i];
            if i + 1 < n {
                a[i * n + i + 1] = t.offdiag[i];
                a[(i + 1) * n + i] = t.offdiag[i];
            }
        }
        a
    }

    #[test]
    fn single_element_block() {
        let t = SymTridiagonal::new(vec![-0.5], vec![]);
        assert_eq!(eigenvalues(&t).unwrap(), vec![-0.5]);
        let eig = eigen_decomposition(&t).unwrap();
        assert_eq!(eig.vector(0), &[1.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // Even-parity block of the N = 2 collective-spin model at g = 0.
        let t = SymTridiagonal::new(vec![-0.25, -0.25], vec![-0.25]);
        let vals = eigenvalues(&t).unwrap();
        assert!((vals[0] + 0.5).abs() < 1e-15);
        assert!(vals[1].abs() < 1e-15);
    }

    #[test]
    fn matches_jacobi_oracle_on_random_blocks() {
        // Deterministic LCG so the test is reproducible.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for &n in &[2usize, 5, 16, 33, 64] {
            let diag: Vec<f64> = (0..n).map(|_| 4.0 * next()).collect();
            let offdiag: Vec<f64> = (0..n - 1).map(|_| 2.0 * next()).collect();
            let t = SymTridiagonal::new(diag, offdiag);
            let eig = eigen_decomposition(&t).unwrap();
            let dense = to_dense(&t);
            let oracle = jacobi_eigensolve(&dense, n, true).unwrap();
            for k in 0..n {
                assert!(
                    (eig.values[k] - oracle.values[k]).abs() < 1e-12,
                    "eigenvalue {k} of {n}: {} vs {}",
                    eig.values[k],
                    oracle.values[k]
                );
                // Sign-aligned vector comparison.
                let v = eig.vector(k);
                let w = oracle.vector(k);
                let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                let sign = if dot < 0.0 { -1.0 } else { 1.0 };
                for i in 0..n {
                    assert!(
                        (v[i] - sign * w[i]).abs() < 1e-8,
                        "vector {k} component {i} differs"
                    );
                }
            }
        }
    }

    #[test]
    fn vectors_are_orthonormal_and_low_residual() {
        let n = 80;
        // Graded diagonal with uniform coupling stresses the shift strategy.
        let diag: Vec<f64> = (0..n).map(|i| (i as f64) * 0.37 - 3.0).collect();
        let offdiag = vec![0.8; n - 1];
        let t = SymTridiagonal::new(diag, offdiag);
        let eig = eigen_decomposition(&t).unwrap();
        let norm = t.norm_bound();
        let mut scratch = vec![0.0; n];
        for k in 0..n {
            let v = eig.vector(k);
            t.apply(v, &mut scratch);
            let resid: f64 = scratch
                .iter()
                .zip(v)
                .map(|(tv, vi)| (tv - eig.values[k] * vi).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-10 * norm, "residual {resid} too large at {k}");
            for j in 0..=k {
                let dot: f64 = eig.vector(j).iter().zip(v).map(|(a, b)| a * b).sum();
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-10, "orthonormality failed at ({j},{k})");
            }
        }
    }

    #[test]
    fn eigenvalues_only_agrees_with_decomposition() {
        let t = SymTridiagonal::new(vec![1.0, -2.0, 0.5, 3.0, -1.0], vec![0.3, -0.7, 0.2, 1.1]);
        let vals = eigenvalues(&t).unwrap();
        let eig = eigen_decomposition(&t).unwrap();
        for (a, b) in vals.iter().zip(&eig.values) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn handles_decoupled_blocks() {
        // Zero off-diagonal entries split the matrix; QL must deflate cleanly.
        let t = SymTridiagonal::new(vec![2.0, -1.0, 0.5, 0.5], vec![0.0, 0.4, 0.0]);
        let vals = eigenvalues(&t).unwrap();
        let dense = to_dense(&t);
        let oracle = jacobi_eigensolve(&dense, 4, false).unwrap();
        for (a, b) in vals.iter().zip(&oracle.values) {
            assert!((a - b).abs() < 1e-13);
        }
        let eig = eigen_decomposition(&t).unwrap();
        for k in 0..4 {
            let v = eig.vector(k);
            let mut scratch = vec![0.0; 4];
            t.apply(v, &mut scratch);
            let resid: f64 = scratch
                .iter()
                .zip(v)
                .map(|(tv, vi)| (tv - eig.values[k] * vi).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(resid < 1e-12);
        }
    }
}

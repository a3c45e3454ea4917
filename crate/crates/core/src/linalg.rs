//! Small dense helpers and the Krylov solver used by Newton.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)].re];
    }
    hermitian_eig(m).0
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky(m: &CMat) -> Option<CMat> {
    m.clone().cholesky().map(|c| c.l())
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

/// `log det` of a Hermitian positive-definite matrix.
pub fn log_det(m: &CMat) -> Option<f64> {
    let l = cholesky(m)?;
    Some((0..m.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Operator norm of a Hermitian matrix.
pub fn hermitian_norm(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)
        .into_iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Relative anti-Hermitian part `‖A − Aᴴ‖ / max(1, ‖A‖)` in the Frobenius norm.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    (m - m.adjoint()).norm() / m.norm().max(1.0)
}

pub fn symmetrize(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Dense solve by partial-pivot LU.
pub fn lu_solve(a: DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let x = a.lu().solve(&DVector::from_column_slice(b))?;
    Some(x.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB for `A x = b` with `x` starting at zero.
/// `apply` computes `A v`, `precond` computes `M⁻¹ v`.
pub fn bicgstab(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, KrylovOutcome) {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (
            x,
            KrylovOutcome {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut best = (x.clone(), 1.0);
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let ph = precond(&p);
        v = apply(&ph);
        let denom = dot(&r0, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        let sh = precond(&s);
        let t = apply(&sh);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(&r) / bnorm;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        if rel <= tol {
            return (
                x,
                KrylovOutcome {
                    iterations: it,
                    relative_residual: rel,
                    converged: true,
                },
            );
        }
    }
    // recompute the true residual of the best iterate
    let ax = apply(&best.0);
    let res: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let rel = norm(&res) / bnorm;
    (
        best.0,
        KrylovOutcome {
            iterations: max_iter,
            relative_residual: rel,
            converged: rel <= tol,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eig_sorted_and_reconstructs() {
        let m = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, 0.3),
                Complex64::new(0.5, -0.3),
                Complex64::new(1.0, 0.0),
            ],
        );
        let (vals, vecs) = hermitian_eig(&m);
        assert!(vals[0] < vals[1]);
        let d = CMat::from_diagonal(&DVector::from_iterator(
            2,
            vals.iter().map(|&v| Complex64::new(v, 0.0)),
        ));
        let back = &vecs * d * vecs.adjoint();
        assert!((back - &m).norm() < 1e-13);
        let ld = log_det(&m).unwrap();
        assert!((ld - (2.0f64 - 0.34).ln()).abs() < 1e-13);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 0.5, 3.0, 1.0, 0.0, -1.0, 2.0]);
        let b = [1.0, 2.0, 3.0];
        let apply = |v: &[f64]| (&a * DVector::from_column_slice(v)).iter().copied().collect();
        let (x, out) = bicgstab(apply, |v| v.to_vec(), &b, 1e-13, 50);
        assert!(out.converged);
        let direct = lu_solve(a.clone(), &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - direct[i]).abs() < 1e-11);
        }
    }
}

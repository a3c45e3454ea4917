//! Concave eigenvalue symbols on the positive cone and the linearization of
//! the matrix operators they induce.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Form11Field, MetricField};
use crate::linalg::{self, CMat};

type C = Complex64;

/// A symmetric function of eigenvalues, evaluated on its cone.
pub trait Symbol {
    fn dim(&self) -> usize;

    fn in_cone(&self, lambda: &[f64]) -> bool {
        lambda.iter().all(|&l| l > 0.0)
    }

    fn value(&self, lambda: &[f64]) -> f64;

    fn gradient(&self, lambda: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    /// `f(λ) = Σ log λ_i`.
    LogMA,
    /// `f(λ) = Σ log λ̃_k`, `λ̃_k = (1/(n−1)) Σ_{i≠k} λ_i`.
    NMinus1MA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EigenOperator {
    pub kind: OperatorKind,
    pub dim: usize,
}

impl EigenOperator {
    pub fn new(kind: OperatorKind, dim: usize) -> Result<Self> {
        if dim == 0 || (kind == OperatorKind::NMinus1MA && dim < 2) {
            return Err(Error::InvalidInput(format!(
                "{kind:?} is not defined in dimension {dim}"
            )));
        }
        Ok(Self { kind, dim })
    }

    pub fn log_ma(dim: usize) -> Self {
        Self {
            kind: OperatorKind::LogMA,
            dim,
        }
    }

    fn tilde(&self, lambda: &[f64]) -> Vec<f64> {
        let total: f64 = lambda.iter().sum();
        let d = (self.dim - 1) as f64;
        lambda.iter().map(|&l| (total - l) / d).collect()
    }

    /// Value, gradient and cone flag; value and gradient are `None` off the
    /// cone.
    pub fn eval_f_grad(&self, lambda: &[f64]) -> (Option<(f64, Vec<f64>)>, bool) {
        assert_eq!(lambda.len(), self.dim, "eigenvalue vector has wrong length");
        if !self.in_cone(lambda) {
            return (None, false);
        }
        (Some((self.value(lambda), self.gradient(lambda))), true)
    }

    /// `lim_{t→∞} f(λ + t e_i)`; `−∞` when the ray never enters the domain.
    pub fn directional_limit(&self, lambda: &[f64], i: usize) -> f64 {
        let finite_part_ok = match self.kind {
            OperatorKind::LogMA => lambda.iter().enumerate().all(|(j, &l)| j == i || l > 0.0),
            OperatorKind::NMinus1MA => {
                lambda.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, l)| l).sum::<f64>() > 0.0
            }
        };
        if finite_part_ok {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl Symbol for EigenOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, lambda: &[f64]) -> f64 {
        // sorted so that permuted inputs give bit-identical sums
        let mut sorted = lambda.to_vec();
        sorted.sort_by(f64::total_cmp);
        match self.kind {
            OperatorKind::LogMA => sorted.iter().map(|l| l.ln()).sum(),
            OperatorKind::NMinus1MA => self.tilde(&sorted).iter().map(|l| l.ln()).sum(),
        }
    }

    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        match self.kind {
            OperatorKind::LogMA => lambda.iter().map(|l| 1.0 / l).collect(),
            OperatorKind::NMinus1MA => {
                let t = self.tilde(lambda);
                let d = (self.dim - 1) as f64;
                (0..self.dim)
                    .map(|i| (0..self.dim).filter(|&k| k != i).map(|k| 1.0 / (d * t[k])).sum())
                    .collect()
            }
        }
    }
}

/// `F(A)` and its derivative `C` with respect to `g`, `dF = tr(C dg)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorLinearization {
    pub value: f64,
    pub coefficients: CMat,
    pub eigenvalues: Vec<f64>,
}

const MAX_PENCIL_CONDITION: f64 = 1e12;

/// Eigenvalues of `α^{-1} g` and the `α`-orthonormal eigenbasis `V`.
pub fn pencil_eig(alpha: &CMat, g: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = alpha.nrows();
    if n == 1 {
        let a = alpha[(0, 0)].re;
        if !(a > 0.0) {
            return Err(Error::NotPositiveDefinite { node: 0, min_eig: a });
        }
        return Ok((vec![g[(0, 0)].re / a], CMat::from_element(1, 1, C::new(1.0 / a.sqrt(), 0.0))));
    }
    let l = linalg::cholesky(alpha).ok_or_else(|| Error::NotPositiveDefinite {
        node: 0,
        min_eig: linalg::hermitian_eigenvalues(alpha)[0],
    })?;
    let linv = linalg::inverse(&l).ok_or(Error::DefectivePencil {
        condition: f64::INFINITY,
    })?;
    let m = &linv * g * linv.adjoint();
    let (vals, w) = linalg::hermitian_eig(&m);
    let v = linv.adjoint() * w;
    let sv = v.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_PENCIL_CONDITION) {
        return Err(Error::DefectivePencil { condition });
    }
    Ok((vals, v))
}

pub fn operator_linearization(op: &EigenOperator, alpha: &CMat, g: &CMat) -> Result<OperatorLinearization> {
    linearize_symbol(op, alpha, g)
}

pub fn linearize_symbol(op: &dyn Symbol, alpha: &CMat, g: &CMat) -> Result<OperatorLinearization> {
    let (lambda, v) = pencil_eig(alpha, g)?;
    if !op.in_cone(&lambda) {
        return Err(Error::OutOfCone { node: 0 });
    }
    let grad = op.gradient(&lambda);
    let n = lambda.len();
    let coefficients = CMat::from_fn(n, n, |a, b| {
        (0..n).map(|i| v[(a, i)] * v[(b, i)].conj() * grad[i]).sum()
    });
    Ok(OperatorLinearization {
        value: op.value(&lambda),
        coefficients: linalg::symmetrize(&coefficients),
        eigenvalues: lambda,
    })
}

/// Eigenvalues of `α^{-1} g` at every node.
pub fn relative_eigenvalues(alpha: &MetricField, g: &Form11Field) -> Result<Vec<Vec<f64>>> {
    (0..alpha.node_count())
        .map(|node| {
            pencil_eig(&alpha.at(node), &g.at(node))
                .map(|(l, _)| l)
                .map_err(|e| relabel(e, node))
        })
        .collect()
}

pub(crate) fn relabel(e: Error, node: usize) -> Error {
    match e {
        Error::OutOfCone { .. } => Error::OutOfCone { node },
        Error::NotPositiveDefinite { min_eig, .. } => Error::NotPositiveDefinite { node, min_eig },
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsolutionMode {
    FixedRHS,
    EpsilonRHS,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionReport {
    pub ok: bool,
    pub worst_node: usize,
    pub worst_direction: usize,
    /// Smallest eigenvalue (EpsilonRHS) or smallest `limit − h` (FixedRHS).
    pub margin: f64,
}

pub fn c_subsolution_check(
    op: &EigenOperator,
    alpha: &MetricField,
    chi: &Form11Field,
    h: &[f64],
    mode: SubsolutionMode,
) -> SubsolutionReport {
    let mut report = SubsolutionReport {
        ok: true,
        worst_node: 0,
        worst_direction: 0,
        margin: f64::INFINITY,
    };
    for node in 0..alpha.node_count() {
        let lambda = match pencil_eig(&alpha.at(node), &chi.at(node)) {
            Ok((l, _)) => l,
            Err(_) => {
                return SubsolutionReport {
                    ok: false,
                    worst_node: node,
                    worst_direction: 0,
                    margin: f64::NEG_INFINITY,
                }
            }
        };
        for (i, &l) in lambda.iter().enumerate() {
            let margin = match mode {
                SubsolutionMode::EpsilonRHS => l,
                SubsolutionMode::FixedRHS => op.directional_limit(&lambda, i) - h[node],
            };
            if margin < report.margin {
                report = SubsolutionReport {
                    ok: report.ok,
                    worst_node: node,
                    worst_direction: i,
                    margin,
                };
            }
        }
        let node_ok = match mode {
            SubsolutionMode::EpsilonRHS => op.in_cone(&lambda),
            SubsolutionMode::FixedRHS => (0..lambda.len()).all(|i| op.directional_limit(&lambda, i) > h[node]),
        };
        report.ok &= node_ok;
    }
    report
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub concavity_violations: usize,
    pub gradient_sign_violations: usize,
    pub symmetry_violations: usize,
    pub monotonicity_violations: usize,
    /// Largest `‖∇f − ∇_FD f‖∞ / ‖∇f‖∞` over the sampled points.
    pub max_gradient_error: f64,
}

impl ProbeReport {
    pub fn violations(&self) -> usize {
        self.concavity_violations
            + self.gradient_sign_violations
            + self.symmetry_violations
            + self.monotonicity_violations
    }
}

fn sample_cone(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0f64..2.0).exp()).collect()
}

/// Central-difference gradient with a relative step.
pub fn fd_gradient(f: &dyn Symbol, lambda: &[f64]) -> Vec<f64> {
    (0..lambda.len())
        .map(|i| {
            let h = 1e-5 * lambda[i].abs().max(1e-3);
            let mut p = lambda.to_vec();
            let mut m = lambda.to_vec();
            p[i] += h;
            m[i] -= h;
            (f.value(&p) - f.value(&m)) / (2.0 * h)
        })
        .collect()
}

pub fn concavity_monotonicity_probe(f: &dyn Symbol, trials: usize, seed: u64) -> ProbeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = f.dim();
    let mut report = ProbeReport {
        trials,
        ..Default::default()
    };
    for _ in 0..trials {
        let a = sample_cone(&mut rng, n);
        let b = sample_cone(&mut rng, n);
        let (fa, fb) = (f.value(&a), f.value(&b));
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        if f.value(&mid) < 0.5 * (fa + fb) - 1e-12 {
            report.concavity_violations += 1;
        }
        let grad = f.gradient(&a);
        if grad.iter().any(|&g| !(g > 0.0)) {
            report.gradient_sign_violations += 1;
        }
        let fd = fd_gradient(f, &a);
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(f64::MIN_POSITIVE);
        let err = grad.iter().zip(&fd).fold(0.0f64, |m, (g, d)| m.max((g - d).abs())) / scale;
        report.max_gradient_error = report.max_gradient_error.max(err);
        let mut perm = a.clone();
        perm.shuffle(&mut rng);
        if (f.value(&perm) - fa).abs() > 1e-12 * fa.abs().max(1.0) {
            report.symmetry_violations += 1;
        }
        let bigger: Vec<f64> = a.iter().map(|&x| x + rng.random_range(0.0..1.0)).collect();
        if f.value(&bigger) < fa - 1e-12 {
            report.monotonicity_violations += 1;
        }
    }
    report
}

//! Damped Newton iteration for `F(α^{-1}(χ + s·Hu)) = t·h + εu`, with the
//! continuity, ε and exhaustion paths built on top.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cutoff::{conformal_truncation, truncate_form, Cutoff};
use crate::eigen::{self, EigenOperator, Symbol};
use crate::error::{Error, Result};
use crate::field::{complex_hessian, Form11Field, MetricField};
use crate::grid::{GridGeometry, Topology};
use crate::linalg::{self, CMat};

type C = Complex64;

/// How the scalar unknown enters the matrix argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HessianRoute {
    /// `√−1∂∂̄u` on a complex grid.
    Complex,
    /// The complex Hessian of `u∘π` on a tube, evaluated on the real base
    /// grid: `(u∘π)_{jp̄} = ¼ ∂_j∂_p u`.
    FiberReduced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub alpha: MetricField,
    pub chi: Form11Field,
    pub h: Vec<f64>,
    pub epsilon: f64,
    pub operator: EigenOperator,
    pub route: HessianRoute,
    /// Multiplier `s` in front of the Hessian.
    pub hessian_scale: f64,
}

impl ProblemSpec {
    pub fn new(alpha: MetricField, chi: Form11Field, h: Vec<f64>, epsilon: f64, operator: EigenOperator) -> Result<Self> {
        let p = Self {
            alpha,
            chi,
            h,
            epsilon,
            operator,
            route: HessianRoute::Complex,
            hessian_scale: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_route(mut self, route: HessianRoute, scale: f64) -> Self {
        self.route = route;
        self.hessian_scale = scale;
        self
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.alpha.geometry()
    }

    pub fn validate(&self) -> Result<()> {
        let nodes = self.alpha.node_count();
        if self.chi.node_count() != nodes || self.h.len() != nodes {
            return Err(Error::InvalidInput("problem fields live on different grids".into()));
        }
        if self.operator.dim != self.alpha.dim() {
            return Err(Error::InvalidInput("operator dimension does not match the metric".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if let Some(node) = self.h.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        for node in 0..nodes {
            let (lambda, _) = eigen::pencil_eig(&self.alpha.at(node), &self.chi.at(node))
                .map_err(|e| eigen::relabel(e, node))?;
            if !self.operator.in_cone(&lambda) {
                return Err(Error::OutOfCone { node });
            }
        }
        Ok(())
    }

    /// Hessian term `s·Hu` as a field.
    pub fn hessian(&self, u: &[f64]) -> Result<Form11Field> {
        let raw = match self.route {
            HessianRoute::Complex => complex_hessian(self.geometry(), u)?,
            HessianRoute::FiberReduced => real_hessian(self.geometry(), u)?.scale(0.25),
        };
        Ok(raw.scale(self.hessian_scale))
    }

    /// `sup |F(α^{-1}χ) − h| / ε`.
    pub fn c0_bound(&self, t: f64) -> f64 {
        (0..self.alpha.node_count())
            .map(|node| {
                let (l, _) = eigen::pencil_eig(&self.alpha.at(node), &self.chi.at(node)).expect("validated");
                (self.operator.value(&l) - t * self.h[node]).abs()
            })
            .fold(0.0, f64::max)
            / self.epsilon
    }

    /// `∫ (e^{h} det α − det χ) dV` for the LogMA normalization.
    pub fn compatibility_integral(&self) -> f64 {
        let vol = self.geometry().cell_volumes();
        (0..self.alpha.node_count())
            .map(|node| {
                let da = self.alpha.at(node).determinant().re;
                let dc = self.chi.at(node).determinant().re;
                (self.h[node].exp() * da - dc) * vol[node]
            })
            .sum()
    }

    fn needs_mean_fix(&self) -> bool {
        self.epsilon == 0.0 && self.geometry().is_compact()
    }
}

/// `∂_i∂_j u` in affine coordinates on a real grid.
pub fn real_hessian(geometry: &GridGeometry, u: &[f64]) -> Result<Form11Field> {
    if geometry.is_complex() {
        return Err(Error::InvalidGrid("real Hessian needs a real grid".into()));
    }
    if let Some(node) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { node });
    }
    let n = geometry.dim();
    let uc: Vec<C> = u.iter().map(|&v| C::new(v, 0.0)).collect();
    let mut entries = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in i..n {
            let d: Vec<C> = geometry.mixed_derivative(&uc, i, j).iter().map(|v| C::new(v.re, 0.0)).collect();
            entries[i][j] = d;
        }
        for j in 0..i {
            entries[i][j] = entries[j][i].clone();
        }
    }
    Ok(Form11Field::from_components(geometry.clone(), &entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub linear_tol: f64,
    pub min_step: f64,
    pub armijo: f64,
    /// Newton cap used inside continuity steps.
    pub path_max_iter: usize,
    pub path_min_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            linear_tol: 1e-12,
            min_step: 1e-8,
            armijo: 1e-4,
            path_max_iter: 4,
            path_min_step: 1.0 / 1024.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub stage: String,
    pub t: f64,
    pub epsilon: f64,
    pub iter: usize,
    pub residual_sup: f64,
    pub min_eig: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub residual_sup: f64,
    pub iterations: usize,
    /// `(c_min, c_max)` with `c_min α ≤ χ + s·Hu ≤ c_max α` at every node.
    pub eigen_bounds: (f64, f64),
    pub c0_bound_ok: bool,
    pub history: Vec<HistoryRow>,
    pub t: f64,
    pub epsilon: f64,
    /// Step halvings taken by a continuity path.
    pub halvings: usize,
}

struct Evaluation {
    residual: Vec<f64>,
    coefficients: Vec<CMat>,
    bounds: (f64, f64),
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn evaluate(problem: &ProblemSpec, t: f64, u: &[f64]) -> Result<Evaluation> {
    let g = problem.chi.add(&problem.hessian(u)?);
    let nodes = u.len();
    let mut residual = Vec::with_capacity(nodes);
    let mut coefficients = Vec::with_capacity(nodes);
    let mut bounds = (f64::INFINITY, f64::NEG_INFINITY);
    for node in 0..nodes {
        let lin = eigen::operator_linearization(&problem.operator, &problem.alpha.at(node), &g.at(node))
            .map_err(|e| eigen::relabel(e, node))?;
        bounds.0 = bounds.0.min(lin.eigenvalues[0]);
        bounds.1 = bounds.1.max(*lin.eigenvalues.last().unwrap());
        residual.push(lin.value - t * problem.h[node] - problem.epsilon * u[node]);
        coefficients.push(lin.coefficients);
    }
    Ok(Evaluation {
        residual,
        coefficients,
        bounds,
    })
}

struct Jacobian<'a> {
    problem: &'a ProblemSpec,
    coefficients: &'a [CMat],
    weights: Vec<f64>,
}

impl Jacobian<'_> {
    fn mean(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let hv = self.problem.hessian(v).expect("finite direction");
        let n = self.problem.alpha.dim();
        let shift = if self.problem.needs_mean_fix() { self.mean(v) } else { 0.0 };
        (0..v.len())
            .map(|node| {
                let c = &self.coefficients[node];
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc += (c[(b, a)] * hv.entry(node, a, b)).re;
                    }
                }
                acc - self.problem.epsilon * v[node] - shift
            })
            .collect()
    }

    /// Inverse of the constant-coefficient operator built from the mean
    /// coefficients, applied in Fourier space.
    fn fourier_preconditioner(&self) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        let geom = self.problem.geometry();
        let n = self.problem.alpha.dim();
        let nodes = geom.node_count();
        let mut cbar = CMat::zeros(n, n);
        for c in self.coefficients {
            cbar += c;
        }
        cbar /= C::new(nodes as f64, 0.0);
        let shape = geom.shape();
        let ks: Vec<Vec<f64>> = (0..shape.len()).map(|a| geom.wavenumbers(a).unwrap()).collect();
        let s = self.problem.hessian_scale;
        let eps = self.problem.epsilon;
        let mean_fix = self.problem.needs_mean_fix();
        let route = self.problem.route;
        let symbol: Vec<f64> = (0..nodes)
            .map(|node| {
                let idx = geom.multi_index(node);
                let k: Vec<f64> = idx.iter().enumerate().map(|(a, &j)| ks[a][j]).collect();
                let mut acc = C::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        // symbol of the (a, b) Hessian entry
                        let hab = match route {
                            HessianRoute::Complex => {
                                let za = C::new(k[2 * a + 1], k[2 * a]) * 0.5;
                                let zb = C::new(-k[2 * b + 1], k[2 * b]) * 0.5;
                                za * zb
                            }
                            HessianRoute::FiberReduced => C::new(-0.25 * k[a] * k[b], 0.0),
                        };
                        acc += cbar[(b, a)] * hab;
                    }
                }
                let mut sym = s * acc.re - eps;
                if node == 0 && mean_fix {
                    sym -= 1.0;
                }
                if sym.abs() < 1e-14 {
                    sym = -1.0;
                }
                sym
            })
            .collect();
        move |r: &[f64]| {
            let mut data: Vec<C> = r.iter().map(|&x| C::new(x, 0.0)).collect();
            geom.fft_all(&mut data, false);
            for (d, s) in data.iter_mut().zip(&symbol) {
                *d /= *s * nodes as f64;
            }
            geom.fft_all(&mut data, true);
            data.iter().map(|v| v.re).collect()
        }
    }

    fn solve(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        let nodes = rhs.len();
        let geom = self.problem.geometry();
        if geom.all_periodic() {
            let cap = ((10.0 * (nodes as f64).sqrt()).ceil() as usize).max(20);
            let pre = self.fourier_preconditioner();
            let (x, out) = linalg::bicgstab(|v| self.apply(v), pre, rhs, tol, cap);
            if out.converged {
                return Ok(x);
            }
            if nodes > DENSE_LIMIT {
                if out.relative_residual < 1e-6 {
                    return Ok(x);
                }
                return Err(Error::LinearSolveFailure {
                    iterations: out.iterations,
                    relative_residual: out.relative_residual,
                });
            }
        }
        if nodes > DENSE_LIMIT {
            return Err(Error::InvalidGrid(format!(
                "{nodes} nodes exceed the dense solver limit {DENSE_LIMIT}"
            )));
        }
        let mut a = DMatrix::<f64>::zeros(nodes, nodes);
        let mut e = vec![0.0; nodes];
        for j in 0..nodes {
            e[j] = 1.0;
            let col = self.apply(&e);
            e[j] = 0.0;
            for i in 0..nodes {
                a[(i, j)] = col[i];
            }
        }
        let x = linalg::lu_solve(a, rhs).ok_or(Error::LinearSolveFailure {
            iterations: 1,
            relative_residual: f64::INFINITY,
        })?;
        let r = self.apply(&x);
        let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rn = r.iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let rel = if bn > 0.0 { rn / bn } else { 0.0 };
        if rel < 1e-6 {
            Ok(x)
        } else {
            Err(Error::LinearSolveFailure {
                iterations: 1,
                relative_residual: rel,
            })
        }
    }
}

const DENSE_LIMIT: usize = 4096;

fn mean_weights(geometry: &GridGeometry) -> Vec<f64> {
    let vol = geometry.cell_volumes();
    let total: f64 = vol.iter().sum();
    vol.iter().map(|v| v / total).collect()
}

fn project_mean(u: &mut [f64], weights: &[f64]) {
    let m: f64 = u.iter().zip(weights).map(|(a, w)| a * w).sum();
    for x in u.iter_mut() {
        *x -= m;
    }
}

/// The linearized residual map applied to `v` at `u`; exposed for checks.
pub fn apply_linearization(problem: &ProblemSpec, t: f64, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let ev = evaluate(problem, t, u)?;
    let jac = Jacobian {
        problem,
        coefficients: &ev.coefficients,
        weights: mean_weights(problem.geometry()),
    };
    Ok(jac.apply(v))
}

/// `F(α^{-1}(χ + s·Hu)) − t·h − εu` at every node.
pub fn residual(problem: &ProblemSpec, t: f64, u: &[f64]) -> Result<Vec<f64>> {
    Ok(evaluate(problem, t, u)?.residual)
}

fn newton_with_cap(problem: &ProblemSpec, t: f64, init: &[f64], config: &SolverConfig, cap: usize, stage: &str) -> Result<SolveReport> {
    problem.validate()?;
    if init.len() != problem.alpha.node_count() {
        return Err(Error::InvalidInput("initial guess has the wrong length".into()));
    }
    let weights = mean_weights(problem.geometry());
    let mean_fix = problem.needs_mean_fix();
    let mut u = init.to_vec();
    if mean_fix {
        project_mean(&mut u, &weights);
    }
    let mut ev = evaluate(problem, t, &u)?;
    let mut res = sup(&ev.residual);
    let mut history = vec![HistoryRow {
        stage: stage.to_string(),
        t,
        epsilon: problem.epsilon,
        iter: 0,
        residual_sup: res,
        min_eig: ev.bounds.0,
        step_size: 0.0,
    }];
    let mut iter = 0;
    while res >= config.tol {
        if iter >= cap {
            return Err(Error::IterationCap(cap));
        }
        iter += 1;
        let jac = Jacobian {
            problem,
            coefficients: &ev.coefficients,
            weights: weights.clone(),
        };
        let rhs: Vec<f64> = ev.residual.iter().map(|r| -r).collect();
        let mut delta = jac.solve(&rhs, config.linear_tol)?;
        if mean_fix {
            project_mean(&mut delta, &weights);
        }
        let mut step = 1.0;
        let mut feasible_seen = false;
        let accepted = loop {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            match evaluate(problem, t, &trial) {
                Ok(tev) => {
                    feasible_seen = true;
                    let tres = sup(&tev.residual);
                    if tres <= (1.0 - config.armijo * step) * res {
                        break Some((trial, tev, tres));
                    }
                }
                Err(Error::OutOfCone { .. }) | Err(Error::NotPositiveDefinite { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
            if step < config.min_step {
                break None;
            }
        };
        match accepted {
            Some((trial, tev, tres)) => {
                u = trial;
                ev = tev;
                res = tres;
            }
            None if feasible_seen => {
                return Err(Error::LineSearchStalled {
                    iteration: iter,
                    residual: res,
                })
            }
            None => return Err(Error::ConeExit { iteration: iter }),
        }
        history.push(HistoryRow {
            stage: stage.to_string(),
            t,
            epsilon: problem.epsilon,
            iter,
            residual_sup: res,
            min_eig: ev.bounds.0,
            step_size: step,
        });
    }
    let mut report = SolveReport {
        solution: u,
        residual_sup: res,
        iterations: iter,
        eigen_bounds: ev.bounds,
        c0_bound_ok: true,
        history,
        t,
        epsilon: problem.epsilon,
        halvings: 0,
    };
    report.c0_bound_ok = problem.epsilon == 0.0 || c0_bound_check(problem, &report);
    Ok(report)
}

pub fn newton_solve(problem: &ProblemSpec, t: f64, init: &[f64], config: &SolverConfig) -> Result<SolveReport> {
    newton_with_cap(problem, t, init, config, config.max_iter, "newton")
}

/// `sup|u| ≤ sup|F(α^{-1}χ) − t·h|/ε + 1e-9`.
pub fn c0_bound_check(problem: &ProblemSpec, report: &SolveReport) -> bool {
    if problem.epsilon <= 0.0 {
        return false;
    }
    sup(&report.solution) <= problem.c0_bound(report.t) + 1e-9
}

/// March `t` from 0 to 1, halving the step whenever Newton fails.
pub fn continuity_path(problem: &ProblemSpec, steps: usize, config: &SolverConfig) -> Result<SolveReport> {
    if !(problem.epsilon > 0.0) {
        return Err(Error::InvalidInput("continuity path needs epsilon > 0".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("continuity path needs at least one step".into()));
    }
    let zero = vec![0.0; problem.alpha.node_count()];
    let mut current = newton_with_cap(problem, 0.0, &zero, config, config.max_iter, "path")?;
    let mut history = current.history.clone();
    let mut t = 0.0;
    let mut dt = 1.0 / steps as f64;
    let mut halvings = 0;
    while t < 1.0 {
        let next_t = (t + dt).min(1.0);
        match newton_with_cap(problem, next_t, &current.solution, config, config.path_max_iter, "path") {
            Ok(rep) => {
                history.extend(rep.history.iter().cloned());
                current = rep;
                t = next_t;
            }
            Err(Error::PathStalled { .. }) => unreachable!(),
            Err(e @ (Error::NonFinite { .. } | Error::InvalidInput(_) | Error::InvalidGrid(_))) => return Err(e),
            Err(_) => {
                dt *= 0.5;
                halvings += 1;
                if dt < config.path_min_step {
                    return Err(Error::PathStalled {
                        t,
                        min_step: config.path_min_step,
                    });
                }
            }
        }
    }
    current.history = history;
    current.halvings = halvings;
    current.c0_bound_ok = c0_bound_check(problem, &current);
    Ok(current)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPathReport {
    pub epsilons: Vec<f64>,
    pub reports: Vec<SolveReport>,
    /// `‖u_{ε_k} − u_{ε_{k+1}}‖_sup`.
    pub cauchy: Vec<f64>,
    pub non_cauchy: bool,
    pub compatibility_integral: f64,
    pub compatible: bool,
    /// Zero-mean extrapolation to `ε = 0` when the data are compatible.
    pub extrapolated: Option<Vec<f64>>,
    /// Sup residual of the extrapolated field in the `ε = 0` equation.
    pub extrapolated_residual: Option<f64>,
}

/// Neville extrapolation of samples `(x_k, y_k)` to `x = 0`.
pub fn polynomial_extrapolate(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len();
    let mut p = ys.to_vec();
    for k in 1..m {
        for j in 0..m - k {
            p[j] = (xs[j + k] * p[j] - xs[j] * p[j + 1]) / (xs[j + k] - xs[j]);
        }
    }
    p[0]
}

/// Bulirsch–Stoer rational extrapolation of `(x_k, y_k)` to `x = 0`, with
/// `x` decreasing; `None` when the tableau degenerates.
pub fn rational_extrapolate(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let m = xs.len();
    let mut older = vec![0.0; m];
    let mut prev = ys.to_vec();
    for k in 1..m {
        let mut cur = vec![0.0; m - k];
        for i in 0..m - k {
            let d = prev[i + 1] - prev[i];
            if d == 0.0 {
                cur[i] = prev[i + 1];
                continue;
            }
            let den = (xs[i] / xs[i + k]) * (1.0 - d / (prev[i + 1] - older[i + 1])) - 1.0;
            cur[i] = prev[i + 1] + d / den;
            if !cur[i].is_finite() {
                return None;
            }
        }
        older = prev;
        prev = cur;
    }
    Some(prev[0])
}

/// Nodewise extrapolation of fields to `x = 0`: rational where the tableau
/// is regular, polynomial otherwise.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[Vec<f64>]) -> Vec<f64> {
    (0..ys[0].len())
        .map(|i| {
            let col: Vec<f64> = ys.iter().map(|y| y[i]).collect();
            rational_extrapolate(xs, &col).unwrap_or_else(|| polynomial_extrapolate(xs, &col))
        })
        .collect()
}

pub const COMPATIBILITY_TOL: f64 = 1e-10;

pub fn epsilon_path(problem: &ProblemSpec, eps_sequence: &[f64], config: &SolverConfig) -> Result<EpsilonPathReport> {
    if eps_sequence.is_empty()
        || eps_sequence.iter().any(|&e| !(e > 0.0))
        || eps_sequence.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidInput("epsilon sequence must be positive and strictly decreasing".into()));
    }
    let nodes = problem.alpha.node_count();
    let mut init = vec![0.0; nodes];
    let mut reports = Vec::new();
    for &eps in eps_sequence {
        let mut p = problem.clone();
        p.epsilon = eps;
        let mut rep = newton_with_cap(&p, 1.0, &init, config, config.max_iter, "epsilon")?;
        rep.c0_bound_ok = c0_bound_check(&p, &rep);
        init = rep.solution.clone();
        reports.push(rep);
    }
    let cauchy: Vec<f64> = reports
        .windows(2)
        .map(|w| {
            w[0].solution
                .iter()
                .zip(&w[1].solution)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .collect();
    let non_cauchy = cauchy.windows(2).any(|w| w[1] > w[0]);
    let vol: f64 = problem.geometry().cell_volumes().iter().sum();
    let integral = problem.compatibility_integral();
    let compatible = !problem.geometry().is_compact() || integral.abs() <= COMPATIBILITY_TOL * vol;
    let (extrapolated, extrapolated_residual) = if compatible && problem.geometry().is_compact() {
        let weights = mean_weights(problem.geometry());
        let ys: Vec<Vec<f64>> = reports
            .iter()
            .map(|r| {
                let mut u = r.solution.clone();
                project_mean(&mut u, &weights);
                u
            })
            .collect();
        let mut phi = extrapolate_to_zero(eps_sequence, &ys);
        project_mean(&mut phi, &mean_weights(problem.geometry()));
        let mut p0 = problem.clone();
        p0.epsilon = 0.0;
        let r = residual(&p0, 1.0, &phi).map(|r| sup(&r)).unwrap_or(f64::INFINITY);
        (Some(phi), Some(r))
    } else {
        (None, None)
    };
    Ok(EpsilonPathReport {
        epsilons: eps_sequence.to_vec(),
        reports,
        cauchy,
        non_cauchy,
        compatibility_integral: integral,
        compatible,
        extrapolated,
        extrapolated_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionReport {
    pub rhos: Vec<f64>,
    pub kappa: f64,
    pub inner_nodes: usize,
    pub solutions: Vec<Vec<f64>>,
    /// Inner-region sup differences of successive solutions.
    pub differences: Vec<f64>,
    pub monotone: bool,
    pub stabilized: bool,
    pub reports: Vec<SolveReport>,
}

/// `(e^{2F̃}α, e^{2F̃}χ)` with `h`, `ε` and the operator unchanged.
pub fn truncate_problem(problem: &ProblemSpec, rho0: f64, kappa: f64) -> Result<ProblemSpec> {
    let mut out = ProblemSpec::new(
        conformal_truncation(&problem.alpha, rho0, kappa)?,
        truncate_form(&problem.chi, rho0, kappa)?,
        problem.h.clone(),
        problem.epsilon,
        problem.operator,
    )?;
    out.route = problem.route;
    out.hessian_scale = problem.hessian_scale;
    Ok(out)
}

/// Solve the truncated problems built by `build(ρ)` for increasing `ρ` and
/// compare them on `{ρ̃ < (1 − κ + κ²) ρ_min}`. The grids must share their
/// spacing so inner nodes coincide.
pub fn exhaustion_solve(
    rhos: &[f64],
    kappa: f64,
    tol: f64,
    build: impl Fn(f64) -> Result<ProblemSpec>,
    config: &SolverConfig,
) -> Result<ExhaustionReport> {
    let cutoff = Cutoff::new(kappa)?;
    if rhos.is_empty() || rhos.windows(2).any(|w| w[1] <= w[0]) || rhos[0] <= 0.0 {
        return Err(Error::InvalidInput("rho values must be positive and increasing".into()));
    }
    let inner_radius = cutoff.transition().0 * rhos[0];
    let mut solutions = Vec::new();
    let mut reports = Vec::new();
    let mut inner_nodes = usize::MAX;
    let mut spacing = None;
    for &rho in rhos {
        let problem = build(rho)?;
        let geom = problem.geometry();
        if geom.topology() != Topology::TruncatedRadial {
            return Err(Error::InvalidGrid("exhaustion needs radial grids".into()));
        }
        let h = geom.radial().unwrap().spacing();
        match spacing {
            None => spacing = Some(h),
            Some(h0) if (h - h0).abs() > 1e-12 * h0 => {
                return Err(Error::InvalidGrid("exhaustion grids must share their spacing".into()))
            }
            _ => {}
        }
        let count = (0..geom.node_count())
            .take_while(|&j| geom.radial_distance(j).unwrap() < inner_radius)
            .count();
        inner_nodes = inner_nodes.min(count);
        let zero = vec![0.0; geom.node_count()];
        let rep = newton_solve(&problem, 1.0, &zero, config)?;
        solutions.push(rep.solution.clone());
        reports.push(rep);
    }
    let differences: Vec<f64> = solutions
        .windows(2)
        .map(|w| (0..inner_nodes).fold(0.0f64, |m, j| m.max((w[0][j] - w[1][j]).abs())))
        .collect();
    let monotone = differences.windows(2).all(|w| w[1] <= w[0]);
    let stabilized = differences.last().is_some_and(|&d| d < tol);
    Ok(ExhaustionReport {
        rhos: rhos.to_vec(),
        kappa,
        inner_nodes,
        solutions,
        differences,
        monotone,
        stabilized,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_torus_grid;
    use std::f64::consts::PI;

    fn flat_problem(res: usize, h: Vec<f64>, eps: f64) -> ProblemSpec {
        let g = make_torus_grid(1, res, &[2.0 * PI; 2]).unwrap();
        let alpha = MetricField::flat(g);
        let chi = alpha.form().clone();
        ProblemSpec::new(alpha, chi, h, eps, EigenOperator::log_ma(1)).unwrap()
    }

    #[test]
    fn exact_root_needs_no_iterations() {
        let p = flat_problem(16, vec![0.0; 256], 0.0);
        let r = newton_solve(&p, 1.0, &vec![0.0; 256], &SolverConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(sup(&r.solution), 0.0);
    }

    #[test]
    fn constant_ansatz() {
        let c = 0.7;
        let p = flat_problem(16, vec![c; 256], 1.0);
        let r = newton_solve(&p, 1.0, &vec![0.0; 256], &SolverConfig::default()).unwrap();
        assert!(r.solution.iter().all(|u| (u + c).abs() < 1e-12));
        assert!(r.c0_bound_ok);
    }

    #[test]
    fn linearization_matches_difference_quotient() {
        let g = make_torus_grid(1, 16, &[2.0 * PI; 2]).unwrap();
        let h: Vec<f64> = (0..256).map(|i| 0.3 * g.node_coordinates(i)[0].cos()).collect();
        let p = flat_problem(16, h, 0.5);
        let u: Vec<f64> = (0..256).map(|i| 0.2 * g.node_coordinates(i)[1].sin()).collect();
        let v: Vec<f64> = (0..256).map(|i| (i as f64 * 0.37).sin()).collect();
        let jv = apply_linearization(&p, 1.0, &u, &v).unwrap();
        let step = 1e-6;
        let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + step * b).collect();
        let um: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - step * b).collect();
        let rp = residual(&p, 1.0, &up).unwrap();
        let rm = residual(&p, 1.0, &um).unwrap();
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * step)).collect();
        let err = jv.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-6 * sup(&jv), "{err}");
    }

    #[test]
    fn extrapolation_recovers_exact_models() {
        let xs = [0.1, 0.01, 0.001];
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 + 3.0 * x - x * x]).collect();
        let col: Vec<f64> = ys.iter().map(|y| y[0]).collect();
        assert!((polynomial_extrapolate(&xs, &col) - 2.0).abs() < 1e-13);
        let pole: Vec<f64> = xs.iter().map(|x| 1.0 / (1.0 + 4.0 * x)).collect();
        assert!((rational_extrapolate(&xs, &pole).unwrap() - 1.0).abs() < 1e-14);
    }
}

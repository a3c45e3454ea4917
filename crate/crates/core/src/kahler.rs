//! Kähler–Einstein and prescribed Ricci constructions, Einstein residuals and
//! the Kähler–Ricci flow with its maximum-principle monitor.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curvature::{self, curvature_package, ricci_form};
use crate::eigen::{self, EigenOperator};
use crate::error::{Error, Result};
use crate::field::{complex_hessian, Form11Field, MetricField};
use crate::linalg;
use crate::solver::{
    epsilon_path, exhaustion_solve, newton_solve, truncate_problem, EpsilonPathReport, ExhaustionReport, ProblemSpec, SolveReport, SolverConfig,
    COMPATIBILITY_TOL,
};

type C = Complex64;

/// Largest eigenvalue of `g^{-1} W` over all nodes, with its node.
pub fn max_relative_eigenvalue(g: &MetricField, w: &Form11Field) -> (f64, usize) {
    (0..g.node_count())
        .map(|node| {
            let (l, _) = eigen::pencil_eig(&g.at(node), &w.at(node)).expect("metric is positive definite");
            (*l.last().unwrap(), node)
        })
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
}

/// The Einstein-recipe problem: `h₀ = −Ric(α)`, `h = log det α / det h₀`,
/// solved as `F(h₀^{-1}(h₀ + √−1∂∂̄u)) = h + u`.
pub fn kahler_einstein_problem(alpha: &MetricField) -> Result<ProblemSpec> {
    let ric = ricci_form(alpha)?;
    let (max_eig, node) = (0..alpha.node_count())
        .map(|node| (*linalg::hermitian_eigenvalues(&ric.at(node)).last().unwrap(), node))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
    if !(max_eig < 0.0) {
        return Err(Error::RicciNotNegative { node, max_eig });
    }
    let h0 = MetricField::from_form(ric.scale(-1.0))?;
    let h: Vec<f64> = alpha.log_det().iter().zip(h0.log_det()).map(|(a, b)| a - b).collect();
    let chi = h0.form().clone();
    ProblemSpec::new(h0, chi, h, 1.0, EigenOperator::log_ma(alpha.dim()))
}

/// `g = h₀ + √−1∂∂̄u` for a solved Einstein-recipe problem.
pub fn einstein_metric(problem: &ProblemSpec, u: &[f64]) -> Result<MetricField> {
    MetricField::from_form(problem.chi.add(&complex_hessian(problem.geometry(), u)?))
}

/// Cutoff parameter used when a radial model is truncated at its own radius.
pub const DEFAULT_KAPPA: f64 = 0.1;

/// On radial models the Einstein-recipe problem is conformally truncated at
/// the grid radius (with `h` untouched), which makes the truncated reference
/// metric complete; the returned metric is `h₀ + √−1∂∂̄u` without the factor.
pub fn kahler_einstein_solve(alpha: &MetricField, config: &SolverConfig) -> Result<(MetricField, SolveReport)> {
    let problem = kahler_einstein_problem(alpha)?;
    let solved = match alpha.geometry().radial() {
        Some(r) => truncate_problem(&problem, r.truncation_radius, DEFAULT_KAPPA)?,
        None => problem.clone(),
    };
    let report = newton_solve(&solved, 1.0, &vec![0.0; alpha.node_count()], config)?;
    Ok((einstein_metric(&problem, &report.solution)?, report))
}

/// Einstein recipe over an exhaustion: `build(ρ)` gives the reference metric
/// on a radial grid of radius `ρ`. Returns the report and the metric of the
/// largest truncation.
pub fn kahler_einstein_exhaustion(
    rhos: &[f64],
    kappa: f64,
    tol: f64,
    build: impl Fn(f64) -> Result<MetricField>,
    config: &SolverConfig,
) -> Result<(ExhaustionReport, MetricField)> {
    let report = exhaustion_solve(rhos, kappa, tol, |rho| truncate_problem(&kahler_einstein_problem(&build(rho)?)?, rho, kappa), config)?;
    let problem = kahler_einstein_problem(&build(*rhos.last().unwrap())?)?;
    let metric = einstein_metric(&problem, report.solutions.last().unwrap())?;
    Ok((report, metric))
}

/// Largest `‖g^{-1}(Ric(g) − λg)‖` over the given nodes.
pub fn einstein_residual_on(metric: &MetricField, lambda: f64, nodes: impl IntoIterator<Item = usize>) -> Result<f64> {
    let ric = ricci_form(metric)?;
    Ok(nodes
        .into_iter()
        .map(|node| curvature::einstein_residual_at(metric, &ric, lambda, node))
        .fold(0.0, f64::max))
}

/// Sup over nodes of `‖g^{-1}(Ric(g) − λg)‖`, the operator norm measured
/// in `g`.
pub fn einstein_residual(metric: &MetricField, lambda: f64) -> Result<f64> {
    Ok(curvature::einstein_residual_from(metric, &ricci_form(metric)?, lambda))
}

#[derive(Debug, Clone)]
pub struct PrescribedRicciOutcome {
    pub metric: MetricField,
    pub potential: Vec<f64>,
    pub path: EpsilonPathReport,
    /// Final `ε = 0` solve seeded by the extrapolated potential.
    pub polished: SolveReport,
    /// `sup ‖Ric(ω_φ) − (Ric(ω) − √−1∂∂̄f)‖`.
    pub identity_residual: f64,
    pub gauduchon: (f64, f64),
}

pub fn prescribed_ricci_solve(omega: &MetricField, f: &[f64], deltas: &[f64], config: &SolverConfig) -> Result<PrescribedRicciOutcome> {
    let problem = ProblemSpec::new(
        omega.clone(),
        omega.form().clone(),
        f.to_vec(),
        0.0,
        EigenOperator::log_ma(omega.dim()),
    )?;
    let geom = omega.geometry();
    if geom.is_compact() {
        let integral = problem.compatibility_integral();
        let vol: f64 = geom.cell_volumes().iter().sum();
        if integral.abs() > COMPATIBILITY_TOL * vol {
            return Err(Error::CompatibilityViolated { integral });
        }
    }
    let path = epsilon_path(&problem, deltas, config)?;
    let seed = match &path.extrapolated {
        Some(phi) => phi.clone(),
        None => path.reports.last().unwrap().solution.clone(),
    };
    let mut polished = newton_solve(&problem, 1.0, &seed, config)?;
    // A few extra Newton steps shrink the residual towards roundoff, since
    // the identity check differentiates it twice.
    for _ in 0..3 {
        let mut tight = *config;
        tight.tol = polished.residual_sup * 1e-2;
        tight.max_iter = 2;
        match newton_solve(&problem, 1.0, &polished.solution, &tight) {
            Ok(better) => polished = better,
            Err(_) => break,
        }
    }
    let phi = polished.solution.clone();
    let metric = MetricField::from_form(omega.form().add(&complex_hessian(geom, &phi)?))?;
    let target = ricci_form(omega)?.sub(&curvature::ddbar_form(geom, f));
    let identity_residual = ricci_form(&metric)?.sub(&target).sup_norm();
    let gauduchon = curvature::gauduchon_residuals(&metric);
    Ok(PrescribedRicciOutcome {
        metric,
        potential: phi,
        path,
        polished,
        identity_residual,
        gauduchon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowMonitor {
    pub t: f64,
    pub sup_rm: f64,
    /// `r(t)`: largest eigenvalue of `g^{-1} Ric` over all nodes.
    pub max_ricci_eig: f64,
    pub min_metric_eig: f64,
    /// Smallest `c` with `c^{-1} g(0) ≤ g(t) ≤ c g(0)`.
    pub equivalence: f64,
    /// Sup of the coordinate gradient of `|Rm|_g`.
    pub rm_gradient: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub metrics: Vec<MetricField>,
    pub monitors: Vec<FlowMonitor>,
    /// Ricci forms at the stored times.
    pub riccis: Vec<Form11Field>,
}

/// `0.2 h² / (4 λ_max(g^{-1}))` taken node by node with the local spacing,
/// which is `0.2 h_min² / (4 sup λ_max(g^{-1}))` on uniform grids.
pub fn flow_stability_bound(g: &MetricField) -> f64 {
    let geom = g.geometry();
    (0..g.node_count())
        .map(|node| {
            let h = geom.local_spacing(node);
            0.2 * h * h * linalg::hermitian_eigenvalues(&g.at(node))[0] / 4.0
        })
        .fold(f64::INFINITY, f64::min)
}

fn monitor(t: f64, g0: &MetricField, g: &MetricField) -> Result<(FlowMonitor, Form11Field)> {
    let pkg = curvature_package(g)?;
    let (r, _) = max_relative_eigenvalue(g, &pkg.ricci);
    let mut equivalence: f64 = 1.0;
    for node in 0..g.node_count() {
        let (l, _) = eigen::pencil_eig(&g0.at(node), &g.at(node))?;
        equivalence = equivalence.max(*l.last().unwrap()).max(1.0 / l[0]);
    }
    let geom = g.geometry();
    let rm: Vec<C> = pkg.curvature_pointwise.iter().map(|&v| C::new(v, 0.0)).collect();
    let rm_gradient = (0..g.dim())
        .map(|k| geom.dz(&rm, k).iter().fold(0.0, |m: f64, v| m.max(2.0 * v.norm())))
        .fold(0.0, f64::max);
    Ok((
        FlowMonitor {
            t,
            sup_rm: pkg.norms.curvature,
            max_ricci_eig: r,
            min_metric_eig: g.min_eigenvalue(),
            equivalence,
            rm_gradient,
        },
        pkg.ricci,
    ))
}

/// Explicit Euler for `∂_t g = −4 Ric(g)`.
pub fn kahler_ricci_flow(g0: &MetricField, t_final: f64, dt: f64) -> Result<FlowTrajectory> {
    if !(dt > 0.0 && t_final >= 0.0) {
        return Err(Error::InvalidInput("flow needs dt > 0 and t_final >= 0".into()));
    }
    let bound = flow_stability_bound(g0);
    if dt > bound {
        return Err(Error::StepTooLarge { dt, bound });
    }
    let steps = (t_final / dt).round() as usize;
    let (m0, r0) = monitor(0.0, g0, g0)?;
    let mut traj = FlowTrajectory {
        times: vec![0.0],
        metrics: vec![g0.clone()],
        monitors: vec![m0],
        riccis: vec![r0],
    };
    for step in 1..=steps {
        let g = traj.metrics.last().unwrap();
        let ric = traj.riccis.last().unwrap();
        let next = g.form().add(&ric.scale(-4.0 * dt));
        let next = MetricField::from_form(next).map_err(|_| Error::PositivityLost(step))?;
        let t = step as f64 * dt;
        let (m, r) = monitor(t, g0, &next)?;
        traj.times.push(t);
        traj.metrics.push(next);
        traj.monitors.push(m);
        traj.riccis.push(r);
    }
    Ok(traj)
}

impl FlowTrajectory {
    /// The same trajectory with every stored Ricci form negated; used as a
    /// corrupted input for the bound monitor.
    pub fn with_flipped_ricci(&self) -> Self {
        let mut out = self.clone();
        for (i, ric) in self.riccis.iter().enumerate() {
            let flipped = ric.scale(-1.0);
            out.monitors[i].max_ricci_eig = max_relative_eigenvalue(&self.metrics[i], &flipped).0;
            out.riccis[i] = flipped;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBoundReport {
    pub ok: bool,
    pub curvature_hypothesis: bool,
    pub ricci_hypothesis: bool,
    pub initial_hypothesis: bool,
    /// Smallest `A ≥ 0` with `r(t) ≤ A t − κ` on the data.
    pub fitted_a: f64,
    /// Reference slope `C₀√k₀ + C₁` of the affine bound with `C₂(n) = 1`.
    pub reference_slope: f64,
    pub margins: Vec<f64>,
}

pub const FLOW_MONITOR_TOL: f64 = 1e-9;

pub fn flow_bound_monitor(traj: &FlowTrajectory, c0: f64, c1: f64, k0: f64, kappa: f64) -> FlowBoundReport {
    let tol = FLOW_MONITOR_TOL;
    let curvature_hypothesis = traj.monitors.iter().all(|m| m.sup_rm * m.sup_rm <= k0);
    let ricci_hypothesis = traj.monitors.iter().all(|m| m.max_ricci_eig.abs() <= c0);
    let initial_hypothesis = traj.monitors[0].max_ricci_eig <= -kappa + tol;
    let fitted_a = traj
        .monitors
        .iter()
        .filter(|m| m.t > 0.0)
        .map(|m| (m.max_ricci_eig + kappa) / m.t)
        .fold(0.0, f64::max);
    let margins: Vec<f64> = traj
        .monitors
        .iter()
        .map(|m| fitted_a * m.t - kappa - m.max_ricci_eig)
        .collect();
    let ok = curvature_hypothesis
        && ricci_hypothesis
        && initial_hypothesis
        && fitted_a.is_finite()
        && margins.iter().all(|&m| m >= -tol);
    FlowBoundReport {
        ok,
        curvature_hypothesis,
        ricci_hypothesis,
        initial_hypothesis,
        fitted_a,
        reference_slope: c0 * k0.sqrt() + c1,
        margins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_radial_grid, make_torus_grid, RadialChart};
    use std::f64::consts::PI;

    fn poincare(res: usize, radius: f64) -> MetricField {
        let g = make_radial_grid(RadialChart::Poincare, res, radius).unwrap();
        let r = *g.radial().unwrap();
        let vals = (0..res)
            .map(|j| C::new(2.0 * (r.s(j) / 2f64.sqrt()).cosh().powi(4), 0.0))
            .collect();
        MetricField::new(g, vals).unwrap()
    }

    #[test]
    fn flat_torus_is_not_negatively_curved() {
        let g = make_torus_grid(1, 16, &[2.0 * PI; 2]).unwrap();
        let err = kahler_einstein_solve(&MetricField::flat(g), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::RicciNotNegative { .. }));
    }

    #[test]
    fn einstein_residuals_of_flat_torus() {
        let g = make_torus_grid(1, 16, &[2.0 * PI; 2]).unwrap();
        let m = MetricField::flat(g);
        assert!(einstein_residual(&m, 0.0).unwrap() <= 1e-10);
        assert!((einstein_residual(&m, -1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_flow_is_stationary() {
        let g = make_torus_grid(1, 16, &[2.0 * PI; 2]).unwrap();
        let m = MetricField::flat(g);
        let dt = flow_stability_bound(&m);
        let traj = kahler_ricci_flow(&m, 3.0 * dt, dt).unwrap();
        assert_eq!(traj.metrics[0], m);
        assert!(traj.metrics.last().unwrap().form().sub(m.form()).max_abs_entry() < 1e-14);
        let rep = flow_bound_monitor(&traj, 1.0, 0.0, 1.0, 0.0);
        assert!(rep.ok);
        assert!(rep.fitted_a < 1e-10);
        assert!(matches!(
            kahler_ricci_flow(&m, 1.0, 10.0 * dt),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn poincare_flow_is_self_similar() {
        let m = poincare(32, 2.0);
        let dt = 0.05 * flow_stability_bound(&m);
        let traj = kahler_ricci_flow(&m, 200.0 * dt, dt).unwrap();
        let last = traj.monitors.last().unwrap();
        assert!((last.max_ricci_eig + (-4.0 * last.t).exp()).abs() < 1e-3);
        let kappa = -traj.monitors[0].max_ricci_eig;
        let rep = flow_bound_monitor(&traj, 2.0, 0.0, 100.0, kappa);
        assert!(rep.ok, "{rep:?}");
        assert!(!flow_bound_monitor(&traj.with_flipped_ricci(), 2.0, 0.0, 100.0, kappa).ok);
    }
}

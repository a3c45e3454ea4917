//! Hessian metrics on real model manifolds: Koszul forms, `γ`, `Q`, the
//! tangent-bundle lift and the Hesse–Einstein solve.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_package, ricci_form};
use crate::eigen::EigenOperator;
use crate::error::{Error, Result};
use crate::field::{Form11Field, MetricField};
use crate::grid::{make_tube, AxisKind, GridGeometry, Topology};
use crate::linalg;
use crate::solver::{newton_solve, real_hessian, truncate_problem, HessianRoute, ProblemSpec, SolveReport, SolverConfig};

type C = Complex64;

/// Relative tolerance of the Hessian symmetry test.
pub const HESSIAN_TOL: f64 = 1e-6;

/// Potential data for a Hessian metric `g = Ddφ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    /// `φ = ½ xᵀAx + p(x)` with `A` carried symbolically and `p` periodic.
    QuadraticPlusPeriodic { quadratic: Vec<f64>, periodic: Vec<f64> },
    /// Nodal values of a closed-form potential.
    Sampled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianGeometry {
    metric: MetricField,
    potential: Option<Potential>,
}

fn real_field(f: &[f64]) -> Vec<C> {
    f.iter().map(|&v| C::new(v, 0.0)).collect()
}

impl HessianGeometry {
    pub fn from_potential(geometry: GridGeometry, potential: Potential) -> Result<Self> {
        if geometry.is_complex() {
            return Err(Error::InvalidGrid("Hessian geometry needs a real grid".into()));
        }
        let n = geometry.dim();
        let nodes = geometry.node_count();
        let (quadratic, sampled) = match &potential {
            Potential::QuadraticPlusPeriodic { quadratic, periodic } => {
                if geometry.topology() != Topology::PeriodicRealTorus {
                    return Err(Error::InvalidInput("quadratic metadata needs a periodic real torus".into()));
                }
                if quadratic.len() != n * n {
                    return Err(Error::InvalidInput(format!("quadratic part needs {} entries", n * n)));
                }
                (quadratic.clone(), periodic)
            }
            Potential::Sampled(phi) => (vec![0.0; n * n], phi),
        };
        if sampled.len() != nodes {
            return Err(Error::InvalidInput("potential has the wrong length".into()));
        }
        if let Some(node) = sampled.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        let d2 = real_hessian(&geometry, sampled)?;
        let values = (0..nodes)
            .flat_map(|node| {
                let d2 = &d2;
                let quadratic = &quadratic;
                (0..n * n).map(move |k| d2.values()[node * n * n + k] + quadratic[k])
            })
            .collect();
        let metric = MetricField::from_form(Form11Field::new(geometry, values)?)?;
        let hg = Self {
            metric,
            potential: Some(potential),
        };
        hg.check_symmetry()?;
        Ok(hg)
    }

    pub fn from_metric(metric: MetricField) -> Result<Self> {
        if metric.geometry().is_complex() {
            return Err(Error::InvalidGrid("Hessian geometry needs a real grid".into()));
        }
        if metric.form().values().iter().any(|v| v.im != 0.0) {
            return Err(Error::InvalidInput("Hessian metric must be real".into()));
        }
        let hg = Self { metric, potential: None };
        hg.check_symmetry()?;
        Ok(hg)
    }

    fn check_symmetry(&self) -> Result<()> {
        let (defect, scale) = self.symmetry_defect();
        if defect > HESSIAN_TOL * scale.max(1.0) {
            return Err(Error::NotHessian(defect));
        }
        Ok(())
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.metric.geometry()
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn potential(&self) -> Option<&Potential> {
        self.potential.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn component(&self, i: usize, j: usize) -> Vec<f64> {
        self.metric.form().component(i, j).iter().map(|v| v.re).collect()
    }

    /// `∂_k g_ij` for every `(i, j, k)`, node-major.
    fn metric_gradient(&self) -> Vec<f64> {
        let geom = self.geometry();
        let n = self.dim();
        let nodes = geom.node_count();
        let mut out = vec![0.0; nodes * n * n * n];
        for i in 0..n {
            for j in 0..n {
                let gij = self.component(i, j);
                for k in 0..n {
                    let d = geom.derivative_real(&gij, k, 1);
                    for node in 0..nodes {
                        out[((node * n + i) * n + j) * n + k] = d[node];
                    }
                }
            }
        }
        out
    }

    /// `sup |∂_k g_ij − ∂_i g_kj|` and `sup |∂g|`.
    fn symmetry_defect(&self) -> (f64, f64) {
        let n = self.dim();
        let dg = self.metric_gradient();
        let idx = |node: usize, i: usize, j: usize, k: usize| ((node * n + i) * n + j) * n + k;
        let mut defect: f64 = 0.0;
        for node in 0..self.geometry().node_count() {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        defect = defect.max((dg[idx(node, i, j, k)] - dg[idx(node, k, j, i)]).abs());
                    }
                }
            }
        }
        let scale = dg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (defect, scale)
    }

    /// Third derivatives `φ_ijk = ∂_k g_ij` and, when a potential is
    /// present, fourth derivatives `φ_ijkl`.
    fn potential_derivatives(&self) -> Option<Vec<f64>> {
        let geom = self.geometry();
        let n = self.dim();
        let nodes = geom.node_count();
        let p = match self.potential.as_ref()? {
            Potential::QuadraticPlusPeriodic { periodic, .. } => periodic,
            Potential::Sampled(phi) => phi,
        };
        let pc = real_field(p);
        let mut out = vec![0.0; nodes * n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                let pij = geom.mixed_derivative(&pc, i, j);
                for k in 0..n {
                    for l in 0..n {
                        let d = geom.mixed_derivative(&pij, k, l);
                        for node in 0..nodes {
                            out[(((node * n + i) * n + j) * n + k) * n + l] = d[node].re;
                        }
                    }
                }
            }
        }
        Some(out)
    }

    fn inverse_at(&self, node: usize) -> DMatrix<f64> {
        let g = self.metric.at(node).map(|v| v.re);
        g.try_inverse().expect("metric is positive definite")
    }

    pub fn koszul(&self) -> KoszulData {
        let geom = self.geometry();
        let n = self.dim();
        let nodes = geom.node_count();
        let log_det = self.metric.log_det();
        let mut alpha = vec![0.0; nodes * n];
        let mut kappa = vec![vec![Vec::new(); n]; n];
        for i in 0..n {
            let a = geom.derivative_real(&log_det, i, 1);
            for node in 0..nodes {
                alpha[node * n + i] = 0.5 * a[node];
            }
        }
        let ld = real_field(&log_det);
        for i in 0..n {
            for j in i..n {
                let d: Vec<C> = geom.mixed_derivative(&ld, i, j).iter().map(|v| C::new(0.5 * v.re, 0.0)).collect();
                kappa[j][i] = d.clone();
                kappa[i][j] = d;
            }
        }
        let kappa = Form11Field::from_components(geom.clone(), &kappa);
        let beta = kappa.scale(-2.0);
        KoszulData { alpha, kappa, beta }
    }

    /// `γ^i_jk = ½ g^{il}(∂_j g_lk + ∂_k g_lj − ∂_l g_jk)`, node-major.
    pub fn gamma(&self) -> Vec<f64> {
        let n = self.dim();
        let nodes = self.geometry().node_count();
        let dg = self.metric_gradient();
        let d = |node: usize, i: usize, j: usize, k: usize| dg[((node * n + i) * n + j) * n + k];
        let mut out = vec![0.0; nodes * n * n * n];
        for node in 0..nodes {
            let inv = self.inverse_at(node);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        out[((node * n + i) * n + j) * n + k] = 0.5
                            * (0..n)
                                .map(|l| inv[(i, l)] * (d(node, l, k, j) + d(node, l, j, k) - d(node, j, k, l)))
                                .sum::<f64>();
                    }
                }
            }
        }
        out
    }

    /// `Q_ijkl`: from the potential when available, otherwise `g_ip ∂_k γ^p_jl`.
    pub fn q_tensor(&self) -> Vec<f64> {
        let n = self.dim();
        let nodes = self.geometry().node_count();
        let mut out = vec![0.0; nodes * n * n * n * n];
        let at = |i: usize, j: usize, k: usize, l: usize, node: usize| (((node * n + i) * n + j) * n + k) * n + l;
        if let Some(d4) = self.potential_derivatives() {
            let dg = self.metric_gradient();
            let d3 = |node: usize, i: usize, j: usize, k: usize| dg[((node * n + i) * n + j) * n + k];
            for node in 0..nodes {
                let inv = self.inverse_at(node);
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                let mut corr = 0.0;
                                for p in 0..n {
                                    for q in 0..n {
                                        corr += inv[(p, q)] * d3(node, i, k, p) * d3(node, j, l, q);
                                    }
                                }
                                out[at(i, j, k, l, node)] = 0.5 * d4[at(i, j, k, l, node)] - 0.5 * corr;
                            }
                        }
                    }
                }
            }
            return out;
        }
        let geom = self.geometry();
        let gamma = self.gamma();
        for p in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let comp: Vec<f64> = (0..nodes).map(|node| gamma[((node * n + p) * n + j) * n + l]).collect();
                    for k in 0..n {
                        let d = geom.derivative_real(&comp, k, 1);
                        for node in 0..nodes {
                            let g = self.metric.at(node);
                            for i in 0..n {
                                out[at(i, j, k, l, node)] += g[(i, p)].re * d[node];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Levi-Civita curvature `R̂_ijkl = g_ip(∂_k γ^p_lj − ∂_l γ^p_kj + γ^p_kq γ^q_lj − γ^p_lq γ^q_kj)`.
    pub fn levi_civita_curvature(&self) -> Vec<f64> {
        let geom = self.geometry();
        let n = self.dim();
        let nodes = geom.node_count();
        let gamma = self.gamma();
        let gm = |node: usize, i: usize, j: usize, k: usize| gamma[((node * n + i) * n + j) * n + k];
        let mut dgamma = vec![0.0; nodes * n * n * n * n];
        for p in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let comp: Vec<f64> = (0..nodes).map(|node| gm(node, p, a, b)).collect();
                    for k in 0..n {
                        let d = geom.derivative_real(&comp, k, 1);
                        for node in 0..nodes {
                            dgamma[(((node * n + p) * n + a) * n + b) * n + k] = d[node];
                        }
                    }
                }
            }
        }
        // dgamma(p, a, b, k) = ∂_k γ^p_ab
        let dg = |node: usize, p: usize, a: usize, b: usize, k: usize| dgamma[(((node * n + p) * n + a) * n + b) * n + k];
        let mut out = vec![0.0; nodes * n * n * n * n];
        for node in 0..nodes {
            let g = self.metric.at(node);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let mut acc = 0.0;
                            for p in 0..n {
                                let mut r = dg(node, p, l, j, k) - dg(node, p, k, j, l);
                                for q in 0..n {
                                    r += gm(node, p, k, q) * gm(node, q, l, j) - gm(node, p, l, q) * gm(node, q, k, j);
                                }
                                acc += g[(i, p)].re * r;
                            }
                            out[(((node * n + i) * n + j) * n + k) * n + l] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn package(&self) -> HessianPackage {
        HessianPackage {
            koszul: self.koszul(),
            gamma: self.gamma(),
            q: self.q_tensor(),
            symmetry_residual: self.symmetry_defect().0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KoszulData {
    /// `α_i = ½∂_i log det g`, node-major.
    pub alpha: Vec<f64>,
    pub kappa: Form11Field,
    pub beta: Form11Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianPackage {
    pub koszul: KoszulData,
    /// `γ^i_jk`, node-major with index order `(i, j, k)`.
    pub gamma: Vec<f64>,
    /// `Q_ijkl`, node-major.
    pub q: Vec<f64>,
    pub symmetry_residual: f64,
}

pub fn hessian_metric_package(hg: &HessianGeometry) -> HessianPackage {
    hg.package()
}

/// Points per fiber axis of lifted grids.
pub const FIBER_POINTS: usize = 8;

/// Complex grid of the tangent bundle: base axis `x^j` paired with a
/// periodic fiber axis.
pub fn tube_grid(base: &GridGeometry) -> Result<GridGeometry> {
    make_tube(base, FIBER_POINTS, 2.0 * std::f64::consts::PI)
}

/// Base node under each tube node.
pub fn projection(base: &GridGeometry, tube: &GridGeometry) -> Vec<usize> {
    (0..tube.node_count())
        .map(|node| {
            let idx = tube.multi_index(node);
            let base_idx: Vec<usize> = idx.iter().step_by(2).copied().collect();
            base.node_from_multi(&base_idx)
        })
        .collect()
}

/// Pullback of a base scalar to the tube.
pub fn lift_scalar(base: &GridGeometry, tube: &GridGeometry, f: &[f64]) -> Vec<f64> {
    projection(base, tube).into_iter().map(|b| f[b]).collect()
}

fn lift_form(form: &Form11Field, tube: &GridGeometry) -> Result<Form11Field> {
    let n = form.dim();
    let proj = projection(form.geometry(), tube);
    let values = proj
        .iter()
        .flat_map(|&b| form.values()[b * n * n..(b + 1) * n * n].iter().copied())
        .collect();
    Form11Field::new(tube.clone(), values)
}

/// `g^T = Σ (g_ij ∘ π) dz^i dz̄^j`.
pub fn tangent_lift(hg: &HessianGeometry) -> Result<MetricField> {
    let tube = tube_grid(hg.geometry())?;
    MetricField::from_form(lift_form(hg.metric.form(), &tube)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftResiduals {
    /// `sup |R^T + ½ Q∘π|`.
    pub curvature: f64,
    /// `sup |R^T_{ij̄} − ¼ β∘π|`.
    pub ricci: f64,
    /// Torsion norm of the lifted metric.
    pub torsion: f64,
}

pub fn lift_correspondence_check(hg: &HessianGeometry) -> Result<LiftResiduals> {
    let lifted = tangent_lift(hg)?;
    let tube = lifted.geometry().clone();
    let pkg = curvature_package(&lifted)?;
    let base = hg.package();
    let n = hg.dim();
    let proj = projection(hg.geometry(), &tube);
    let mut curvature: f64 = 0.0;
    for (node, &b) in proj.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let q = base.q[(((b * n + i) * n + j) * n + k) * n + l];
                        let r = pkg.curvature_entry(node, i, j, k, l);
                        curvature = curvature.max((r + C::new(0.5 * q, 0.0)).norm());
                    }
                }
            }
        }
    }
    let target = lift_form(&base.koszul.beta.scale(0.25), &tube)?;
    let ricci = pkg.ricci.sub(&target).max_abs_entry();
    Ok(LiftResiduals {
        curvature,
        ricci,
        torsion: pkg.norms.torsion,
    })
}

/// The Hesse–Einstein problem `log det((−β)^{-1}(−β + D²u)) = h + u` with
/// `h = log det g / det(−β(g))`, posed on the base through the fiber-reduced
/// lift (`4 (u∘π)_{jp̄} = u_jp`).
pub fn hesse_einstein_problem(hg: &HessianGeometry) -> Result<ProblemSpec> {
    let beta = hg.koszul().beta;
    let reference = beta.scale(-1.0);
    let (min_eig, node) = (0..reference.node_count())
        .map(|node| (linalg::hermitian_eigenvalues(&reference.at(node))[0], node))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
    if !(min_eig > 0.0) {
        return Err(Error::KappaNotPositive { node, min_eig });
    }
    let alpha = MetricField::from_form(reference.clone())?;
    let h: Vec<f64> = hg.metric.log_det().iter().zip(alpha.log_det()).map(|(a, b)| a - b).collect();
    Ok(ProblemSpec::new(alpha, reference, h, 1.0, EigenOperator::log_ma(hg.dim()))?.with_route(HessianRoute::FiberReduced, 4.0))
}

/// Half-width of a log box in the chart (the smallest over the axes).
fn box_half_width(geometry: &GridGeometry) -> Option<f64> {
    if geometry.topology() != Topology::LogOrthantBox {
        return None;
    }
    geometry
        .axes()
        .iter()
        .map(|a| match a.kind {
            AxisKind::LogChart { t_min, t_max } => 0.5 * (t_max - t_min),
            AxisKind::Periodic { .. } => f64::INFINITY,
        })
        .reduce(f64::min)
}

/// Returns `ĝ = −β(g) + Ddu` and the solve report. On log boxes the problem
/// is conformally truncated at the box faces, as for radial models.
pub fn hesse_einstein_solve(hg: &HessianGeometry, config: &SolverConfig) -> Result<(HessianGeometry, SolveReport)> {
    let problem = hesse_einstein_problem(hg)?;
    let solved = match box_half_width(hg.geometry()) {
        Some(rho0) => truncate_problem(&problem, rho0, crate::kahler::DEFAULT_KAPPA)?,
        None => problem.clone(),
    };
    let report = newton_solve(&solved, 1.0, &vec![0.0; hg.geometry().node_count()], config)?;
    let metric = MetricField::from_form(problem.chi.add(&problem.hessian(&report.solution)?))?;
    let values = metric.form().values().iter().map(|v| C::new(v.re, 0.0)).collect();
    let metric = MetricField::new(hg.geometry().clone(), values)?;
    Ok((HessianGeometry::from_metric(metric)?, report))
}

/// `sup ‖g^{-1}(β(g) − λg)‖` in the `g` operator norm.
pub fn hesse_einstein_residual(hg: &HessianGeometry, lambda: f64) -> f64 {
    let beta = hg.koszul().beta;
    crate::curvature::einstein_residual_from(&hg.metric, &beta, lambda)
}

/// `−∂∂̄ log det g^T` on the lift against `¼β∘π`.
pub fn lifted_ricci_routes(hg: &HessianGeometry) -> Result<f64> {
    let lifted = tangent_lift(hg)?;
    let direct = ricci_form(&lifted)?;
    let target = lift_form(&hg.koszul().beta.scale(0.25), lifted.geometry())?;
    Ok(direct.sub(&target).max_abs_entry())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::complex_hessian;
    use crate::grid::{make_log_box, make_real_torus};
    use std::f64::consts::PI;

    fn orthant(n: usize, res: usize, c: f64) -> HessianGeometry {
        let g = make_log_box(n, res, -0.5, 0.5).unwrap();
        let phi = (0..g.node_count())
            .map(|node| -c * g.node_coordinates(node).iter().map(|x| x.ln()).sum::<f64>())
            .collect();
        HessianGeometry::from_potential(g, Potential::Sampled(phi)).unwrap()
    }

    #[test]
    fn quadratic_torus_is_flat() {
        let g = make_real_torus(2, 8, &[2.0 * PI; 2]).unwrap();
        let hg = HessianGeometry::from_potential(
            g.clone(),
            Potential::QuadraticPlusPeriodic {
                quadratic: vec![1.0, 0.0, 0.0, 1.0],
                periodic: vec![0.0; g.node_count()],
            },
        )
        .unwrap();
        let p = hg.package();
        assert!(p.q.iter().all(|v| v.abs() < 1e-14));
        assert!(p.gamma.iter().all(|v| v.abs() < 1e-14));
        assert!(p.koszul.beta.max_abs_entry() < 1e-14);
        let r = lift_correspondence_check(&hg).unwrap();
        assert!(r.curvature <= 1e-10 && r.ricci <= 1e-10);
    }

    #[test]
    fn orthant_koszul_closed_form() {
        let hg = orthant(2, 16, 1.0);
        let k = hg.koszul();
        for node in 0..hg.geometry().node_count() {
            let x = hg.geometry().node_coordinates(node);
            for i in 0..2 {
                assert!((k.alpha[node * 2 + i] + 1.0 / x[i]).abs() < 1e-10);
                assert!((k.beta.entry(node, i, i).re + 2.0 / (x[i] * x[i])).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn orthant_hesse_einstein_doubles_metric() {
        let hg = orthant(1, 16, 1.0);
        let (ghat, rep) = hesse_einstein_solve(&hg, &SolverConfig::default()).unwrap();
        let err = rep.solution.iter().fold(0.0f64, |m, u| m.max((u - 2f64.ln()).abs()));
        assert!(err < 1e-8, "{err:e}");
        assert!(ghat.metric().form().sub(&hg.metric().form().scale(2.0)).max_abs_entry() < 1e-8);
        assert!(hesse_einstein_residual(&ghat, -1.0) < 1e-6);
    }

    #[test]
    fn torus_kappa_is_not_positive() {
        let g = make_real_torus(1, 16, &[2.0 * PI]).unwrap();
        let x = g.axis_coordinate_field(0);
        let hg = HessianGeometry::from_potential(
            g,
            Potential::QuadraticPlusPeriodic {
                quadratic: vec![1.0],
                periodic: x.iter().map(|x| 0.1 * x.cos()).collect(),
            },
        )
        .unwrap();
        let err = hesse_einstein_solve(&hg, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::KappaNotPositive { .. }));
    }

    #[test]
    fn lifted_hessian_has_factor_four() {
        let hg = orthant(1, 16, 1.0);
        let base = hg.geometry();
        let tube = tube_grid(base).unwrap();
        let u: Vec<f64> = (0..base.node_count()).map(|i| base.node_coordinates(i)[0].sin()).collect();
        let lifted = complex_hessian(&tube, &lift_scalar(base, &tube, &u)).unwrap().scale(4.0);
        let direct = lift_form(&real_hessian(base, &u).unwrap(), &tube).unwrap();
        assert!(lifted.sub(&direct).max_abs_entry() < 1e-12);
    }
}

//! Chern connection, torsion, curvature and Chern–Ricci form of a Hermitian
//! metric field.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Form11Field, MetricField};
use crate::grid::{AxisKind, GridGeometry, Topology};
use crate::linalg::{self, CMat};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureNorms {
    /// `sup |T|_g`.
    pub torsion: f64,
    /// `sup |∇T|_g`, both the (1,0) and (0,1) parts of the Chern derivative.
    pub torsion_derivative: f64,
    /// `sup |Rm|_g`.
    pub curvature: f64,
}

/// All Chern-geometry tensors of a metric. Tensors are stored node-major
/// with row-major index order:
/// `christoffel[node][i][j][k] = Γ^i_{jk}`,
/// `torsion[node][k][i][j] = T^k_{ij}`,
/// `curvature[node][i][j][k][l] = R_{ij̄kl̄}`.
#[derive(Debug, Clone)]
pub struct CurvaturePackage {
    pub n: usize,
    pub christoffel: Vec<C>,
    pub torsion: Vec<C>,
    pub curvature: Vec<C>,
    pub ricci: Form11Field,
    pub norms: CurvatureNorms,
    /// `|Rm|_g` at each node.
    pub curvature_pointwise: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Slot {
    Upper,
    Lower,
    LowerBar,
}

/// Unitary frame data at a node: `P = L^{-T}` maps coordinate to
/// orthonormal lower indices, `Q = P^{-1}` does the same for upper ones.
struct Frame {
    lower: CMat,
    lower_bar: CMat,
    upper: CMat,
}

impl Frame {
    fn new(g: &CMat, node: usize) -> Result<Self> {
        let l = linalg::cholesky(g).ok_or(Error::SingularMetric { node })?;
        let linv = linalg::inverse(&l).ok_or(Error::SingularMetric { node })?;
        Ok(Self {
            lower: linv.clone(),
            lower_bar: linv.map(|v| v.conj()),
            upper: l.transpose(),
        })
    }

    fn matrix(&self, slot: Slot) -> &CMat {
        match slot {
            Slot::Upper => &self.upper,
            Slot::Lower => &self.lower,
            Slot::LowerBar => &self.lower_bar,
        }
    }

    /// Squared norm of a tensor after moving every slot to the frame.
    fn norm_sq(&self, tensor: &[C], slots: &[Slot], n: usize) -> f64 {
        let mut t = tensor.to_vec();
        let rank = slots.len();
        for (m, &slot) in slots.iter().enumerate() {
            let a = self.matrix(slot);
            let inner = n.pow((rank - m - 1) as u32);
            let outer = n.pow(m as u32);
            let mut out = vec![C::new(0.0, 0.0); t.len()];
            for o in 0..outer {
                for i in 0..inner {
                    for r in 0..n {
                        let mut acc = C::new(0.0, 0.0);
                        for s in 0..n {
                            acc += a[(r, s)] * t[(o * n + s) * inner + i];
                        }
                        out[(o * n + r) * inner + i] = acc;
                    }
                }
            }
            t = out;
        }
        t.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Inverse matrices per node, with singular nodes reported.
fn inverses(metric: &MetricField) -> Result<Vec<CMat>> {
    (0..metric.node_count())
        .map(|node| {
            let g = metric.at(node);
            let inv = linalg::inverse(&g).ok_or(Error::SingularMetric { node })?;
            if inv.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::SingularMetric { node });
            }
            Ok(inv)
        })
        .collect()
}

/// `Ric_{ij̄} = −∂_i ∂_j̄ log det g`.
pub fn ricci_form(metric: &MetricField) -> Result<Form11Field> {
    let ld = metric.log_det();
    if let Some(node) = ld.iter().position(|v| !v.is_finite()) {
        return Err(Error::SingularMetric { node });
    }
    Ok(ddbar_form(metric.form().geometry(), &ld).scale(-1.0))
}

/// `√−1∂∂̄ f` for a real scalar `f`.
pub fn ddbar_form(geometry: &GridGeometry, f: &[f64]) -> Form11Field {
    let n = geometry.dim();
    let fc: Vec<C> = f.iter().map(|&v| C::new(v, 0.0)).collect();
    let mut entries = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in i..n {
            entries[i][j] = geometry.dz_dzbar(&fc, i, j);
        }
        for j in 0..i {
            entries[i][j] = entries[j][i].iter().map(|v| v.conj()).collect();
        }
    }
    Form11Field::from_components(geometry.clone(), &entries)
}

pub fn curvature_package(metric: &MetricField) -> Result<CurvaturePackage> {
    let geom = metric.geometry();
    let n = metric.dim();
    let nodes = metric.node_count();
    let ginv = inverses(metric)?;
    let ricci = ricci_form(metric)?;

    // derivatives of every entry g_{ab̄}
    let mut dz = vec![vec![Vec::new(); n * n]; n];
    let mut dzb = vec![vec![Vec::new(); n * n]; n];
    let mut ddb = vec![vec![Vec::new(); n * n]; n * n];
    for a in 0..n {
        for b in 0..n {
            let e = metric.form().component(a, b);
            for k in 0..n {
                dz[k][a * n + b] = geom.dz(&e, k);
                dzb[k][a * n + b] = geom.dzbar(&e, k);
                for l in 0..n {
                    ddb[k * n + l][a * n + b] = geom.dz_dzbar(&e, k, l);
                }
            }
        }
    }

    let n3 = n * n * n;
    let n4 = n3 * n;
    let mut christoffel = vec![C::new(0.0, 0.0); nodes * n3];
    let mut torsion = vec![C::new(0.0, 0.0); nodes * n3];
    let mut curvature = vec![C::new(0.0, 0.0); nodes * n4];
    for node in 0..nodes {
        // g^{il̄} = (G^{-1})_{li}
        let gi = &ginv[node];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = C::new(0.0, 0.0);
                    for l in 0..n {
                        acc += gi[(l, i)] * dz[j][k * n + l][node];
                    }
                    christoffel[node * n3 + (i * n + j) * n + k] = acc;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let g = |a: usize, b: usize, c: usize| christoffel[node * n3 + (a * n + b) * n + c];
                    torsion[node * n3 + (k * n + i) * n + j] = g(k, i, j) - g(k, j, i);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut acc = -ddb[k * n + l][i * n + j][node];
                        for p in 0..n {
                            for q in 0..n {
                                acc += gi[(q, p)] * dz[k][i * n + q][node] * dzb[l][p * n + j][node];
                            }
                        }
                        curvature[node * n4 + ((i * n + j) * n + k) * n + l] = acc;
                    }
                }
            }
        }
    }

    // derivatives of the torsion components
    let mut dt = vec![Vec::new(); n * n3];
    let mut dtb = vec![Vec::new(); n * n3];
    for c in 0..n3 {
        let comp: Vec<C> = (0..nodes).map(|node| torsion[node * n3 + c]).collect();
        for l in 0..n {
            dt[l * n3 + c] = geom.dz(&comp, l);
            dtb[l * n3 + c] = geom.dzbar(&comp, l);
        }
    }

    let mut norms = CurvatureNorms {
        torsion: 0.0,
        torsion_derivative: 0.0,
        curvature: 0.0,
    };
    let mut curvature_pointwise = Vec::with_capacity(nodes);
    for node in 0..nodes {
        let frame = Frame::new(&metric.at(node), node)?;
        let t = &torsion[node * n3..(node + 1) * n3];
        let tn = frame.norm_sq(t, &[Slot::Upper, Slot::Lower, Slot::Lower], n).sqrt();
        let r = &curvature[node * n4..(node + 1) * n4];
        let rn = frame
            .norm_sq(r, &[Slot::Lower, Slot::LowerBar, Slot::Lower, Slot::LowerBar], n)
            .sqrt();

        // (∇_l T)^k_{ij} stored as [k][i][j][l]; (∇_l̄ T)^k_{ij} likewise
        let gam = |a: usize, b: usize, c: usize| christoffel[node * n3 + (a * n + b) * n + c];
        let tt = |k: usize, i: usize, j: usize| t[(k * n + i) * n + j];
        let mut nabla = vec![C::new(0.0, 0.0); n4];
        let mut nabla_bar = vec![C::new(0.0, 0.0); n4];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let c = (k * n + i) * n + j;
                        let mut acc = dt[l * n3 + c][node];
                        for m in 0..n {
                            acc += gam(k, l, m) * tt(m, i, j)
                                - gam(m, l, i) * tt(k, m, j)
                                - gam(m, l, j) * tt(k, i, m);
                        }
                        nabla[c * n + l] = acc;
                        nabla_bar[c * n + l] = dtb[l * n3 + c][node];
                    }
                }
            }
        }
        let dn = (frame.norm_sq(&nabla, &[Slot::Upper, Slot::Lower, Slot::Lower, Slot::Lower], n)
            + frame.norm_sq(
                &nabla_bar,
                &[Slot::Upper, Slot::Lower, Slot::Lower, Slot::LowerBar],
                n,
            ))
        .sqrt();
        norms.torsion = norms.torsion.max(tn);
        norms.curvature = norms.curvature.max(rn);
        norms.torsion_derivative = norms.torsion_derivative.max(dn);
        curvature_pointwise.push(rn);
    }

    Ok(CurvaturePackage {
        n,
        christoffel,
        torsion,
        curvature,
        ricci,
        norms,
        curvature_pointwise,
    })
}

impl CurvaturePackage {
    pub fn curvature_entry(&self, node: usize, i: usize, j: usize, k: usize, l: usize) -> C {
        let n = self.n;
        self.curvature[node * n.pow(4) + ((i * n + j) * n + k) * n + l]
    }

    /// Trace of the second pair, `g^{kl̄} R_{ij̄kl̄}`. Agrees with the
    /// Chern–Ricci form only when the metric is Kähler.
    pub fn ricci_trace_route(&self, metric: &MetricField) -> Result<Form11Field> {
        let n = self.n;
        let ginv = inverses(metric)?;
        Ok(Form11Field::from_fn(metric.geometry().clone(), |node| {
            CMat::from_fn(n, n, |i, j| {
                let mut acc = C::new(0.0, 0.0);
                for k in 0..n {
                    for l in 0..n {
                        acc += ginv[node][(l, k)] * self.curvature_entry(node, i, j, k, l);
                    }
                }
                acc
            })
        }))
    }

    /// Sup over nodes of the largest coordinate Christoffel symbol modulus.
    pub fn christoffel_max(&self) -> f64 {
        self.christoffel.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn curvature_max_entry(&self) -> f64 {
        self.curvature.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Sup-norms of the `(2,2)` coefficient of `∂∂̄ω` and the `(3,3)`
/// coefficient of `∂∂̄ω²`. Both vanish identically below the degrees at
/// which such forms exist.
pub fn gauduchon_residuals(metric: &MetricField) -> (f64, f64) {
    let n = metric.dim();
    if n < 2 {
        return (0.0, 0.0);
    }
    let geom = metric.geometry();
    let f = metric.form();
    let c11 = geom.dz_dzbar(&f.component(1, 1), 0, 0);
    let c21 = geom.dz_dzbar(&f.component(0, 1), 1, 0);
    let c12 = geom.dz_dzbar(&f.component(1, 0), 0, 1);
    let c22 = geom.dz_dzbar(&f.component(0, 0), 1, 1);
    let first = (0..metric.node_count())
        .map(|node| (c11[node] - c21[node] - c12[node] + c22[node]).norm())
        .fold(0.0, f64::max);
    // the (3,3) part needs complex dimension three
    (first, 0.0)
}

/// Sup over nodes of the `g`-operator norm of `g^{-1}(Ric − λ g)`.
pub fn einstein_residual_from(metric: &MetricField, ricci: &Form11Field, lambda: f64) -> f64 {
    (0..metric.node_count())
        .map(|node| einstein_residual_at(metric, ricci, lambda, node))
        .fold(0.0, f64::max)
}

/// `‖L⁻¹(Ric − λg)L⁻ᴴ‖` at one node, with `g = LLᴴ`.
pub fn einstein_residual_at(metric: &MetricField, ricci: &Form11Field, lambda: f64, node: usize) -> f64 {
    let g = metric.at(node);
    let d = ricci.at(node) - &g * C::new(lambda, 0.0);
    match linalg::cholesky(&g).and_then(|l| linalg::inverse(&l)) {
        Some(li) => linalg::hermitian_norm(&(&li * d * li.adjoint())),
        None => f64::INFINITY,
    }
}

/// Roundoff floor of the discrete curvature: `64 ε_mach` times the largest
/// metric-normalized symbol of `∂∂̄` times `max(1, sup |log det g|)`.
pub fn roundoff_floor(metric: &MetricField) -> f64 {
    let geom = metric.geometry();
    let n = metric.dim() as f64;
    let log_det = metric.log_det().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let symbol = (0..metric.node_count())
        .map(|node| {
            let k = std::f64::consts::PI / geom.local_spacing(node);
            0.5 * n * k * k / linalg::hermitian_eigenvalues(&metric.at(node))[0]
        })
        .fold(0.0, f64::max);
    64.0 * f64::EPSILON * symbol * log_det
}

/// Error of the curvature package against a closed-form instance on the same
/// grid: a one-mode conformal metric on tori, the Poincaré metric on radial
/// models. `None` for real and tube grids.
pub fn oracle_error(geometry: &GridGeometry) -> Option<f64> {
    match geometry.topology() {
        Topology::PeriodicTorus if geometry.is_complex() => {
            let n = geometry.dim();
            let period = match geometry.axes()[0].kind {
                AxisKind::Periodic { period } => period,
                AxisKind::LogChart { .. } => return None,
            };
            let k = 2.0 * std::f64::consts::PI / period;
            let b = 0.1;
            let x = geometry.axis_coordinate_field(0);
            let w: Vec<f64> = x.iter().map(|x| b * (k * x).cos()).collect();
            let metric = MetricField::conformal(geometry.clone(), &w).ok()?;
            let ric = ricci_form(&metric).ok()?;
            // Ric = -n ∂∂̄w, only the (1,1) entry of ∂∂̄w is nonzero
            let mut err: f64 = 0.0;
            for (node, x) in x.iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        let exact = if i == 0 && j == 0 { 0.25 * n as f64 * b * k * k * (k * x).cos() } else { 0.0 };
                        err = err.max((ric.entry(node, i, j) - C::new(exact, 0.0)).norm());
                    }
                }
            }
            Some(err)
        }
        Topology::TruncatedRadial => {
            let r = geometry.radial()?;
            let values: Vec<C> = (0..r.points)
                .map(|j| {
                    let rad = r.chart.radius(r.s(j));
                    C::new(2.0 / (1.0 - rad * rad).powi(2), 0.0)
                })
                .collect();
            let metric = MetricField::new(geometry.clone(), values).ok()?;
            let ric = ricci_form(&metric).ok()?;
            Some(einstein_residual_from(&metric, &ric, -1.0))
        }
        _ => None,
    }
}

/// Discretization unit for residual tolerances on `metric`'s grid.
pub fn discretization_unit(metric: &MetricField) -> f64 {
    oracle_error(metric.geometry()).unwrap_or(0.0).max(roundoff_floor(metric))
}

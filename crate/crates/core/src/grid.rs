//! Model geometries: periodic tori, truncated radial disks, log-orthant boxes
//! and the tube grids that carry tangent-bundle lifts.
//!
//! Every tensor-product grid stores its nodes in row-major order over its
//! axes (last axis fastest). Complex grids order their real axes as
//! `[x1, y1, x2, y2, ..]` with `z^j = x^j + i y^j`.

use std::f64::consts::SQRT_2;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::diff::Operators;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// Complex torus, all axes periodic.
    PeriodicTorus,
    /// Radially symmetric complex disk model (n = 1), reduced to a profile in
    /// the geodesic radius.
    TruncatedRadial,
    /// Complex tube `TM` over a real base: base axes carry `x^j`, periodic
    /// fiber axes carry `y^j`.
    AffineTube,
    /// Real affine torus.
    PeriodicRealTorus,
    /// Real orthant box stored in logarithmic coordinates `t = log x`.
    LogOrthantBox,
}

impl Topology {
    pub fn is_complex(self) -> bool {
        matches!(
            self,
            Topology::PeriodicTorus | Topology::TruncatedRadial | Topology::AffineTube
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AxisKind {
    Periodic { period: f64 },
    /// Cell-centred nodes in `t` over `[t_min, t_max]`; the affine coordinate
    /// is `x = exp(t)`.
    LogChart { t_min: f64, t_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub kind: AxisKind,
    pub points: usize,
}

impl Axis {
    /// Spacing in the stored chart coordinate.
    pub fn spacing(&self) -> f64 {
        match self.kind {
            AxisKind::Periodic { period } => period / self.points as f64,
            AxisKind::LogChart { t_min, t_max } => (t_max - t_min) / self.points as f64,
        }
    }

    /// Stored chart coordinate of node `j`.
    pub fn chart_coordinate(&self, j: usize) -> f64 {
        match self.kind {
            AxisKind::Periodic { .. } => j as f64 * self.spacing(),
            AxisKind::LogChart { t_min, .. } => t_min + (j as f64 + 0.5) * self.spacing(),
        }
    }

    /// Affine coordinate of node `j`.
    pub fn coordinate(&self, j: usize) -> f64 {
        match self.kind {
            AxisKind::Periodic { .. } => self.chart_coordinate(j),
            AxisKind::LogChart { .. } => self.chart_coordinate(j).exp(),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, AxisKind::Periodic { .. })
    }
}

/// Chart relating the stored radial coordinate `s` (the model's distance
/// function) to the Euclidean radius `r = |z|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadialChart {
    /// `r = s`.
    Euclidean,
    /// `r = tanh(s / sqrt 2)`, the geodesic radius of `g = 2 / (1 - |z|^2)^2`.
    Poincare,
}

impl RadialChart {
    pub fn radius(self, s: f64) -> f64 {
        match self {
            RadialChart::Euclidean => s,
            RadialChart::Poincare => (s / SQRT_2).tanh(),
        }
    }

    pub fn dradius(self, s: f64) -> f64 {
        match self {
            RadialChart::Euclidean => 1.0,
            RadialChart::Poincare => {
                let c = (s / SQRT_2).cosh();
                1.0 / (SQRT_2 * c * c)
            }
        }
    }

    pub fn d2radius(self, s: f64) -> f64 {
        match self {
            RadialChart::Euclidean => 0.0,
            RadialChart::Poincare => {
                let a = s / SQRT_2;
                let c = a.cosh();
                -a.tanh() / (c * c)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialModel {
    pub chart: RadialChart,
    pub truncation_radius: f64,
    pub points: usize,
}

impl RadialModel {
    pub fn spacing(&self) -> f64 {
        self.truncation_radius / self.points as f64
    }

    /// Geodesic radius of node `j`; nodes sit at `(j + 1/2) h`, strictly
    /// inside `(0, truncation_radius)`.
    pub fn s(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.spacing()
    }
}

/// A discretized model manifold.
#[derive(Clone, Serialize, Deserialize)]
pub struct GridGeometry {
    topology: Topology,
    dim: usize,
    resolution: usize,
    axes: Vec<Axis>,
    radial: Option<RadialModel>,
    #[serde(skip)]
    ops: OnceLock<Arc<Operators>>,
}

impl std::fmt::Debug for GridGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridGeometry")
            .field("topology", &self.topology)
            .field("dim", &self.dim)
            .field("resolution", &self.resolution)
            .field("axes", &self.axes)
            .field("radial", &self.radial)
            .finish()
    }
}

impl PartialEq for GridGeometry {
    fn eq(&self, other: &Self) -> bool {
        self.topology == other.topology
            && self.dim == other.dim
            && self.resolution == other.resolution
            && self.axes == other.axes
            && self.radial == other.radial
    }
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < 8 || resolution % 2 != 0 {
        return Err(Error::InvalidGrid(format!(
            "resolution must be even and at least 8, got {resolution}"
        )));
    }
    Ok(())
}

fn check_dim(dim: usize) -> Result<()> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidGrid(format!(
            "dimension must be 1 or 2, got {dim}"
        )));
    }
    Ok(())
}

fn check_positive(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::InvalidGrid(format!("{what} must be positive")));
    }
    Ok(())
}

/// Periodic complex torus with `2 n_complex` real directions.
pub fn make_torus_grid(n_complex: usize, resolution: usize, periods: &[f64]) -> Result<GridGeometry> {
    check_dim(n_complex)?;
    check_resolution(resolution)?;
    if periods.len() != 2 * n_complex {
        return Err(Error::InvalidGrid(format!(
            "expected {} periods, got {}",
            2 * n_complex,
            periods.len()
        )));
    }
    check_positive(periods, "periods")?;
    let axes = periods
        .iter()
        .map(|&period| Axis {
            kind: AxisKind::Periodic { period },
            points: resolution,
        })
        .collect();
    Ok(GridGeometry::from_parts(Topology::PeriodicTorus, n_complex, resolution, axes, None))
}

/// Radial disk model of complex dimension one truncated at geodesic radius
/// `truncation_radius`.
pub fn make_radial_grid(chart: RadialChart, resolution: usize, truncation_radius: f64) -> Result<GridGeometry> {
    check_resolution(resolution)?;
    check_positive(&[truncation_radius], "truncation radius")?;
    if chart == RadialChart::Euclidean && truncation_radius >= 1.0 {
        // all models used here live in the unit disk
        return Err(Error::InvalidGrid("Euclidean chart requires radius < 1".into()));
    }
    let radial = RadialModel {
        chart,
        truncation_radius,
        points: resolution,
    };
    Ok(GridGeometry::from_parts(
        Topology::TruncatedRadial,
        1,
        resolution,
        Vec::new(),
        Some(radial),
    ))
}

/// Real affine torus of dimension `n_real`.
pub fn make_real_torus(n_real: usize, resolution: usize, periods: &[f64]) -> Result<GridGeometry> {
    check_dim(n_real)?;
    check_resolution(resolution)?;
    if periods.len() != n_real {
        return Err(Error::InvalidGrid(format!(
            "expected {n_real} periods, got {}",
            periods.len()
        )));
    }
    check_positive(periods, "periods")?;
    let axes = periods
        .iter()
        .map(|&period| Axis {
            kind: AxisKind::Periodic { period },
            points: resolution,
        })
        .collect();
    Ok(GridGeometry::from_parts(Topology::PeriodicRealTorus, n_real, resolution, axes, None))
}

/// Box `[e^t_min, e^t_max]^n` in the positive orthant, stored in `t = log x`.
pub fn make_log_box(n_real: usize, resolution: usize, t_min: f64, t_max: f64) -> Result<GridGeometry> {
    check_dim(n_real)?;
    check_resolution(resolution)?;
    if !(t_min.is_finite() && t_max.is_finite() && t_max > t_min) {
        return Err(Error::InvalidGrid("log box needs t_min < t_max".into()));
    }
    let axes = (0..n_real)
        .map(|_| Axis {
            kind: AxisKind::LogChart { t_min, t_max },
            points: resolution,
        })
        .collect();
    Ok(GridGeometry::from_parts(Topology::LogOrthantBox, n_real, resolution, axes, None))
}

/// Complex tube over a real base grid with periodic fibers.
pub fn make_tube(base: &GridGeometry, fiber_points: usize, fiber_period: f64) -> Result<GridGeometry> {
    if base.topology.is_complex() {
        return Err(Error::InvalidGrid("tube base must be a real grid".into()));
    }
    check_resolution(fiber_points)?;
    check_positive(&[fiber_period], "fiber period")?;
    let mut axes = Vec::with_capacity(2 * base.dim);
    for axis in &base.axes {
        axes.push(*axis);
        axes.push(Axis {
            kind: AxisKind::Periodic {
                period: fiber_period,
            },
            points: fiber_points,
        });
    }
    let topology = if base.topology == Topology::PeriodicRealTorus {
        // every axis is periodic, so the tube is itself a complex torus
        Topology::PeriodicTorus
    } else {
        Topology::AffineTube
    };
    Ok(GridGeometry::from_parts(topology, base.dim, base.resolution, axes, None))
}

impl GridGeometry {
    fn from_parts(
        topology: Topology,
        dim: usize,
        resolution: usize,
        axes: Vec<Axis>,
        radial: Option<RadialModel>,
    ) -> Self {
        Self {
            topology,
            dim,
            resolution,
            axes,
            radial,
            ops: OnceLock::new(),
        }
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Complex dimension for complex grids, real dimension otherwise.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn radial(&self) -> Option<&RadialModel> {
        self.radial.as_ref()
    }

    pub fn is_complex(&self) -> bool {
        self.topology.is_complex()
    }

    /// Compact models: tori, where integrals of exact derivatives vanish.
    pub fn is_compact(&self) -> bool {
        matches!(self.topology, Topology::PeriodicTorus | Topology::PeriodicRealTorus)
    }

    pub fn all_periodic(&self) -> bool {
        self.radial.is_none() && self.axes.iter().all(Axis::is_periodic)
    }

    pub fn shape(&self) -> Vec<usize> {
        match &self.radial {
            Some(r) => vec![r.points],
            None => self.axes.iter().map(|a| a.points).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.shape().iter().product()
    }

    /// Multi-index of a node.
    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        let mut rem = node;
        for (a, &n) in shape.iter().enumerate().rev() {
            idx[a] = rem % n;
            rem /= n;
        }
        idx
    }

    pub fn node_from_multi(&self, idx: &[usize]) -> usize {
        self.shape()
            .iter()
            .zip(idx)
            .fold(0, |acc, (&n, &i)| acc * n + i)
    }

    /// Real coordinates of a node (`2n` entries for complex grids).
    pub fn node_coordinates(&self, node: usize) -> Vec<f64> {
        if let Some(r) = &self.radial {
            return vec![r.chart.radius(r.s(node)), 0.0];
        }
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .map(|(&j, axis)| axis.coordinate(j))
            .collect()
    }

    /// Coordinate along one axis for every node.
    pub fn axis_coordinate_field(&self, axis: usize) -> Vec<f64> {
        (0..self.node_count())
            .map(|node| self.node_coordinates(node)[axis])
            .collect()
    }

    /// The model's exact distance function (radial grids only).
    pub fn radial_distance(&self, node: usize) -> Option<f64> {
        self.radial.as_ref().map(|r| r.s(node))
    }

    /// Smallest coordinate spacing in the affine/complex coordinates.
    pub fn min_spacing(&self) -> f64 {
        if let Some(r) = &self.radial {
            let h = r.spacing();
            return (0..r.points)
                .map(|j| r.chart.dradius(r.s(j)) * h)
                .fold(f64::INFINITY, f64::min);
        }
        self.axes
            .iter()
            .map(|a| match a.kind {
                AxisKind::Periodic { .. } => a.spacing(),
                AxisKind::LogChart { t_min, .. } => {
                    let h = a.spacing();
                    (t_min + 0.5 * h).exp() * h
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest coordinate spacing at one node.
    pub fn local_spacing(&self, node: usize) -> f64 {
        if let Some(r) = &self.radial {
            return r.chart.dradius(r.s(node)) * r.spacing();
        }
        self.multi_index(node)
            .iter()
            .zip(&self.axes)
            .map(|(&j, a)| match a.kind {
                AxisKind::Periodic { .. } => a.spacing(),
                AxisKind::LogChart { .. } => a.coordinate(j) * a.spacing(),
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Coordinate volume element per node (Lebesgue measure in the affine or
    /// `x, y` coordinates).
    pub fn cell_volumes(&self) -> Vec<f64> {
        if let Some(r) = &self.radial {
            let h = r.spacing();
            return (0..r.points)
                .map(|j| {
                    let s = r.s(j);
                    2.0 * std::f64::consts::PI * r.chart.radius(s) * r.chart.dradius(s) * h
                })
                .collect();
        }
        (0..self.node_count())
            .map(|node| {
                self.multi_index(node)
                    .iter()
                    .zip(&self.axes)
                    .map(|(&j, a)| match a.kind {
                        AxisKind::Periodic { .. } => a.spacing(),
                        AxisKind::LogChart { .. } => a.coordinate(j) * a.spacing(),
                    })
                    .product()
            })
            .collect()
    }

    pub(crate) fn ops(&self) -> Arc<Operators> {
        self.ops
            .get_or_init(|| Arc::new(Operators::build(self)))
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn torus_sizes() {
        let g = make_torus_grid(1, 16, &[2.0 * PI, 2.0 * PI]).unwrap();
        assert_eq!(g.node_count(), 256);
        assert!((g.axes()[0].spacing() - 2.0 * PI / 16.0).abs() < 1e-15);
        let g2 = make_torus_grid(2, 8, &[2.0 * PI; 4]).unwrap();
        assert_eq!(g2.node_count(), 4096);
        assert_eq!(g2.axes().len(), 4);
    }

    #[test]
    fn torus_rejects_bad_input() {
        assert!(make_torus_grid(1, 7, &[2.0 * PI, 2.0 * PI]).is_err());
        assert!(make_torus_grid(1, 6, &[2.0 * PI, 2.0 * PI]).is_err());
        assert!(make_torus_grid(1, 8, &[2.0 * PI, 0.0]).is_err());
        assert!(make_torus_grid(3, 8, &[1.0; 6]).is_err());
    }

    #[test]
    fn torus_wraps_exactly() {
        let g = make_torus_grid(1, 8, &[2.0, 3.0]).unwrap();
        let a = g.axes()[1];
        assert_eq!(a.coordinate(0), 0.0);
        assert!((a.coordinate(7) + a.spacing() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn radial_nodes_strictly_inside() {
        let g = make_radial_grid(RadialChart::Poincare, 16, 4.0).unwrap();
        let r = g.radial().unwrap();
        assert!(r.s(0) > 0.0);
        assert!(r.s(15) < 4.0);
        assert_eq!(g.node_coordinates(0)[1], 0.0);
    }

    #[test]
    fn multi_index_round_trip() {
        let g = make_torus_grid(2, 8, &[1.0; 4]).unwrap();
        for node in [0, 1, 17, 4095] {
            assert_eq!(g.node_from_multi(&g.multi_index(node)), node);
        }
    }

    #[test]
    fn tube_over_torus_is_torus() {
        let base = make_real_torus(1, 16, &[2.0 * PI]).unwrap();
        let tube = make_tube(&base, 8, 2.0 * PI).unwrap();
        assert_eq!(tube.topology(), Topology::PeriodicTorus);
        assert_eq!(tube.node_count(), 128);
        let bx = make_log_box(1, 16, -1.0, 1.0).unwrap();
        assert_eq!(make_tube(&bx, 8, 1.0).unwrap().topology(), Topology::AffineTube);
    }
}

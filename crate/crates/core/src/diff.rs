//! Differentiation on grids: trigonometric on periodic axes, fourth-order
//! finite differences on log-chart axes and on radial profiles.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{AxisKind, GridGeometry, RadialModel};

type C = Complex64;

/// Finite-difference weights for derivatives `0..=m` at `z` from the points
/// `x` (Fornberg's recursion). `c[k][j]` is the weight of `x[j]` for order k.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[derive(Clone)]
struct Row {
    idx: Vec<usize>,
    w: Vec<f64>,
}

impl Row {
    fn apply(&self, f: &[C]) -> C {
        self.idx
            .iter()
            .zip(&self.w)
            .fold(C::new(0.0, 0.0), |acc, (&i, &w)| acc + f[i] * w)
    }
}

/// First and second derivative stencils on uniformly spaced nodes
/// `(j + 1/2) h`; `mirror` applies an even reflection at the left end.
fn stencils(n: usize, h: f64, mirror: bool) -> (Vec<Row>, Vec<Row>) {
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for j in 0..n {
        let window: Vec<isize> = if j + 2 < n && (mirror || j >= 2) {
            (j as isize - 2..=j as isize + 2).collect()
        } else if j < 2 {
            (0..6).collect()
        } else {
            (n as isize - 6..n as isize).collect()
        };
        let pos: Vec<f64> = window.iter().map(|&p| (p as f64 + 0.5) * h).collect();
        let w = fornberg_weights((j as f64 + 0.5) * h, &pos, 2);
        let mut r1 = Row { idx: Vec::new(), w: Vec::new() };
        let mut r2 = Row { idx: Vec::new(), w: Vec::new() };
        for (q, &p) in window.iter().enumerate() {
            let node = if p < 0 { (-p - 1) as usize } else { p as usize };
            for (row, wk) in [(&mut r1, w[1][q]), (&mut r2, w[2][q])] {
                match row.idx.iter().position(|&i| i == node) {
                    Some(at) => row.w[at] += wk,
                    None => {
                        row.idx.push(node);
                        row.w.push(wk);
                    }
                }
            }
        }
        d1.push(r1);
        d2.push(r2);
    }
    (d1, d2)
}

struct FourierOp {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

struct LogOp {
    d1: Vec<Row>,
    d2: Vec<Row>,
    /// `exp(-t)` per node.
    scale: Vec<f64>,
}

enum AxisOp {
    Fourier(FourierOp),
    Log(LogOp),
}

impl AxisOp {
    /// Derivative of order 1 or 2 in the affine coordinate, in place.
    fn apply(&self, line: &mut [C], order: usize, scratch: &mut Vec<C>) {
        match self {
            AxisOp::Fourier(op) => {
                let n = line.len();
                op.fwd.process(line);
                let norm = 1.0 / n as f64;
                for (j, v) in line.iter_mut().enumerate() {
                    let k = op.k[j];
                    *v *= match order {
                        1 if 2 * j == n => C::new(0.0, 0.0),
                        1 => C::new(0.0, k * norm),
                        _ => C::new(-k * k * norm, 0.0),
                    };
                }
                op.inv.process(line);
            }
            AxisOp::Log(op) => {
                scratch.clear();
                scratch.extend_from_slice(line);
                for (j, v) in line.iter_mut().enumerate() {
                    let e = op.scale[j];
                    let first = op.d1[j].apply(scratch);
                    *v = if order == 1 {
                        first * e
                    } else {
                        (op.d2[j].apply(scratch) - first) * (e * e)
                    };
                }
            }
        }
    }
}

struct RadialOp {
    d1: Vec<Row>,
    d2: Vec<Row>,
    inv_rp: Vec<f64>,
    inv_rp2: Vec<f64>,
    coef1: Vec<f64>,
}

/// Cached differentiation operators of a grid.
pub(crate) struct Operators {
    axes: Vec<AxisOp>,
    radial: Option<RadialOp>,
    fft: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl std::fmt::Debug for Operators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Operators").field("axes", &self.axes.len()).finish()
    }
}

fn radial_op(r: &RadialModel) -> RadialOp {
    let (d1, d2) = stencils(r.points, r.spacing(), true);
    let mut inv_rp = Vec::new();
    let mut inv_rp2 = Vec::new();
    let mut coef1 = Vec::new();
    for j in 0..r.points {
        let s = r.s(j);
        let (rad, rp, rpp) = (r.chart.radius(s), r.chart.dradius(s), r.chart.d2radius(s));
        inv_rp.push(1.0 / rp);
        inv_rp2.push(1.0 / (rp * rp));
        coef1.push(1.0 / (rad * rp) - rpp / (rp * rp * rp));
    }
    RadialOp { d1, d2, inv_rp, inv_rp2, coef1 }
}

impl Operators {
    pub(crate) fn build(grid: &GridGeometry) -> Self {
        let mut planner = FftPlanner::new();
        let mut axes = Vec::new();
        let mut fft = Vec::new();
        for axis in grid.axes() {
            let n = axis.points;
            let fwd = planner.plan_fft_forward(n);
            let inv = planner.plan_fft_inverse(n);
            fft.push((fwd.clone(), inv.clone()));
            axes.push(match axis.kind {
                AxisKind::Periodic { period } => {
                    let k = (0..n)
                        .map(|j| {
                            let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                            2.0 * PI * m / period
                        })
                        .collect();
                    AxisOp::Fourier(FourierOp { fwd, inv, k })
                }
                AxisKind::LogChart { .. } => {
                    let (d1, d2) = stencils(n, axis.spacing(), false);
                    let scale = (0..n).map(|j| (-axis.chart_coordinate(j)).exp()).collect();
                    AxisOp::Log(LogOp { d1, d2, scale })
                }
            });
        }
        Self {
            axes,
            radial: grid.radial().map(radial_op),
            fft,
        }
    }
}

fn line_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn map_lines(shape: &[usize], axis: usize, f: &mut [C], mut op: impl FnMut(&mut [C])) {
    let (outer, n, inner) = line_layout(shape, axis);
    let mut line = vec![C::new(0.0, 0.0); n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for j in 0..n {
                line[j] = f[base + j * inner];
            }
            op(&mut line);
            for j in 0..n {
                f[base + j * inner] = line[j];
            }
        }
    }
}

fn to_complex(f: &[f64]) -> Vec<C> {
    f.iter().map(|&x| C::new(x, 0.0)).collect()
}

impl GridGeometry {
    /// Derivative of order 1 or 2 along one axis, in that axis' affine
    /// coordinate. On radial grids the single axis is the geodesic radius.
    pub fn derivative(&self, f: &[C], axis: usize, order: usize) -> Vec<C> {
        assert!(order == 1 || order == 2, "derivative order must be 1 or 2");
        let ops = self.ops();
        if let Some(r) = &ops.radial {
            let rows = if order == 1 { &r.d1 } else { &r.d2 };
            return rows.iter().map(|row| row.apply(f)).collect();
        }
        let shape = self.shape();
        let mut out = f.to_vec();
        let mut scratch = Vec::new();
        let op = &ops.axes[axis];
        map_lines(&shape, axis, &mut out, |line| op.apply(line, order, &mut scratch));
        out
    }

    pub fn derivative_real(&self, f: &[f64], axis: usize, order: usize) -> Vec<f64> {
        self.derivative(&to_complex(f), axis, order)
            .into_iter()
            .map(|v| v.re)
            .collect()
    }

    /// `∂_a ∂_b f` in affine coordinates.
    pub fn mixed_derivative(&self, f: &[C], a: usize, b: usize) -> Vec<C> {
        if a == b {
            self.derivative(f, a, 2)
        } else {
            self.derivative(&self.derivative(f, a, 1), b, 1)
        }
    }

    /// `∂f/∂z^k = ½(∂_x − i∂_y) f`. On radial grids f is a radial profile
    /// and the value is taken on the positive real axis.
    pub fn dz(&self, f: &[C], k: usize) -> Vec<C> {
        self.dz_signed(f, k, -1.0)
    }

    /// `∂f/∂z̄^k = ½(∂_x + i∂_y) f`.
    pub fn dzbar(&self, f: &[C], k: usize) -> Vec<C> {
        self.dz_signed(f, k, 1.0)
    }

    fn dz_signed(&self, f: &[C], k: usize, sign: f64) -> Vec<C> {
        let ops = self.ops();
        if let Some(r) = &ops.radial {
            return r
                .d1
                .iter()
                .zip(&r.inv_rp)
                .map(|(row, &ir)| row.apply(f) * (0.5 * ir))
                .collect();
        }
        let dx = self.derivative(f, 2 * k, 1);
        let dy = self.derivative(f, 2 * k + 1, 1);
        dx.iter()
            .zip(&dy)
            .map(|(a, b)| (a + C::new(0.0, sign) * b) * 0.5)
            .collect()
    }

    /// `∂²f/∂z^k∂z̄^l`.
    pub fn dz_dzbar(&self, f: &[C], k: usize, l: usize) -> Vec<C> {
        let ops = self.ops();
        if let Some(r) = &ops.radial {
            return (0..f.len())
                .map(|j| {
                    (r.d2[j].apply(f) * r.inv_rp2[j] + r.d1[j].apply(f) * r.coef1[j]) * 0.25
                })
                .collect();
        }
        let (xk, yk, xl, yl) = (2 * k, 2 * k + 1, 2 * l, 2 * l + 1);
        if k == l {
            let a = self.derivative(f, xk, 2);
            let b = self.derivative(f, yk, 2);
            return a.iter().zip(&b).map(|(a, b)| (a + b) * 0.25).collect();
        }
        let fxk = self.derivative(f, xk, 1);
        let fyk = self.derivative(f, yk, 1);
        let xx = self.derivative(&fxk, xl, 1);
        let yy = self.derivative(&fyk, yl, 1);
        let xy = self.derivative(&fxk, yl, 1);
        let yx = self.derivative(&fyk, xl, 1);
        (0..f.len())
            .map(|j| (xx[j] + yy[j] + C::new(0.0, 1.0) * (xy[j] - yx[j])) * 0.25)
            .collect()
    }

    /// Fourier wavenumbers of a periodic axis.
    pub(crate) fn wavenumbers(&self, axis: usize) -> Option<Vec<f64>> {
        match &self.ops().axes.get(axis)? {
            AxisOp::Fourier(op) => Some(op.k.clone()),
            AxisOp::Log(_) => None,
        }
    }

    /// Unnormalized multidimensional FFT over all axes.
    pub(crate) fn fft_all(&self, f: &mut [C], inverse: bool) {
        let ops = self.ops();
        let shape = self.shape();
        for (axis, (fwd, inv)) in ops.fft.iter().enumerate() {
            let plan = if inverse { inv } else { fwd };
            map_lines(&shape, axis, f, |line| plan.process(line));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_log_box, make_radial_grid, make_torus_grid, RadialChart};

    #[test]
    fn fornberg_centered_weights() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let c = fornberg_weights(0.0, &x, 2);
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for j in 0..5 {
            assert!((c[1][j] - d1[j]).abs() < 1e-14);
            assert!((c[2][j] - d2[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn spectral_derivative_of_mode() {
        let g = make_torus_grid(1, 16, &[2.0 * PI, 2.0 * PI]).unwrap();
        let f: Vec<f64> = (0..g.node_count())
            .map(|i| {
                let x = g.node_coordinates(i);
                (2.0 * x[0]).sin() * x[1].cos()
            })
            .collect();
        let d = g.derivative_real(&f, 0, 1);
        let d2 = g.derivative_real(&f, 1, 2);
        for i in 0..g.node_count() {
            let x = g.node_coordinates(i);
            assert!((d[i] - 2.0 * (2.0 * x[0]).cos() * x[1].cos()).abs() < 1e-12);
            assert!((d2[i] + f[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn log_axis_derivatives_are_fourth_order_exact_on_quartics() {
        let g = make_log_box(1, 16, -0.5, 0.5).unwrap();
        let t: Vec<f64> = (0..16).map(|j| g.axes()[0].chart_coordinate(j)).collect();
        let f: Vec<f64> = t.iter().map(|t| t.powi(4) - t * t).collect();
        let d1 = g.derivative_real(&f, 0, 1);
        for j in 0..16 {
            let want = (4.0 * t[j].powi(3) - 2.0 * t[j]) * (-t[j]).exp();
            assert!((d1[j] - want).abs() < 1e-9, "{j}: {} vs {want}", d1[j]);
        }
    }

    #[test]
    fn radial_laplacian_of_r_squared() {
        let g = make_radial_grid(RadialChart::Euclidean, 32, 0.9).unwrap();
        let r = g.radial().unwrap();
        let f: Vec<C> = (0..32).map(|j| C::new(r.s(j).powi(2), 0.0)).collect();
        let l = g.dz_dzbar(&f, 0, 0);
        for v in l {
            assert!((v.re - 1.0).abs() < 1e-10);
        }
    }
}

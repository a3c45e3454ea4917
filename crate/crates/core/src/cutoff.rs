//! The exhaustion cutoff `𝔉(s) = ∫₀^s ψ(τ) f'(τ) dτ` and the conformal
//! truncation `g̃ = e^{2𝔉(ρ̃/ρ₀)} g`.

use crate::error::{Error, Result};
use crate::field::{Form11Field, MetricField};
use crate::grid::{AxisKind, GridGeometry, Topology};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Cutoff {
    kappa: f64,
    a: f64,
    b: f64,
    value_at_b: f64,
    rule: Vec<(f64, f64)>,
}

const PANELS: usize = 32;

impl Cutoff {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.125) {
            return Err(Error::KappaOutOfRange(kappa));
        }
        let a = 1.0 - kappa + kappa * kappa;
        let b = 1.0 - kappa + 2.0 * kappa * kappa;
        let mut c = Self {
            kappa,
            a,
            b,
            value_at_b: 0.0,
            rule: gauss_legendre(12),
        };
        c.value_at_b = c.integrate(b);
        Ok(c)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `[1 − κ + κ², 1 − κ + 2κ²]`, where ψ rises from 0 to 1.
    pub fn transition(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn describe(&self) -> String {
        format!(
            "psi = quintic smoothstep 6x^5 - 15x^4 + 10x^3 on [{}, {}], kappa = {}",
            self.a, self.b, self.kappa
        )
    }

    fn x(&self, s: f64) -> f64 {
        ((s - self.a) / (self.b - self.a)).clamp(0.0, 1.0)
    }

    pub fn psi(&self, s: f64) -> f64 {
        let x = self.x(s);
        x * x * x * (x * (6.0 * x - 15.0) + 10.0)
    }

    pub fn psi_d1(&self, s: f64) -> f64 {
        let x = self.x(s);
        30.0 * x * x * (x - 1.0) * (x - 1.0) / (self.b - self.a)
    }

    pub fn psi_d2(&self, s: f64) -> f64 {
        let x = self.x(s);
        let w = self.b - self.a;
        60.0 * x * (x - 1.0) * (2.0 * x - 1.0) / (w * w)
    }

    fn w(&self, s: f64) -> f64 {
        (s - 1.0 + self.kappa) / self.kappa
    }

    /// `f(s) = −log(1 − w²)` with `w = (s − 1 + κ)/κ`, for `s > 1 − κ`.
    pub fn profile(&self, s: f64) -> f64 {
        let w = self.w(s);
        -(1.0 - w * w).ln()
    }

    /// Derivative of order `k ∈ {1, 2, 3}` of the profile.
    pub fn profile_derivative(&self, s: f64, k: usize) -> f64 {
        let w = self.w(s);
        let d = 1.0 - w * w;
        let q = match k {
            1 => w / d,
            2 => (1.0 + w * w) / (d * d),
            3 => (6.0 * w + 2.0 * w * w * w) / (d * d * d),
            _ => panic!("profile derivative order must be 1, 2 or 3"),
        };
        2.0 * q / self.kappa.powi(k as i32)
    }

    fn integrand(&self, t: f64) -> f64 {
        self.psi(t) * self.profile_derivative(t, 1)
    }

    fn integrate(&self, s: f64) -> f64 {
        let h = (s - self.a) / PANELS as f64;
        let mut total = 0.0;
        for p in 0..PANELS {
            let mid = self.a + (p as f64 + 0.5) * h;
            for &(x, w) in &self.rule {
                total += w * 0.5 * h * self.integrand(mid + 0.5 * h * x);
            }
        }
        total
    }

    /// `𝔉(s)`; exactly zero up to `1 − κ + κ²`, infinite from `s = 1`.
    pub fn value(&self, s: f64) -> f64 {
        if s <= self.a {
            0.0
        } else if s < self.b {
            self.integrate(s)
        } else if s < 1.0 {
            self.value_at_b + self.profile(s) - self.profile(self.b)
        } else {
            f64::INFINITY
        }
    }

    /// `𝔉^{(k)}(s)` for `k ∈ {1, 2, 3}`.
    pub fn derivative(&self, s: f64, k: usize) -> f64 {
        if s <= self.a {
            return 0.0;
        }
        if s >= 1.0 {
            return f64::INFINITY;
        }
        let f = |j| self.profile_derivative(s, j);
        match k {
            1 => self.psi(s) * f(1),
            2 => self.psi_d1(s) * f(1) + self.psi(s) * f(2),
            3 => self.psi_d2(s) * f(1) + 2.0 * self.psi_d1(s) * f(2) + self.psi(s) * f(3),
            _ => panic!("derivative order must be 1, 2 or 3"),
        }
    }

    /// `sup exp(−k𝔉) 𝔉^{(k)}` over `samples` uniform points of `(0, 1)`.
    pub fn weighted_derivative_sup(&self, k: usize, samples: usize) -> f64 {
        (1..samples)
            .map(|i| {
                let s = i as f64 / samples as f64;
                (-(k as f64) * self.value(s)).exp() * self.derivative(s, k).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `g̃ = e^{2𝔉(ρ̃/ρ₀)} g` on a radial model; nodes where `𝔉 = 0` are copied.
pub fn conformal_truncation(metric: &MetricField, rho0: f64, kappa: f64) -> Result<MetricField> {
    MetricField::from_form(truncate_form(metric.form(), rho0, kappa)?)
}

/// Conformal weight `e^{2F̃}` per node. Radial models use `ρ̃ = s`; log boxes
/// use the product weight of `𝔉(|t_i − t̄_i| / ρ₀)` over the axes.
pub fn truncation_weights(geometry: &GridGeometry, rho0: f64, kappa: f64) -> Result<Vec<f64>> {
    let cutoff = Cutoff::new(kappa)?;
    if !(rho0 > 0.0 && rho0.is_finite()) {
        return Err(Error::InvalidInput(format!("rho0 must be positive, got {rho0}")));
    }
    let exponent = |node: usize| -> f64 {
        match geometry.topology() {
            Topology::TruncatedRadial => cutoff.value(geometry.radial_distance(node).unwrap_or(0.0) / rho0),
            _ => geometry
                .multi_index(node)
                .iter()
                .zip(geometry.axes())
                .map(|(&j, axis)| match axis.kind {
                    AxisKind::LogChart { t_min, t_max } => {
                        let centre = 0.5 * (t_min + t_max);
                        cutoff.value((axis.chart_coordinate(j) - centre).abs() / rho0)
                    }
                    AxisKind::Periodic { .. } => 0.0,
                })
                .sum(),
        }
    };
    match geometry.topology() {
        Topology::TruncatedRadial | Topology::LogOrthantBox => {}
        _ => {
            return Err(Error::InvalidGrid(
                "conformal truncation needs a radial grid or a log box".into(),
            ))
        }
    }
    let weights: Vec<f64> = (0..geometry.node_count())
        .map(|node| {
            let f = exponent(node);
            if f == 0.0 {
                1.0
            } else {
                (2.0 * f).exp()
            }
        })
        .collect();
    if let Some(node) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "node {node} lies outside the truncation radius {rho0}"
        )));
    }
    Ok(weights)
}

/// The conformal truncation applied to an arbitrary (1,1)-form.
pub fn truncate_form(form: &Form11Field, rho0: f64, kappa: f64) -> Result<Form11Field> {
    let weights = truncation_weights(form.geometry(), rho0, kappa)?;
    let n = form.dim();
    let values = form
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = weights[i / (n * n)];
            if w == 1.0 {
                *v
            } else {
                v * w
            }
        })
        .collect();
    Form11Field::new(form.geometry().clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(a + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    #[test]
    fn vanishes_before_transition() {
        let c = Cutoff::new(0.1).unwrap();
        assert_eq!(c.value(0.5), 0.0);
        assert_eq!(c.value(1.0 - 0.1 + 0.01), 0.0);
        assert!(c.value(0.92) > 0.0);
    }

    #[test]
    fn quadrature_matches_step_halving_oracle() {
        let k = 0.1;
        let c = Cutoff::new(k).unwrap();
        let s = 1.0 - k + 3.0 * k * k;
        let (a, _) = c.transition();
        let f = |t: f64| c.psi(t) * c.profile_derivative(t, 1);
        let mut prev = simpson(f, a, s, 64);
        let mut n = 128;
        loop {
            let next = simpson(f, a, s, n);
            if (next - prev).abs() < 1e-14 || n > 1 << 20 {
                prev = next;
                break;
            }
            prev = next;
            n *= 2;
        }
        assert!((c.value(s) - prev).abs() < 1e-12, "{} vs {prev}", c.value(s));
    }

    #[test]
    fn derivatives_match_differences() {
        let c = Cutoff::new(0.1).unwrap();
        for &s in &[0.915, 0.925, 0.95, 0.98] {
            let h = 1e-6;
            for k in 1..=3 {
                let fd = if k == 1 {
                    (c.value(s + h) - c.value(s - h)) / (2.0 * h)
                } else {
                    (c.derivative(s + h, k - 1) - c.derivative(s - h, k - 1)) / (2.0 * h)
                };
                let an = c.derivative(s, k);
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "k={k} s={s}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn psi_slope_respects_bound() {
        let k = 0.1;
        let c = Cutoff::new(k).unwrap();
        let (a, b) = c.transition();
        let max = (0..=1000)
            .map(|i| c.psi_d1(a + (b - a) * i as f64 / 1000.0))
            .fold(0.0, f64::max);
        assert!(max <= 2.0 / (k * k));
    }

    #[test]
    fn rejects_large_kappa() {
        assert_eq!(Cutoff::new(0.2).unwrap_err(), Error::KappaOutOfRange(0.2));
        assert!(Cutoff::new(0.125).is_err());
        assert!(Cutoff::new(0.0).is_err());
    }
}

//! Run configuration: JSON text in, a validated [`RunConfig`] out.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::eigen::OperatorKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    TorusMA,
    PrescribedRicci,
    KahlerEinsteinDisk,
    RicciFlow,
    HessianLift,
    HesseEinsteinOrthant,
    OperatorProbes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Complex (or real, for Hessian scenarios) dimension.
    pub dim: usize,
    /// Points per real coordinate direction.
    pub resolution: usize,
    pub period: f64,
    pub operator: OperatorKind,
    /// Amplitude `a` of the test datum `a cos x`.
    pub amplitude: f64,
    /// Constant added to the corrected datum; nonzero breaks compatibility.
    pub shift: f64,
    pub epsilons: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub rhos: Vec<f64>,
    pub kappa: f64,
    /// Radial points per unit of `s` for the exhaustion and flow models.
    pub radial_density: f64,
    /// Radial points per unit of `s` for the exact-Einstein check.
    pub einstein_density: f64,
    pub bump: f64,
    pub stabilization_tol: f64,
    pub t_final: f64,
    pub flow_steps: usize,
    pub smooth_time: f64,
    pub smooth_first: bool,
    pub monitor_c0: f64,
    pub monitor_c1: f64,
    pub monitor_k0: f64,
    /// Radius of the Poincaré model used by the flow bound monitor.
    pub flow_radius: f64,
    pub monitor_steps: usize,
    /// Monitor step as a fraction of the stability bound.
    pub monitor_dt_fraction: f64,
    /// Step refinement of the method-of-lines flow reference.
    pub reference_refinement: usize,
    pub resolutions: Vec<usize>,
    /// Half-width of the log box in the chart `t = log x`.
    pub box_half_width: f64,
    pub trials: usize,
    pub gradient_points: usize,
    pub instances: usize,
    /// Resolution of the seeded C0/uniqueness instances.
    pub probe_resolution: usize,
    /// Newton tolerance of the seeded instances.
    pub probe_tol: f64,
    pub seed: u64,
    pub out: Option<String>,
}

impl RunConfig {
    pub fn defaults(scenario: Scenario) -> Self {
        // the Hesse-Einstein chain differentiates the potential six times,
        // so its roundoff grows with resolution
        let resolution = if scenario == Scenario::HesseEinsteinOrthant { 32 } else { 64 };
        Self {
            scenario,
            dim: 1,
            resolution,
            period: 2.0 * std::f64::consts::PI,
            operator: OperatorKind::LogMA,
            amplitude: 0.2,
            shift: 0.0,
            epsilons: vec![1e-1, 1e-2, 1e-3, 1e-4],
            tol: 1e-12,
            max_iter: 50,
            rhos: vec![4.0, 6.0, 8.0],
            kappa: 0.1,
            radial_density: 16.0,
            einstein_density: 64.0,
            bump: 0.1,
            stabilization_tol: 1e-5,
            t_final: 0.05,
            flow_steps: 1000,
            smooth_time: 0.01,
            smooth_first: false,
            monitor_c0: 2.0,
            monitor_c1: 0.0,
            monitor_k0: 100.0,
            flow_radius: 2.0,
            monitor_steps: 200,
            monitor_dt_fraction: 0.05,
            reference_refinement: 4,
            resolutions: vec![16, 32, 64],
            box_half_width: 2.0,
            trials: 1000,
            gradient_points: 100,
            instances: 20,
            probe_resolution: 16,
            probe_tol: 1e-11,
            seed: 0,
            out: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(1..=2).contains(&self.dim) {
            v.push(format!("dim must be 1 or 2, got {}", self.dim));
        }
        if self.resolution < 8 || self.resolution % 2 != 0 {
            v.push(format!("resolution must be even and at least 8, got {}", self.resolution));
        }
        if !(self.period > 0.0) {
            v.push("period must be positive".into());
        }
        if self.operator == OperatorKind::NMinus1MA && self.dim < 2 {
            v.push("the (n-1) Monge-Ampere operator needs dim 2".into());
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0)) {
            v.push("epsilons must be a nonempty list of positive values".into());
        }
        if !(self.tol > 0.0 && self.probe_tol > 0.0) {
            v.push("tol and probe_tol must be positive".into());
        }
        if self.max_iter == 0 {
            v.push("max_iter must be positive".into());
        }
        if self.rhos.is_empty() || self.rhos.windows(2).any(|w| w[1] <= w[0]) || self.rhos[0] <= 0.0 {
            v.push("rhos must be positive and increasing".into());
        }
        if !(self.kappa > 0.0 && self.kappa < 0.125) {
            v.push(format!("kappa must satisfy 0 < kappa < 1/8, got {}", self.kappa));
        }
        if !(self.radial_density > 0.0 && self.einstein_density > 0.0 && self.flow_radius > 0.0) {
            v.push("radial_density, einstein_density and flow_radius must be positive".into());
        }
        if !(self.monitor_dt_fraction > 0.0 && self.monitor_dt_fraction <= 1.0) || self.monitor_steps == 0 {
            v.push("monitor_dt_fraction must lie in (0, 1] and monitor_steps be positive".into());
        }
        if self.reference_refinement == 0 {
            v.push("reference_refinement must be positive".into());
        }
        if !(self.stabilization_tol > 0.0) {
            v.push("stabilization_tol must be positive".into());
        }
        if !(self.t_final >= 0.0) || self.flow_steps == 0 {
            v.push("t_final must be >= 0 and flow_steps positive".into());
        }
        if !(self.smooth_time >= 0.0) {
            v.push("smooth_time must be >= 0".into());
        }
        if self.resolutions.len() < 2 || self.resolutions.iter().any(|&r| r < 8 || r % 2 != 0) {
            v.push("resolutions must list at least two even values >= 8".into());
        }
        if !(self.box_half_width > 0.0) {
            v.push("box_half_width must be positive".into());
        }
        if self.trials == 0 || self.gradient_points == 0 || self.instances == 0 {
            v.push("trials, gradient_points and instances must be positive".into());
        }
        if self.probe_resolution < 8 || self.probe_resolution % 2 != 0 {
            v.push(format!("probe_resolution must be even and at least 8, got {}", self.probe_resolution));
        }
        v
    }
}

fn field<T: serde::de::DeserializeOwned>(key: &str, value: &Value, errors: &mut Vec<String>) -> Option<T> {
    match serde_json::from_value(value.clone()) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{key}: {e}"));
            None
        }
    }
}

/// Parses and validates a configuration, reporting every violation found.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
    let Value::Object(map) = value else {
        return Err(Error::Config(vec!["config must be a JSON object".into()]));
    };
    let mut errors = Vec::new();
    let scenario = match map.get("scenario") {
        Some(v) => field::<Scenario>("scenario", v, &mut errors),
        None => {
            errors.push("missing required key: scenario".into());
            None
        }
    };
    let mut cfg = RunConfig::defaults(scenario.unwrap_or(Scenario::TorusMA));
    apply(&mut cfg, &map, &mut errors);
    if scenario.is_some() {
        errors.extend(cfg.violations());
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

fn apply(cfg: &mut RunConfig, map: &Map<String, Value>, errors: &mut Vec<String>) {
    macro_rules! set {
        ($key:expr, $value:expr, $($name:ident),*) => {
            match $key {
                "scenario" => {}
                "out" => {
                    if $value.is_null() {
                        cfg.out = None;
                    } else if let Some(v) = field::<String>($key, $value, errors) {
                        cfg.out = Some(v);
                    }
                }
                $(stringify!($name) => {
                    if let Some(v) = field($key, $value, errors) {
                        cfg.$name = v;
                    }
                })*
                other => errors.push(format!("unknown key: {other}")),
            }
        };
    }
    for (key, value) in map {
        set!(
            key.as_str(),
            value,
            dim,
            resolution,
            period,
            operator,
            amplitude,
            shift,
            epsilons,
            tol,
            max_iter,
            rhos,
            kappa,
            radial_density,
            einstein_density,
            bump,
            stabilization_tol,
            t_final,
            flow_steps,
            smooth_time,
            smooth_first,
            monitor_c0,
            monitor_c1,
            monitor_k0,
            flow_radius,
            monitor_steps,
            monitor_dt_fraction,
            reference_refinement,
            resolutions,
            box_half_width,
            trials,
            gradient_points,
            instances,
            probe_resolution,
            probe_tol,
            seed
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(r#"{"scenario": "TorusMA"}"#).unwrap();
        assert_eq!(cfg.resolution, 64);
        assert_eq!(cfg.epsilons, vec![1e-1, 1e-2, 1e-3, 1e-4]);
    }

    #[test]
    fn collects_every_violation() {
        let err = parse_config(r#"{"kappa": 0.2, "colour": 3, "resolution": 7}"#).unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert!(list.iter().any(|m| m.contains("missing required key: scenario")));
        assert!(list.iter().any(|m| m.contains("unknown key: colour")));
        let err = parse_config(r#"{"scenario": "KahlerEinsteinDisk", "kappa": 0.2, "resolution": 7}"#).unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert!(list.iter().any(|m| m.contains("kappa < 1/8")));
        assert!(list.iter().any(|m| m.contains("resolution")));
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = parse_config(r#"{"scenario": "RicciFlow", "amplitude": 0.3, "out": "x"}"#).unwrap();
        let again = parse_config(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_json(), again.to_json());
    }
}

//! Python bindings for `kahler-core`.

use std::collections::BTreeMap;
use std::path::Path;

use kahler_core::config::{self, Scenario};
use kahler_core::curvature::{curvature_package, discretization_unit, ricci_form};
use kahler_core::cutoff::{conformal_truncation, Cutoff as CoreCutoff};
use kahler_core::eigen::{concavity_monotonicity_probe, EigenOperator, OperatorKind};
use kahler_core::field::MetricField;
use kahler_core::kahler::{einstein_residual, flow_stability_bound, kahler_ricci_flow};
use kahler_core::pipeline::{self, RunOutput};
use kahler_core::report::{emit_report, summary_text};
use kahler_core::{make_radial_grid, make_torus_grid, RadialChart};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(kahlerbench, KahlerError, PyException);

fn err(e: kahler_core::Error) -> PyErr {
    KahlerError::new_err(e.to_string())
}

#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig(config::RunConfig);

#[pymethods]
impl PyRunConfig {
    /// Defaults for a scenario name such as `"TorusMA"`.
    #[staticmethod]
    fn defaults(scenario: &str) -> PyResult<Self> {
        let text = format!("{{\"scenario\": {scenario:?}}}");
        config::parse_config(&text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        config::parse_config(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    /// Returns a copy with the given keys replaced, validated like a file.
    fn with_overrides(&self, overrides: &str) -> PyResult<Self> {
        let mut base: serde_json::Value = serde_json::from_str(&self.0.to_json()).expect("config serializes");
        let extra: serde_json::Value =
            serde_json::from_str(overrides).map_err(|e| KahlerError::new_err(e.to_string()))?;
        let Some(obj) = extra.as_object() else {
            return Err(KahlerError::new_err("overrides must be a JSON object"));
        };
        for (k, v) in obj {
            base[k] = v.clone();
        }
        config::parse_config(&base.to_string()).map(Self).map_err(err)
    }

    #[getter]
    fn scenario(&self) -> String {
        format!("{:?}", self.0.scenario)
    }

    #[getter]
    fn resolution(&self) -> usize {
        self.0.resolution
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(scenario={:?}, resolution={})", self.0.scenario, self.0.resolution)
    }
}

#[pyclass(name = "RunResult")]
struct PyRunResult(RunOutput);

#[pymethods]
impl PyRunResult {
    #[getter]
    fn passed(&self) -> bool {
        self.0.manifest.passed()
    }

    /// `(name, value, relation, tolerance, passed)` for every check.
    fn checks(&self) -> Vec<(String, f64, String, f64, bool)> {
        self.0
            .manifest
            .checks
            .iter()
            .map(|c| (c.name.clone(), c.value, c.relation.clone(), c.tolerance, c.passed))
            .collect()
    }

    fn scalars(&self) -> BTreeMap<String, f64> {
        self.0.manifest.all_scalars()
    }

    fn errors(&self) -> Vec<String> {
        self.0.manifest.errors.clone()
    }

    fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.0.manifest).expect("manifest serializes")
    }

    fn summary(&self) -> String {
        summary_text(&self.0)
    }

    /// Writes the report files and returns their paths.
    fn emit(&self, directory: &str) -> PyResult<Vec<String>> {
        let paths = emit_report(&self.0, Path::new(directory)).map_err(err)?;
        Ok(paths.iter().map(|p| p.display().to_string()).collect())
    }
}

#[pyfunction]
fn run(py: Python<'_>, config: PyRunConfig) -> PyRunResult {
    PyRunResult(py.detach(|| pipeline::run_pipeline(&config.0)))
}

#[pyfunction]
fn curvature_study(py: Python<'_>, config: PyRunConfig) -> PyRunResult {
    PyRunResult(py.detach(|| pipeline::curvature_study(&config.0)))
}

#[pyfunction]
fn scenarios() -> Vec<String> {
    [
        Scenario::TorusMA,
        Scenario::PrescribedRicci,
        Scenario::KahlerEinsteinDisk,
        Scenario::RicciFlow,
        Scenario::HessianLift,
        Scenario::HesseEinsteinOrthant,
        Scenario::OperatorProbes,
    ]
    .iter()
    .map(|s| format!("{s:?}"))
    .collect()
}

#[pyclass(name = "EigenOperator", from_py_object)]
#[derive(Clone)]
struct PyEigenOperator(EigenOperator);

#[pymethods]
impl PyEigenOperator {
    /// `kind` is `"LogMA"` or `"NMinus1MA"`.
    #[new]
    fn new(kind: &str, dim: usize) -> PyResult<Self> {
        let kind = match kind {
            "LogMA" => OperatorKind::LogMA,
            "NMinus1MA" => OperatorKind::NMinus1MA,
            other => return Err(KahlerError::new_err(format!("unknown operator {other}"))),
        };
        EigenOperator::new(kind, dim).map(Self).map_err(err)
    }

    /// `(value, gradient)` inside the cone, `None` outside.
    fn eval(&self, lambda: Vec<f64>) -> PyResult<Option<(f64, Vec<f64>)>> {
        if lambda.len() != self.0.dim {
            return Err(KahlerError::new_err(format!("expected {} eigenvalues", self.0.dim)));
        }
        Ok(self.0.eval_f_grad(&lambda).0)
    }

    fn directional_limit(&self, lambda: Vec<f64>, i: usize) -> PyResult<f64> {
        if lambda.len() != self.0.dim || i >= self.0.dim {
            return Err(KahlerError::new_err("index or length out of range"));
        }
        Ok(self.0.directional_limit(&lambda, i))
    }

    /// Seeded concavity, monotonicity, symmetry and gradient probe.
    fn probe(&self, trials: usize, seed: u64) -> BTreeMap<String, f64> {
        let r = concavity_monotonicity_probe(&self.0, trials, seed);
        BTreeMap::from([
            ("trials".to_string(), r.trials as f64),
            ("violations".to_string(), r.violations() as f64),
            ("max_gradient_error".to_string(), r.max_gradient_error),
        ])
    }
}

fn check_order(k: usize) -> PyResult<()> {
    if (1..=3).contains(&k) {
        Ok(())
    } else {
        Err(KahlerError::new_err(format!("derivative order must be 1, 2 or 3, got {k}")))
    }
}

#[pyclass(name = "Cutoff")]
struct PyCutoff(CoreCutoff);

#[pymethods]
impl PyCutoff {
    #[new]
    fn new(kappa: f64) -> PyResult<Self> {
        CoreCutoff::new(kappa).map(Self).map_err(err)
    }

    fn value(&self, s: f64) -> f64 {
        self.0.value(s)
    }

    /// Derivative of order `k` in 1..=3.
    fn derivative(&self, s: f64, k: usize) -> PyResult<f64> {
        check_order(k)?;
        Ok(self.0.derivative(s, k))
    }

    fn weighted_derivative_sup(&self, k: usize, samples: usize) -> PyResult<f64> {
        check_order(k)?;
        Ok(self.0.weighted_derivative_sup(k, samples))
    }
}

#[pyclass(name = "Metric")]
struct PyMetric(MetricField);

#[pymethods]
impl PyMetric {
    /// `e^w` times the flat metric on the square torus of period 2π.
    #[staticmethod]
    fn conformal_torus(dim: usize, resolution: usize, w: Vec<f64>) -> PyResult<Self> {
        let geom = make_torus_grid(dim, resolution, &vec![2.0 * std::f64::consts::PI; 2 * dim]).map_err(err)?;
        MetricField::conformal(geom, &w).map(Self).map_err(err)
    }

    /// `e^w` times the Poincaré metric `2|dz|²/(1−|z|²)²` on the disk of
    /// geodesic radius `rho`.
    #[staticmethod]
    #[pyo3(signature = (resolution, rho, w=None))]
    fn poincare_disk(resolution: usize, rho: f64, w: Option<Vec<f64>>) -> PyResult<Self> {
        let geom = make_radial_grid(RadialChart::Poincare, resolution, rho).map_err(err)?;
        let w = w.unwrap_or_else(|| vec![0.0; geom.node_count()]);
        if w.len() != geom.node_count() {
            return Err(KahlerError::new_err("w has the wrong length"));
        }
        let radial = *geom.radial().expect("radial grid");
        let values = (0..geom.node_count())
            .map(|j| {
                let factor = 2.0 * (radial.s(j) / 2f64.sqrt()).cosh().powi(4);
                Complex64::new(factor * w[j].exp(), 0.0)
            })
            .collect();
        MetricField::new(geom, values).map(Self).map_err(err)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    /// Node coordinates in the grid chart.
    fn coordinates(&self) -> Vec<Vec<f64>> {
        let g = self.0.geometry();
        (0..g.node_count()).map(|node| g.node_coordinates(node)).collect()
    }

    fn min_eigenvalue(&self) -> f64 {
        self.0.min_eigenvalue()
    }

    /// Ricci form entries, node-major and row-major.
    fn ricci(&self) -> PyResult<Vec<(f64, f64)>> {
        let r = ricci_form(&self.0).map_err(err)?;
        Ok(r.values().iter().map(|v| (v.re, v.im)).collect())
    }

    /// Sup norms of torsion, its derivative, curvature and Ricci.
    fn curvature_norms(&self) -> PyResult<BTreeMap<String, f64>> {
        let p = curvature_package(&self.0).map_err(err)?;
        Ok(BTreeMap::from([
            ("torsion".to_string(), p.norms.torsion),
            ("torsion_derivative".to_string(), p.norms.torsion_derivative),
            ("curvature".to_string(), p.norms.curvature),
            ("ricci".to_string(), p.ricci.sup_norm()),
        ]))
    }

    fn discretization_unit(&self) -> f64 {
        discretization_unit(&self.0)
    }

    fn einstein_residual(&self, lambda: f64) -> PyResult<f64> {
        einstein_residual(&self.0, lambda).map_err(err)
    }

    fn truncate(&self, rho0: f64, kappa: f64) -> PyResult<Self> {
        conformal_truncation(&self.0, rho0, kappa).map(Self).map_err(err)
    }

    /// Runs `∂t g = −4 Ric` to `t_final`; `dt` defaults to the stability bound.
    #[pyo3(signature = (t_final, dt=None))]
    fn flow(&self, py: Python<'_>, t_final: f64, dt: Option<f64>) -> PyResult<Self> {
        let dt = dt.unwrap_or_else(|| flow_stability_bound(&self.0));
        let traj = py.detach(|| kahler_ricci_flow(&self.0, t_final, dt)).map_err(err)?;
        Ok(Self(traj.metrics.last().expect("flow stores the final metric").clone()))
    }
}

#[pymodule]
fn kahlerbench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("KahlerError", m.py().get_type::<KahlerError>())?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyEigenOperator>()?;
    m.add_class::<PyCutoff>()?;
    m.add_class::<PyMetric>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(curvature_study, m)?)?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    Ok(())
}

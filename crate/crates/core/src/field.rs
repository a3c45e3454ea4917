//! Hermitian matrix fields over a grid and their JSON container.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::linalg::{self, CMat};

type C = Complex64;

const HERMITIAN_TOL: f64 = 1e-12;

/// A real (1,1)-form: one Hermitian `n × n` matrix per node, entry `(i, j)`
/// holding the coefficient of `√−1 dz^i ∧ dz̄^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Form11Field {
    geometry: GridGeometry,
    values: Vec<C>,
}

impl Form11Field {
    /// Validates shape, finiteness and Hermitian symmetry, then symmetrizes.
    pub fn new(geometry: GridGeometry, values: Vec<C>) -> Result<Self> {
        let n = geometry.dim();
        let nodes = geometry.node_count();
        if values.len() != nodes * n * n {
            return Err(Error::InvalidInput(format!(
                "expected {} entries, got {}",
                nodes * n * n,
                values.len()
            )));
        }
        let mut field = Self { geometry, values };
        for node in 0..nodes {
            let m = field.at(node);
            if m.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::NonFinite { node });
            }
            let deviation = linalg::hermitian_deviation(&m);
            if deviation > HERMITIAN_TOL {
                return Err(Error::NotHermitian { node, deviation });
            }
            field.set(node, &linalg::symmetrize(&m));
        }
        Ok(field)
    }

    /// Builds a field from per-node matrices, symmetrizing unconditionally.
    pub fn from_fn(geometry: GridGeometry, f: impl Fn(usize) -> CMat) -> Self {
        let n = geometry.dim();
        let nodes = geometry.node_count();
        let mut values = Vec::with_capacity(nodes * n * n);
        for node in 0..nodes {
            let m = linalg::symmetrize(&f(node));
            for i in 0..n {
                for j in 0..n {
                    values.push(m[(i, j)]);
                }
            }
        }
        Self { geometry, values }
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        let n = geometry.dim();
        let len = geometry.node_count() * n * n;
        Self {
            geometry,
            values: vec![C::new(0.0, 0.0); len],
        }
    }

    /// Assembles a field from entry fields `entries[i][j]`.
    pub fn from_components(geometry: GridGeometry, entries: &[Vec<Vec<C>>]) -> Self {
        let n = geometry.dim();
        Self::from_fn(geometry, |node| CMat::from_fn(n, n, |i, j| entries[i][j][node]))
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn node_count(&self) -> usize {
        self.geometry.node_count()
    }

    pub fn values(&self) -> &[C] {
        &self.values
    }

    pub fn entry(&self, node: usize, i: usize, j: usize) -> C {
        let n = self.dim();
        self.values[node * n * n + i * n + j]
    }

    pub fn at(&self, node: usize) -> CMat {
        let n = self.dim();
        CMat::from_row_slice(n, n, &self.values[node * n * n..(node + 1) * n * n])
    }

    fn set(&mut self, node: usize, m: &CMat) {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                self.values[node * n * n + i * n + j] = m[(i, j)];
            }
        }
    }

    /// The field of entry `(i, j)` over all nodes.
    pub fn component(&self, i: usize, j: usize) -> Vec<C> {
        (0..self.node_count()).map(|node| self.entry(node, i, j)).collect()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C, C) -> C) -> Self {
        assert_eq!(self.values.len(), other.values.len(), "field shapes differ");
        Self {
            geometry: self.geometry.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            geometry: self.geometry.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Multiplies node `k` by `w[k]`.
    pub fn scale_nodes(&self, w: &[f64]) -> Self {
        let nn = self.dim() * self.dim();
        Self {
            geometry: self.geometry.clone(),
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| v * w[i / nn])
                .collect(),
        }
    }

    /// Sup over nodes of the operator norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.node_count())
            .map(|node| linalg::hermitian_norm(&self.at(node)))
            .fold(0.0, f64::max)
    }

    /// Sup over nodes of the entrywise maximum modulus.
    pub fn max_abs_entry(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// A Hermitian metric `g_{ij̄}`, positive definite at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Form11Field", into = "Form11Field")]
pub struct MetricField(Form11Field);

impl TryFrom<Form11Field> for MetricField {
    type Error = Error;
    fn try_from(form: Form11Field) -> Result<Self> {
        Self::from_form(form)
    }
}

impl From<MetricField> for Form11Field {
    fn from(m: MetricField) -> Self {
        m.0
    }
}

impl MetricField {
    pub fn new(geometry: GridGeometry, values: Vec<C>) -> Result<Self> {
        Self::from_form(Form11Field::new(geometry, values)?)
    }

    pub fn from_form(form: Form11Field) -> Result<Self> {
        for node in 0..form.node_count() {
            let m = form.at(node);
            if m.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::NonFinite { node });
            }
            let min_eig = linalg::hermitian_eigenvalues(&m)[0];
            if !(min_eig > 0.0) {
                return Err(Error::NotPositiveDefinite { node, min_eig });
            }
        }
        Ok(Self(form))
    }

    /// `g = c · I` at every node.
    pub fn constant(geometry: GridGeometry, m: &CMat) -> Result<Self> {
        Self::from_form(Form11Field::from_fn(geometry, |_| m.clone()))
    }

    pub fn flat(geometry: GridGeometry) -> Self {
        let n = geometry.dim();
        Self(Form11Field::from_fn(geometry, |_| CMat::identity(n, n)))
    }

    /// Conformal metric `e^{w} · I`.
    pub fn conformal(geometry: GridGeometry, w: &[f64]) -> Result<Self> {
        let n = geometry.dim();
        Self::from_form(Form11Field::from_fn(geometry, |node| {
            CMat::identity(n, n) * C::new(w[node].exp(), 0.0)
        }))
    }

    pub fn form(&self) -> &Form11Field {
        &self.0
    }

    pub fn into_form(self) -> Form11Field {
        self.0
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.0.geometry()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn node_count(&self) -> usize {
        self.0.node_count()
    }

    pub fn at(&self, node: usize) -> CMat {
        self.0.at(node)
    }

    /// `log det g` per node.
    pub fn log_det(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|node| linalg::log_det(&self.at(node)).unwrap_or(f64::NAN))
            .collect()
    }

    /// Smallest eigenvalue over all nodes.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.node_count())
            .map(|node| linalg::hermitian_eigenvalues(&self.at(node))[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// `∂²u/∂z^i∂z̄^j` per node, Hermitian-symmetrized.
pub fn complex_hessian(geometry: &GridGeometry, u: &[f64]) -> Result<Form11Field> {
    if !geometry.is_complex() {
        return Err(Error::InvalidGrid("complex Hessian needs a complex grid".into()));
    }
    if u.len() != geometry.node_count() {
        return Err(Error::InvalidInput(format!(
            "scalar field has {} values, grid has {} nodes",
            u.len(),
            geometry.node_count()
        )));
    }
    if let Some(node) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { node });
    }
    let n = geometry.dim();
    let uc: Vec<C> = u.iter().map(|&v| C::new(v, 0.0)).collect();
    let mut entries = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in i..n {
            entries[i][j] = geometry.dz_dzbar(&uc, i, j);
        }
        for j in 0..i {
            entries[i][j] = entries[j][i].iter().map(|v| v.conj()).collect();
        }
    }
    Ok(Form11Field::from_components(geometry.clone(), &entries))
}

/// Self-describing container for fields: shape metadata plus raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldContainer {
    pub kind: String,
    pub shape: Vec<usize>,
    pub geometry: GridGeometry,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl FieldContainer {
    pub fn from_form(kind: &str, form: &Form11Field) -> Self {
        let n = form.dim();
        Self {
            kind: kind.to_string(),
            shape: vec![form.node_count(), n, n],
            geometry: form.geometry().clone(),
            re: form.values().iter().map(|v| v.re).collect(),
            im: form.values().iter().map(|v| v.im).collect(),
        }
    }

    pub fn from_scalar(kind: &str, geometry: &GridGeometry, u: &[f64]) -> Self {
        Self {
            kind: kind.to_string(),
            shape: vec![u.len()],
            geometry: geometry.clone(),
            re: u.to_vec(),
            im: vec![0.0; u.len()],
        }
    }

    pub fn to_form(&self) -> Result<Form11Field> {
        let values = self.re.iter().zip(&self.im).map(|(&a, &b)| C::new(a, b)).collect();
        Form11Field::new(self.geometry.clone(), values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("container serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        if c.shape.iter().product::<usize>() != c.re.len() || c.re.len() != c.im.len() {
            return Err(Error::InvalidInput("container shape mismatch".into()));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_torus_grid;
    use std::f64::consts::PI;

    #[test]
    fn zero_potential_gives_zero_hessian() {
        let g = make_torus_grid(1, 16, &[2.0 * PI; 2]).unwrap();
        let h = complex_hessian(&g, &vec![0.0; 256]).unwrap();
        assert_eq!(h.max_abs_entry(), 0.0);
    }

    #[test]
    fn rejects_non_hermitian_and_indefinite() {
        let g = make_torus_grid(1, 8, &[1.0; 2]).unwrap();
        let mut vals = vec![C::new(1.0, 0.0); 64];
        vals[3] = C::new(1.0, 0.1);
        assert!(matches!(
            Form11Field::new(g.clone(), vals),
            Err(Error::NotHermitian { node: 3, .. })
        ));
        let mut vals = vec![C::new(1.0, 0.0); 64];
        vals[5] = C::new(-1.0, 0.0);
        assert!(matches!(
            MetricField::new(g, vals),
            Err(Error::NotPositiveDefinite { node: 5, .. })
        ));
    }

    #[test]
    fn container_round_trip_is_exact() {
        let g = make_torus_grid(1, 8, &[2.0 * PI; 2]).unwrap();
        let w: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let m = MetricField::conformal(g, &w).unwrap();
        let c = FieldContainer::from_form("metric", m.form());
        let back = FieldContainer::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_form().unwrap(), *m.form());
        let json = serde_json::to_string(&m).unwrap();
        let m2: MetricField = serde_json::from_str(&json).unwrap();
        assert_eq!(m2, m);
    }
}

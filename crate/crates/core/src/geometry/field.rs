use std::sync::Arc;

use crate::error::{Error, Result};
use crate::refmesh::FunctionSpace;

/// Nodal coefficients of a scalar or vector Lagrange field, stored node-major.
#[derive(Debug, Clone)]
pub struct SpaceField {
    space: Arc<FunctionSpace>,
    components: usize,
    values: Vec<f64>,
}

impl PartialEq for SpaceField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
            && self.components == other.components
            && self.values == other.values
    }
}

impl SpaceField {
    pub fn zeros(space: Arc<FunctionSpace>, components: usize) -> Self {
        let n = space.num_nodes() * components;
        Self {
            space,
            components,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(space: Arc<FunctionSpace>, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != space.num_nodes() * components {
            return Err(Error::InvalidInput(format!(
                "field with {} values does not fit {} nodes x {components} components",
                values.len(),
                space.num_nodes()
            )));
        }
        Ok(Self {
            space,
            components,
            values,
        })
    }

    /// Scalar or vector field obtained by evaluating `f` at every node's
    /// reference position.
    pub fn from_fn(space: Arc<FunctionSpace>, components: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(space.num_nodes() * components);
        for i in 0..space.num_nodes() {
            let v = f(space.node_position(i));
            assert_eq!(v.len(), components);
            values.extend(v);
        }
        Self {
            space,
            components,
            values,
        }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn num_nodes(&self) -> usize {
        self.space.num_nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.components..(i + 1) * self.components]
    }

    /// Local coefficients of `cell`, node-major, written into `out`.
    pub fn gather(&self, cell: usize, out: &mut [f64]) {
        let c = self.components;
        for (l, &g) in self.space.cell_dofs(cell).iter().enumerate() {
            out[l * c..(l + 1) * c].copy_from_slice(&self.values[g * c..(g + 1) * c]);
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            space: self.space.clone(),
            components: self.components,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &SpaceField) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        Self {
            space: self.space.clone(),
            components: self.components,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        }
    }
}

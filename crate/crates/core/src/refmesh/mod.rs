//! Reference manifolds, Lagrange elements, quadrature and function spaces.

mod generators;
pub mod io;
pub mod lagrange;
pub mod quadrature;
mod space;

use std::collections::HashMap;

pub use generators::{make_circle_mesh, make_cuboid_mesh, make_icosphere_mesh};
pub use lagrange::{BasisTable, LagrangeElement};
pub use quadrature::{simplex_quadrature, time_quadrature, QuadratureRule, TimeRuleKind};
pub use space::{map_initial_geometry, FunctionSpace, Shape};

use crate::error::{Error, Result};

/// Closed, consistently oriented simplicial mesh of a curve (`dim = 1`) in the
/// plane or a surface (`dim = 2`) in space.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMesh {
    dim: usize,
    // stride dim + 1
    vertices: Vec<f64>,
    // stride dim + 1
    cells: Vec<usize>,
    // unique edges (a < b), d = 2 only
    edges: Vec<[usize; 2]>,
    // per cell, edge ids of local edges (0,1), (1,2), (2,0)
    cell_edges: Vec<[usize; 3]>,
}

impl ReferenceMesh {
    /// Builds and validates a mesh from flat vertex and cell arrays.
    pub fn new(dim: usize, vertices: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMesh(format!("dimension {dim}")));
        }
        let n = dim + 1;
        if vertices.len() % n != 0 || cells.len() % n != 0 || cells.is_empty() {
            return Err(Error::InvalidMesh("ragged vertex or cell array".into()));
        }
        let nv = vertices.len() / n;
        if let Some(&bad) = cells.iter().find(|&&v| v >= nv) {
            return Err(Error::InvalidMesh(format!("cell references vertex {bad}")));
        }
        if vertices.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mut mesh = Self {
            dim,
            vertices,
            cells,
            edges: Vec::new(),
            cell_edges: Vec::new(),
        };
        if dim == 2 {
            mesh.build_edges();
        }
        mesh.validate()?;
        Ok(mesh)
    }

    fn build_edges(&mut self) {
        let mut ids: HashMap<[usize; 2], usize> = HashMap::new();
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            let mut ce = [0; 3];
            for (l, (a, b)) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])].into_iter().enumerate() {
                let key = [a.min(b), a.max(b)];
                let next = self.edges.len();
                let id = *ids.entry(key).or_insert(next);
                if id == next {
                    self.edges.push(key);
                }
                ce[l] = id;
            }
            self.cell_edges.push(ce);
        }
    }

    /// Closed-manifold, orientation and Euler checks.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim + 1;
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            for i in 0..n {
                for j in i + 1..n {
                    if v[i] == v[j] {
                        return Err(Error::InvalidMesh(format!("cell {c} repeats a vertex")));
                    }
                }
            }
        }
        // every facet appears once in each direction
        let mut directed: HashMap<Vec<usize>, usize> = HashMap::new();
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            if self.dim == 1 {
                *directed.entry(vec![v[0], 0]).or_default() += 1;
                *directed.entry(vec![v[1], 1]).or_default() += 1;
            } else {
                for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                    *directed.entry(vec![a, b]).or_default() += 1;
                }
            }
        }
        for (key, &count) in &directed {
            let opposite = if self.dim == 1 {
                vec![key[0], 1 - key[1]]
            } else {
                vec![key[1], key[0]]
            };
            if count != 1 || directed.get(&opposite) != Some(&1) {
                return Err(Error::InvalidMesh(format!(
                    "facet {key:?} is not shared by exactly two consistently oriented cells"
                )));
            }
        }
        let used: std::collections::HashSet<usize> = self.cells.iter().copied().collect();
        if used.len() != self.num_vertices() {
            return Err(Error::InvalidMesh("unreferenced vertex".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Ambient dimension `dim + 1`.
    pub fn ambient_dim(&self) -> usize {
        self.dim + 1
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / (self.dim + 1)
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn num_edges(&self) -> usize {
        match self.dim {
            1 => self.num_cells(),
            _ => self.edges.len(),
        }
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        let n = self.dim + 1;
        &self.vertices[i * n..(i + 1) * n]
    }

    pub fn vertices(&self) -> &[f64] {
        &self.vertices
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.cells[c * n..(c + 1) * n]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Unique edges with `a < b` (surfaces only).
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Edge ids of local edges `(0,1)`, `(1,2)`, `(2,0)` of a triangle.
    pub fn cell_edges(&self, c: usize) -> [usize; 3] {
        self.cell_edges[c]
    }

    /// `V - E + F` for surfaces, `V - E` for curves.
    pub fn euler_characteristic(&self) -> i64 {
        let v = self.num_vertices() as i64;
        match self.dim {
            1 => v - self.num_cells() as i64,
            _ => v - self.edges.len() as i64 + self.num_cells() as i64,
        }
    }

    /// Longest straight edge of the reference mesh.
    pub fn max_edge_length(&self) -> f64 {
        let dist = |a: usize, b: usize| -> f64 {
            self.vertex(a)
                .iter()
                .zip(self.vertex(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        match self.dim {
            1 => (0..self.num_cells())
                .map(|c| dist(self.cell(c)[0], self.cell(c)[1]))
                .fold(0.0, f64::max),
            _ => self.edges.iter().map(|e| dist(e[0], e[1])).fold(0.0, f64::max),
        }
    }

    /// Copy with every cell orientation reversed.
    pub fn flipped(&self) -> Self {
        let n = self.dim + 1;
        let mut cells = self.cells.clone();
        for c in cells.chunks_mut(n) {
            c.swap(0, 1);
        }
        Self::new(self.dim, self.vertices.clone(), cells).expect("flipping preserves validity")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_open_surface() {
        let v = vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert!(matches!(
            ReferenceMesh::new(2, v, vec![0, 1, 2]),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn rejects_inconsistent_orientation() {
        // tetrahedron with one face flipped
        let v = vec![
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ];
        let good = vec![0, 2, 1, 0, 1, 3, 1, 2, 3, 0, 3, 2];
        assert!(ReferenceMesh::new(2, v.clone(), good).is_ok());
        let bad = vec![0, 1, 2, 0, 1, 3, 1, 2, 3, 0, 3, 2];
        assert!(ReferenceMesh::new(2, v, bad).is_err());
    }

    #[test]
    fn tetrahedron_euler() {
        let v = vec![
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ];
        let m = ReferenceMesh::new(2, v, vec![0, 2, 1, 0, 1, 3, 1, 2, 3, 0, 3, 2]).unwrap();
        assert_eq!(m.num_edges(), 6);
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.flipped().euler_characteristic(), 2);
    }
}

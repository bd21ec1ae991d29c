use std::sync::Arc;

use super::{LagrangeElement, ReferenceMesh};
use crate::error::{Error, Result};
use crate::geometry::SpaceField;

/// Continuous degree-`k` Lagrange space on a reference mesh.
///
/// Global numbering: mesh vertices, then edge-interior nodes (edge `(a, b)`
/// with `a < b` walked from `a` to `b`), then cell-interior nodes.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: Arc<ReferenceMesh>,
    element: LagrangeElement,
    num_nodes: usize,
    cell_dofs: Vec<usize>,
    // reference position of every node on the piecewise-flat reference mesh
    positions: Vec<f64>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<ReferenceMesh>, degree: usize) -> Result<Self> {
        if !(1..=super::lagrange::MAX_ELEMENT_DEGREE).contains(&degree) {
            return Err(Error::Capability(format!(
                "Lagrange degree {degree} (supported: 1..={})",
                super::lagrange::MAX_ELEMENT_DEGREE
            )));
        }
        let dim = mesh.dim();
        let element = LagrangeElement::new(dim, degree);
        let nloc = element.num_nodes();
        let k = degree;
        let nv = mesh.num_vertices();
        let nc = mesh.num_cells();
        let mut cell_dofs = Vec::with_capacity(nc * nloc);
        let num_nodes;
        if dim == 1 {
            num_nodes = nv + nc * (k - 1);
            for c in 0..nc {
                cell_dofs.extend_from_slice(mesh.cell(c));
                cell_dofs.extend((0..k - 1).map(|j| nv + c * (k - 1) + j));
            }
        } else {
            let ne = mesh.num_edges();
            let nint = element.num_interior_nodes();
            let per_edge = k - 1;
            num_nodes = nv + ne * per_edge + nc * nint;
            for c in 0..nc {
                let v = mesh.cell(c);
                cell_dofs.extend_from_slice(v);
                let ce = mesh.cell_edges(c);
                for l in 0..3 {
                    let e = ce[l];
                    let forward = mesh.edges()[e][0] == v[l];
                    for j in 0..per_edge {
                        let jj = if forward { j } else { per_edge - 1 - j };
                        cell_dofs.push(nv + e * per_edge + jj);
                    }
                }
                cell_dofs.extend((0..nint).map(|j| nv + ne * per_edge + c * nint + j));
            }
        }

        let amb = dim + 1;
        let mut positions = vec![0.0; num_nodes * amb];
        for c in 0..nc {
            let verts = mesh.cell(c);
            for i in 0..nloc {
                let g = cell_dofs[c * nloc + i];
                let bary = element.node_barycentric(i);
                for a in 0..amb {
                    positions[g * amb + a] = verts
                        .iter()
                        .zip(&bary)
                        .map(|(&v, b)| b * mesh.vertex(v)[a])
                        .sum();
                }
            }
        }
        Ok(Self {
            mesh,
            element,
            num_nodes,
            cell_dofs,
            positions,
        })
    }

    pub fn mesh(&self) -> &Arc<ReferenceMesh> {
        &self.mesh
    }

    pub fn element(&self) -> &LagrangeElement {
        &self.element
    }

    pub fn degree(&self) -> usize {
        self.element.degree()
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.mesh.dim() + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_cells(&self) -> usize {
        self.mesh.num_cells()
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.element.num_nodes()
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        let n = self.element.num_nodes();
        &self.cell_dofs[c * n..(c + 1) * n]
    }

    /// Position of node `i` on the flat reference mesh.
    pub fn node_position(&self, i: usize) -> &[f64] {
        let a = self.ambient_dim();
        &self.positions[i * a..(i + 1) * a]
    }
}

/// Analytic maps applied to the reference nodes to build an initial surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Node positions on the flat reference mesh.
    Identity,
    /// Radial projection to the unit sphere (or circle).
    Sphere,
    PerturbedEllipsoid,
    Dumbbell,
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Identity => "identity",
            Shape::Sphere => "sphere",
            Shape::PerturbedEllipsoid => "perturbed_ellipsoid",
            Shape::Dumbbell => "dumbbell",
        }
    }

    /// Applies the map to a point of the reference manifold.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let unit = || {
            let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            p.iter().map(|x| x / r).collect::<Vec<f64>>()
        };
        match self {
            Shape::Identity => p.to_vec(),
            Shape::Sphere => unit(),
            Shape::PerturbedEllipsoid => {
                let u = unit();
                let (x, y, z) = (u[0], u[1], u[2]);
                vec![
                    2.0 * x + 0.5 * y * z,
                    1.5 * y + 0.4 * x * z,
                    z + 0.35 * x * y,
                ]
            }
            Shape::Dumbbell => {
                let u = unit();
                let (x, y, z) = (u[0], u[1], u[2]);
                let w = 0.6 * x * x + 0.4;
                vec![x, w * y, w * z]
            }
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Shape::Identity),
            "sphere" => Ok(Shape::Sphere),
            "perturbed_ellipsoid" => Ok(Shape::PerturbedEllipsoid),
            "dumbbell" => Ok(Shape::Dumbbell),
            other => Err(Error::config("shape", format!("unknown shape `{other}`"))),
        }
    }
}

/// Nodal interpolant of `shape` composed with the reference immersion.
pub fn map_initial_geometry(space: &Arc<FunctionSpace>, shape: Shape) -> Result<SpaceField> {
    let amb = space.ambient_dim();
    if amb != 3 && matches!(shape, Shape::PerturbedEllipsoid | Shape::Dumbbell) {
        return Err(Error::Precondition(format!(
            "shape `{}` needs a spherical surface mesh",
            shape.name()
        )));
    }
    let mut values = Vec::with_capacity(space.num_nodes() * amb);
    for i in 0..space.num_nodes() {
        values.extend(shape.apply(space.node_position(i)));
    }
    SpaceField::from_values(space.clone(), amb, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refmesh::{make_circle_mesh, make_icosphere_mesh};

    #[test]
    fn node_counts_match_euler() {
        let mesh = Arc::new(make_icosphere_mesh(1).unwrap());
        for k in 1..=4 {
            let s = FunctionSpace::new(mesh.clone(), k).unwrap();
            let (v, e, f) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_cells());
            let want = v + e * (k - 1) + f * (k - 1) * (k.saturating_sub(2)) / 2;
            assert_eq!(s.num_nodes(), want);
        }
        let c = Arc::new(make_circle_mesh(10).unwrap());
        assert_eq!(FunctionSpace::new(c, 3).unwrap().num_nodes(), 30);
    }

    #[test]
    fn shared_edge_nodes_coincide() {
        // every global node gets a single position, so any cell that sees it
        // must compute the same barycentric location
        let mesh = Arc::new(make_icosphere_mesh(1).unwrap());
        let s = FunctionSpace::new(mesh.clone(), 3).unwrap();
        let el = s.element().clone();
        for c in 0..s.num_cells() {
            let verts = mesh.cell(c);
            for (i, &g) in s.cell_dofs(c).iter().enumerate() {
                let bary = el.node_barycentric(i);
                for a in 0..3 {
                    let p: f64 = verts.iter().zip(&bary).map(|(&v, b)| b * mesh.vertex(v)[a]).sum();
                    assert!((p - s.node_position(g)[a]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn shape_examples() {
        let e = Shape::PerturbedEllipsoid.apply(&[1.0, 0.0, 0.0]);
        assert_eq!(e, vec![2.0, 0.0, 0.0]);
        let d = Shape::Dumbbell.apply(&[0.0, 1.0, 0.0]);
        assert!((d[0]).abs() < 1e-15 && (d[1] - 0.4).abs() < 1e-15 && d[2].abs() < 1e-15);
        let pole = Shape::Dumbbell.apply(&[-1.0, 0.0, 0.0]);
        assert_eq!(pole, vec![-1.0, 0.0, 0.0]);
        assert!(matches!("torus".parse::<Shape>(), Err(Error::Config { .. })));
    }

    #[test]
    fn identity_keeps_vertices() {
        let mesh = Arc::new(make_icosphere_mesh(2).unwrap());
        let s = Arc::new(FunctionSpace::new(mesh.clone(), 1).unwrap());
        let x = map_initial_geometry(&s, Shape::Identity).unwrap();
        assert_eq!(x.values(), mesh.vertices());
    }
}

//! OBJ (triangles) and closed-polygon text (curves) import/export.
//!
//! The polygon format is one `x y` pair per line in traversal order; the last
//! point connects back to the first. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::ReferenceMesh;
use crate::error::{Error, Result};
use crate::geometry::SpaceField;

pub fn parse_obj(text: &str) -> Result<ReferenceMesh> {
    let mut vertices = Vec::new();
    let mut cells = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                for _ in 0..3 {
                    let tok = it
                        .next()
                        .ok_or_else(|| Error::Parse(format!("line {}: short vertex", lineno + 1)))?;
                    vertices.push(parse_f64(tok, lineno)?);
                }
            }
            Some("f") => {
                let idx: Vec<&str> = it.collect();
                if idx.len() != 3 {
                    return Err(Error::Parse(format!(
                        "line {}: only triangular faces are supported",
                        lineno + 1
                    )));
                }
                for tok in idx {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: usize = head
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {}: bad index `{tok}`", lineno + 1)))?;
                    if i == 0 {
                        return Err(Error::Parse(format!("line {}: OBJ indices start at 1", lineno + 1)));
                    }
                    cells.push(i - 1);
                }
            }
            _ => {}
        }
    }
    ReferenceMesh::new(2, vertices, cells)
}

pub fn parse_polygon(text: &str) -> Result<ReferenceMesh> {
    let mut vertices = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse(format!("line {}: expected `x y`", lineno + 1)));
        }
        vertices.push(parse_f64(toks[0], lineno)?);
        vertices.push(parse_f64(toks[1], lineno)?);
    }
    let n = vertices.len() / 2;
    if n < 3 {
        return Err(Error::InvalidMesh(format!("polygon with {n} points")));
    }
    let cells = (0..n).flat_map(|j| [j, (j + 1) % n]).collect();
    ReferenceMesh::new(1, vertices, cells)
}

fn parse_f64(tok: &str, lineno: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("line {}: bad number `{tok}`", lineno + 1)))
}

/// Reads an OBJ surface or a polygon curve, chosen by file extension
/// (`.obj` or anything else for polygons).
pub fn read_mesh(path: &Path) -> Result<ReferenceMesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => parse_obj(&text),
        _ => parse_polygon(&text),
    }
}

pub fn mesh_to_text(mesh: &ReferenceMesh) -> String {
    let mut out = String::new();
    if mesh.dim() == 2 {
        for i in 0..mesh.num_vertices() {
            let v = mesh.vertex(i);
            let _ = writeln!(out, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
        }
        for c in 0..mesh.num_cells() {
            let v = mesh.cell(c);
            let _ = writeln!(out, "f {} {} {}", v[0] + 1, v[1] + 1, v[2] + 1);
        }
    } else {
        // walk the curve from cell 0
        let mut next = vec![usize::MAX; mesh.num_vertices()];
        for c in 0..mesh.num_cells() {
            next[mesh.cell(c)[0]] = mesh.cell(c)[1];
        }
        let start = mesh.cell(0)[0];
        let mut v = start;
        loop {
            let p = mesh.vertex(v);
            let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
            v = next[v];
            if v == start {
                break;
            }
        }
    }
    out
}

/// Piecewise-linear rendering of a geometry field: OBJ with every triangle
/// split into `k^2` subtriangles through its Lagrange nodes, or the polygon
/// format through all nodes of a curve.
pub fn field_to_text(x: &SpaceField) -> String {
    let space = x.space();
    let mut out = String::new();
    let k = space.degree();
    if space.dim() == 2 {
        for i in 0..space.num_nodes() {
            let p = x.node(i);
            let _ = writeln!(out, "v {:?} {:?} {:?}", p[0], p[1], p[2]);
        }
        let el = space.element();
        // lattice (i, j) -> local node
        let mut lattice = vec![usize::MAX; (k + 1) * (k + 1)];
        for l in 0..el.num_nodes() {
            let a = el.alpha(l);
            lattice[a[1] * (k + 1) + a[2]] = l;
        }
        let at = |i: usize, j: usize| lattice[i * (k + 1) + j];
        for c in 0..space.num_cells() {
            let dofs = space.cell_dofs(c);
            let mut tri = |a: usize, b: usize, d: usize| {
                let _ = writeln!(out, "f {} {} {}", dofs[a] + 1, dofs[b] + 1, dofs[d] + 1);
            };
            for i in 0..k {
                for j in 0..k - i {
                    tri(at(i, j), at(i + 1, j), at(i, j + 1));
                    if i + j + 1 < k {
                        tri(at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
                    }
                }
            }
        }
    } else {
        let mesh = space.mesh();
        let mut cell_from = vec![usize::MAX; mesh.num_vertices()];
        for c in 0..mesh.num_cells() {
            cell_from[mesh.cell(c)[0]] = c;
        }
        let start = mesh.cell(0)[0];
        let mut v = start;
        loop {
            let c = cell_from[v];
            let dofs = space.cell_dofs(c);
            // vertex 0, then interior nodes in order towards vertex 1
            for &g in std::iter::once(&dofs[0]).chain(&dofs[2..]) {
                let p = x.node(g);
                let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
            }
            v = mesh.cell(c)[1];
            if v == start {
                break;
            }
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refmesh::{make_circle_mesh, make_icosphere_mesh, map_initial_geometry, FunctionSpace, Shape};
    use std::sync::Arc;

    #[test]
    fn obj_round_trip() {
        let m = make_icosphere_mesh(1).unwrap();
        let back = parse_obj(&mesh_to_text(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn polygon_round_trip() {
        let m = make_circle_mesh(7).unwrap();
        let back = parse_polygon(&mesh_to_text(&m)).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.cells(), m.cells());
    }

    #[test]
    fn subtriangulated_snapshot_is_closed() {
        let mesh = Arc::new(make_icosphere_mesh(0).unwrap());
        for k in 1..=3 {
            let s = Arc::new(FunctionSpace::new(mesh.clone(), k).unwrap());
            let x = map_initial_geometry(&s, Shape::Sphere).unwrap();
            let m = parse_obj(&field_to_text(&x)).unwrap();
            assert_eq!(m.num_cells(), 20 * k * k);
            assert_eq!(m.euler_characteristic(), 2);
        }
    }

    #[test]
    fn high_order_polygon_snapshot() {
        let mesh = Arc::new(make_circle_mesh(5).unwrap());
        let s = Arc::new(FunctionSpace::new(mesh, 3).unwrap());
        let x = map_initial_geometry(&s, Shape::Sphere).unwrap();
        let m = parse_polygon(&field_to_text(&x)).unwrap();
        assert_eq!(m.num_vertices(), 15);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_obj("v 0 0\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_obj("f 1 2 3 4\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_polygon("1 2\n3\n"), Err(Error::Parse(_))));
    }
}

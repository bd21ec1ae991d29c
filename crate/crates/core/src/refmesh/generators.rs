use std::collections::HashMap;
use std::f64::consts::PI;

use super::ReferenceMesh;
use crate::error::{Error, Result};

/// Regular `n`-gon inscribed in the unit circle, counterclockwise.
pub fn make_circle_mesh(n_segments: usize) -> Result<ReferenceMesh> {
    if n_segments < 3 {
        return Err(Error::InvalidMesh(format!(
            "a closed polygon needs at least 3 segments, got {n_segments}"
        )));
    }
    let n = n_segments;
    let mut vertices = Vec::with_capacity(2 * n);
    for j in 0..n {
        let a = 2.0 * PI * j as f64 / n as f64;
        vertices.push(a.cos());
        vertices.push(a.sin());
    }
    // exact zeros at the axis points keep small meshes tidy
    for v in vertices.iter_mut() {
        if v.abs() < 1e-15 {
            *v = 0.0;
        }
    }
    let cells = (0..n).flat_map(|j| [j, (j + 1) % n]).collect();
    ReferenceMesh::new(1, vertices, cells)
}

/// Icosahedron refined `refinements` times by 1-to-4 splitting, with new
/// vertices projected to the unit sphere.
pub fn make_icosphere_mesh(refinements: usize) -> Result<ReferenceMesh> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    for v in verts.iter_mut() {
        *v = normalize(*v);
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..refinements {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(4 * faces.len());
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }

    let vertices = verts.iter().flatten().copied().collect();
    let cells = faces.iter().flatten().copied().collect();
    ReferenceMesh::new(2, vertices, cells)
}

/// Triangulated surface of the box `[-lx/2, lx/2] x [-ly/2, ly/2] x [-lz/2, lz/2]`
/// with `round(l * density)` segments along each side of length `l`.
pub fn make_cuboid_mesh(lx: f64, ly: f64, lz: f64, density: usize) -> Result<ReferenceMesh> {
    for (name, l) in [("lx", lx), ("ly", ly), ("lz", lz)] {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidInput(format!("cuboid length {name} = {l} must be positive")));
        }
    }
    if density == 0 {
        return Err(Error::InvalidInput("cuboid density must be at least 1".into()));
    }
    let len = [lx, ly, lz];
    let segs = len.map(|l| ((l * density as f64).round() as usize).max(1));

    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut lookup: HashMap<[i64; 3], usize> = HashMap::new();
    let mut weld = |p: [f64; 3], vertices: &mut Vec<[f64; 3]>| -> usize {
        let key = p.map(|x| (x * 1e12).round() as i64);
        *lookup.entry(key).or_insert_with(|| {
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut cells: Vec<usize> = Vec::new();

    // (normal axis, sign, u axis, v axis) with u x v pointing outward
    let faces = [
        (0, 1.0, 1, 2),
        (0, -1.0, 2, 1),
        (1, 1.0, 2, 0),
        (1, -1.0, 0, 2),
        (2, 1.0, 0, 1),
        (2, -1.0, 1, 0),
    ];
    for (axis, sign, u, v) in faces {
        let (nu, nv) = (segs[u], segs[v]);
        let mut ids = vec![0usize; (nu + 1) * (nv + 1)];
        for j in 0..=nv {
            for i in 0..=nu {
                let mut p = [0.0; 3];
                p[axis] = sign * 0.5 * len[axis];
                p[u] = len[u] * (i as f64 / nu as f64 - 0.5);
                p[v] = len[v] * (j as f64 / nv as f64 - 0.5);
                ids[j * (nu + 1) + i] = weld(p, &mut vertices);
            }
        }
        for j in 0..nv {
            for i in 0..nu {
                let a = ids[j * (nu + 1) + i];
                let b = ids[j * (nu + 1) + i + 1];
                let c = ids[(j + 1) * (nu + 1) + i + 1];
                let d = ids[(j + 1) * (nu + 1) + i];
                if (i + j) % 2 == 0 {
                    cells.extend([a, b, c, a, c, d]);
                } else {
                    cells.extend([a, b, d, b, c, d]);
                }
            }
        }
    }
    let vertices = vertices.iter().flatten().copied().collect();
    ReferenceMesh::new(2, vertices, cells)
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outward(mesh: &ReferenceMesh) -> bool {
        (0..mesh.num_cells()).all(|c| {
            let v = mesh.cell(c);
            let p: Vec<&[f64]> = v.iter().map(|&i| mesh.vertex(i)).collect();
            let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
            let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]];
            let n = [
                e1[1] * e2[2] - e1[2] * e2[1],
                e1[2] * e2[0] - e1[0] * e2[2],
                e1[0] * e2[1] - e1[1] * e2[0],
            ];
            let centroid: Vec<f64> = (0..3).map(|k| p[0][k] + p[1][k] + p[2][k]).collect();
            n[0] * centroid[0] + n[1] * centroid[1] + n[2] * centroid[2] > 0.0
        })
    }

    #[test]
    fn square_circle() {
        let m = make_circle_mesh(4).unwrap();
        assert_eq!(m.vertices(), &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        assert_eq!(m.num_cells(), 4);
    }

    #[test]
    fn triangle_euler() {
        let m = make_circle_mesh(3).unwrap();
        assert_eq!(m.num_vertices(), 3);
        assert_eq!(m.num_edges(), 3);
        assert_eq!(m.euler_characteristic(), 0);
    }

    #[test]
    fn polygon_perimeter() {
        let m = make_circle_mesh(256).unwrap();
        let mut perim = 0.0;
        for c in 0..m.num_cells() {
            let (a, b) = (m.vertex(m.cell(c)[0]), m.vertex(m.cell(c)[1]));
            perim += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        }
        let want = 512.0 * (PI / 256.0).sin();
        assert!((perim - want).abs() < 1e-12);
        assert!((perim - 6.28303).abs() < 1e-5);
    }

    #[test]
    fn degenerate_circle_rejected() {
        assert!(matches!(make_circle_mesh(2), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn icosphere_counts() {
        for r in 0..=3 {
            let m = make_icosphere_mesh(r).unwrap();
            assert_eq!(m.num_vertices(), 10 * 4usize.pow(r as u32) + 2);
            assert_eq!(m.num_cells(), 20 * 4usize.pow(r as u32));
            assert_eq!(m.euler_characteristic(), 2);
            assert!(outward(&m));
        }
        let m = make_icosphere_mesh(3).unwrap();
        assert_eq!((m.num_vertices(), m.num_cells()), (642, 1280));
    }

    #[test]
    fn cuboid_counts() {
        let cube = make_cuboid_mesh(1.0, 1.0, 1.0, 1).unwrap();
        assert_eq!(cube.euler_characteristic(), 2);
        assert!(outward(&cube));
        let m = make_cuboid_mesh(8.0, 1.0, 1.0, 3).unwrap();
        assert_eq!(m.num_vertices(), 308);
        assert_eq!(m.num_edges(), 918);
        assert_eq!(m.num_cells(), 612);
        assert!(outward(&m));
    }

    #[test]
    fn cuboid_rejects_bad_lengths() {
        assert!(matches!(
            make_cuboid_mesh(0.0, 1.0, 1.0, 2),
            Err(Error::InvalidInput(_))
        ));
        assert!(make_cuboid_mesh(1.0, -1.0, 1.0, 2).is_err());
    }
}

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{self, SpaceField};
use crate::refmesh::{simplex_quadrature, LagrangeElement};

type Key = [i64; 3];

/// Closest-point queries against one discrete surface (or curve).
///
/// Cells are bucketed by bounding box on a uniform grid sized to the mean
/// cell extent. A query first finds the nearest of a set of sample points on
/// the surface, then refines every cell whose box meets that ball.
#[derive(Debug, Clone)]
pub struct DistanceIndex {
    element: LagrangeElement,
    amb: usize,
    nloc: usize,
    coeffs: Vec<f64>,
    boxes: Vec<[f64; 6]>,
    samples: Vec<[f64; 3]>,
    h: f64,
    sample_grid: HashMap<Key, Vec<usize>>,
    cell_grid: HashMap<Key, Vec<usize>>,
    key_lo: Key,
    key_hi: Key,
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX: usize = 100;
const DENSE_PER_EDGE: usize = 48;

impl DistanceIndex {
    pub fn new(x: &SpaceField) -> Result<Self> {
        let space = x.space();
        let d = space.dim();
        let amb = d + 1;
        let element = space.element().clone();
        let nloc = space.nodes_per_cell();
        let ncells = space.num_cells();
        let mut coeffs = vec![0.0; ncells * nloc * amb];
        for c in 0..ncells {
            x.gather(c, &mut coeffs[c * nloc * amb..(c + 1) * nloc * amb]);
        }

        // sample lattice, also used to bound each cell
        let m = (2 * space.degree()).max(2);
        let lattice = lattice_points(d, m);
        let table = element.tabulate_points(&lattice);
        let npts = lattice.len() / d;
        let mut samples = Vec::with_capacity(ncells * npts);
        let mut boxes = Vec::with_capacity(ncells);
        let mut extent = 0.0;
        for c in 0..ncells {
            let cc = &coeffs[c * nloc * amb..(c + 1) * nloc * amb];
            let mut bb = [f64::INFINITY, f64::INFINITY, f64::INFINITY, -f64::INFINITY, -f64::INFINITY, -f64::INFINITY];
            for q in 0..npts {
                let p = combine(cc, table.values(q), amb);
                for a in 0..3 {
                    bb[a] = bb[a].min(p[a]);
                    bb[a + 3] = bb[a + 3].max(p[a]);
                }
                samples.push(p);
            }
            let diam = (0..3).map(|a| bb[a + 3] - bb[a]).fold(0.0, f64::max);
            // curved cells may bulge between lattice points
            let pad = if space.degree() > 1 { 0.25 * diam } else { 1e-12 * (1.0 + diam) };
            for a in 0..3 {
                bb[a] -= pad;
                bb[a + 3] += pad;
            }
            extent += diam;
            boxes.push(bb);
        }
        let h = (extent / ncells as f64).max(f64::MIN_POSITIVE);
        let key = |p: &[f64; 3]| -> Key { [0, 1, 2].map(|a| (p[a] / h).floor() as i64) };

        let mut sample_grid: HashMap<Key, Vec<usize>> = HashMap::new();
        let mut key_lo = [i64::MAX; 3];
        let mut key_hi = [i64::MIN; 3];
        for (i, p) in samples.iter().enumerate() {
            let k = key(p);
            for a in 0..3 {
                key_lo[a] = key_lo[a].min(k[a]);
                key_hi[a] = key_hi[a].max(k[a]);
            }
            sample_grid.entry(k).or_default().push(i);
        }
        let mut cell_grid: HashMap<Key, Vec<usize>> = HashMap::new();
        for (c, bb) in boxes.iter().enumerate() {
            let lo = key(&[bb[0], bb[1], bb[2]]);
            let hi = key(&[bb[3], bb[4], bb[5]]);
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        cell_grid.entry([i, j, k]).or_default().push(c);
                    }
                }
            }
        }
        Ok(Self {
            element,
            amb,
            nloc,
            coeffs,
            boxes,
            samples,
            h,
            sample_grid,
            cell_grid,
            key_lo,
            key_hi,
        })
    }

    fn key(&self, p: &[f64; 3]) -> Key {
        [0, 1, 2].map(|a| (p[a] / self.h).floor() as i64)
    }

    /// Distance to the nearest sample point.
    fn nearest_sample(&self, p: &[f64; 3]) -> f64 {
        let c = self.key(p);
        let reach = (0..3)
            .map(|a| (c[a] - self.key_lo[a]).abs().max((self.key_hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut best = f64::INFINITY;
        for r in 0..=reach {
            for i in c[0] - r..=c[0] + r {
                for j in c[1] - r..=c[1] + r {
                    for k in c[2] - r..=c[2] + r {
                        let on_shell = (i - c[0]).abs() == r || (j - c[1]).abs() == r || (k - c[2]).abs() == r;
                        if !on_shell {
                            continue;
                        }
                        if let Some(ids) = self.sample_grid.get(&[i, j, k]) {
                            for &s in ids {
                                best = best.min(dist(p, &self.samples[s]));
                            }
                        }
                    }
                }
            }
            if best <= r as f64 * self.h {
                break;
            }
        }
        best
    }

    /// Distance from `p` to the surface.
    pub fn distance(&self, p: &[f64]) -> f64 {
        let mut q = [0.0; 3];
        q[..p.len()].copy_from_slice(p);
        let ub = self.nearest_sample(&q);
        let lo = self.key(&[q[0] - ub, q[1] - ub, q[2] - ub]);
        let hi = self.key(&[q[0] + ub, q[1] + ub, q[2] + ub]);
        let mut cells = Vec::new();
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    if let Some(ids) = self.cell_grid.get(&[i, j, k]) {
                        cells.extend_from_slice(ids);
                    }
                }
            }
        }
        cells.sort_unstable();
        cells.dedup();
        let mut best = ub;
        for c in cells {
            if box_distance(&self.boxes[c], &q) <= best {
                best = best.min(self.cell_distance(c, &q));
            }
        }
        best
    }

    fn cell_coeffs(&self, c: usize) -> &[f64] {
        let n = self.nloc * self.amb;
        &self.coeffs[c * n..(c + 1) * n]
    }

    /// Closest point on one cell by projected Gauss-Newton in reference
    /// coordinates; dense sampling when that does not settle.
    ///
    /// Clamping is only a valid constrained step in one parameter, so an
    /// iterate that ends on the boundary of a triangle is re-solved along
    /// each of its edges.
    fn cell_distance(&self, c: usize, p: &[f64; 3]) -> f64 {
        let d = self.amb - 1;
        let cc = self.cell_coeffs(c);
        if d == 1 {
            return self
                .restricted_newton(cc, p, [0.0, 0.0], &[[1.0, 0.0]])
                .unwrap_or_else(|| self.dense_cell_distance(c, p));
        }
        let mut vals = vec![0.0; self.nloc];
        let mut grads = vec![0.0; self.nloc * d];
        let mut xi = vec![1.0 / 3.0, 1.0 / 3.0];
        for _ in 0..NEWTON_MAX {
            self.element.eval(&xi, &mut vals, &mut grads);
            let x = combine(cc, &vals, self.amb);
            let f = geometry::tangents(d, cc, &grads);
            let r: Vec<f64> = (0..3).map(|a| x[a] - p[a]).collect();
            let mut g = [0.0; 2];
            let mut h = [[0.0; 2]; 2];
            for i in 0..d {
                g[i] = (0..3).map(|a| f[a][i] * r[a]).sum();
                for j in 0..d {
                    h[i][j] = (0..3).map(|a| f[a][i] * f[a][j]).sum();
                }
            }
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let step = [-(h[1][1] * g[0] - h[0][1] * g[1]) / det, -(h[0][0] * g[1] - h[1][0] * g[0]) / det];
            if step.iter().any(|s| !s.is_finite()) {
                break;
            }
            let trial: Vec<f64> = xi.iter().zip(&step).map(|(a, b)| a + b).collect();
            let next = project_reference(&trial);
            let moved = next.iter().zip(&xi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            xi = next;
            if moved <= NEWTON_TOL {
                let inside = xi[0] > 0.0 && xi[1] > 0.0 && xi[0] + xi[1] < 1.0;
                if inside {
                    self.element.eval(&xi, &mut vals, &mut grads);
                    return dist(p, &combine(cc, &vals, self.amb));
                }
                let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
                return [(0, 1), (1, 2), (2, 0)]
                    .iter()
                    .map(|&(a, b)| {
                        let (o, e) = (corners[a], corners[b]);
                        let dir = [e[0] - o[0], e[1] - o[1]];
                        self.restricted_newton(cc, p, o, &[dir])
                            .unwrap_or_else(|| self.dense_edge_distance(cc, p, o, dir))
                    })
                    .fold(f64::INFINITY, f64::min);
            }
        }
        self.dense_cell_distance(c, p)
    }

    /// Gauss-Newton for the closest point on the segment `origin + t dir`,
    /// `t ∈ [0, 1]`, of the reference cell. `None` if it does not settle.
    fn restricted_newton(&self, cc: &[f64], p: &[f64; 3], origin: [f64; 2], dir: &[[f64; 2]; 1]) -> Option<f64> {
        let d = self.amb - 1;
        let dir = dir[0];
        let mut vals = vec![0.0; self.nloc];
        let mut grads = vec![0.0; self.nloc * d];
        let at = |t: f64| [origin[0] + t * dir[0], origin[1] + t * dir[1]];
        let mut t = 0.5;
        for _ in 0..NEWTON_MAX {
            self.element.eval(&at(t)[..d], &mut vals, &mut grads);
            let x = combine(cc, &vals, self.amb);
            let f = geometry::tangents(d, cc, &grads);
            let tan: Vec<f64> = (0..3).map(|a| (0..d).map(|j| f[a][j] * dir[j]).sum()).collect();
            let g: f64 = (0..3).map(|a| tan[a] * (x[a] - p[a])).sum();
            let h: f64 = tan.iter().map(|v| v * v).sum();
            let next = (t - g / h).clamp(0.0, 1.0);
            if !next.is_finite() {
                return None;
            }
            let moved = (next - t).abs();
            t = next;
            if moved <= NEWTON_TOL {
                self.element.eval(&at(t)[..d], &mut vals, &mut grads);
                return Some(dist(p, &combine(cc, &vals, self.amb)));
            }
        }
        None
    }

    fn dense_edge_distance(&self, cc: &[f64], p: &[f64; 3], origin: [f64; 2], dir: [f64; 2]) -> f64 {
        let m = 4 * DENSE_PER_EDGE;
        let pts: Vec<f64> = (0..=m)
            .flat_map(|i| {
                let t = i as f64 / m as f64;
                [origin[0] + t * dir[0], origin[1] + t * dir[1]]
            })
            .collect();
        let table = self.element.tabulate_points(&pts);
        (0..=m)
            .map(|q| dist(p, &combine(cc, table.values(q), self.amb)))
            .fold(f64::INFINITY, f64::min)
    }

    fn dense_cell_distance(&self, c: usize, p: &[f64; 3]) -> f64 {
        let d = self.amb - 1;
        let pts = lattice_points(d, DENSE_PER_EDGE);
        let table = self.element.tabulate_points(&pts);
        let cc = self.cell_coeffs(c);
        (0..pts.len() / d)
            .map(|q| dist(p, &combine(cc, table.values(q), self.amb)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Area-weighted mean over `x` of the distance to the origin-centred sphere
/// (or circle) of radius `radius`, sampled like [`mesh_distance`].
pub fn sphere_distance(x: &SpaceField, radius: f64, sample_degree: Option<usize>) -> Result<f64> {
    let s = x.space();
    let rule = simplex_quadrature(s.dim(), sample_degree.unwrap_or(2 * s.degree() + 2))?;
    let table = s.element().tabulate(&rule);
    let amb = s.ambient_dim();
    let mut coeffs = vec![0.0; s.nodes_per_cell() * amb];
    let (mut num, mut den) = (0.0, 0.0);
    let mut cell = usize::MAX;
    geometry::for_each_point(x, &rule, |c, q, w, g| {
        if c != cell {
            x.gather(c, &mut coeffs);
            cell = c;
        }
        let p = combine(&coeffs, table.values(q), amb);
        let r = p[..amb].iter().map(|v| v * v).sum::<f64>().sqrt();
        num += w * g.jac * (r - radius).abs();
        den += w * g.jac;
    })?;
    Ok(num / den)
}

/// `E_M(m1, m2)`: area-weighted mean over `m1` of the distance to `m2`,
/// sampled at the points of a degree-`sample_degree` rule on `m1` (the
/// default is `2k + 2`).
pub fn mesh_distance(m1: &SpaceField, m2: &SpaceField, sample_degree: Option<usize>) -> Result<f64> {
    let s1 = m1.space();
    if s1.ambient_dim() != m2.space().ambient_dim() {
        return Err(Error::InvalidInput("meshes live in different ambient spaces".into()));
    }
    let degree = sample_degree.unwrap_or(2 * s1.degree() + 2);
    if degree == 0 {
        return Err(Error::InvalidInput("sampling degree must be at least 1".into()));
    }
    // fail early on degenerate targets
    geometry::area(m2, &simplex_quadrature(m2.space().dim(), 2)?)?;
    let index = DistanceIndex::new(m2)?;
    let rule = simplex_quadrature(s1.dim(), degree)?;
    let table = s1.element().tabulate(&rule);
    let amb = s1.ambient_dim();
    let mut coeffs = vec![0.0; s1.nodes_per_cell() * amb];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut cell = usize::MAX;
    geometry::for_each_point(m1, &rule, |c, q, w, g| {
        if c != cell {
            m1.gather(c, &mut coeffs);
            cell = c;
        }
        let x = combine(&coeffs, table.values(q), amb);
        num += w * g.jac * index.distance(&x[..amb]);
        den += w * g.jac;
    })?;
    Ok(num / den)
}

fn combine(coeffs: &[f64], vals: &[f64], amb: usize) -> [f64; 3] {
    let mut x = [0.0; 3];
    for (i, v) in vals.iter().enumerate() {
        for a in 0..amb {
            x[a] += v * coeffs[i * amb + a];
        }
    }
    x
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn box_distance(bb: &[f64; 6], p: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for a in 0..3 {
        let e = (bb[a] - p[a]).max(0.0).max(p[a] - bb[a + 3]);
        s += e * e;
    }
    s.sqrt()
}

/// Uniform lattice on the reference simplex with `m` intervals per edge.
fn lattice_points(d: usize, m: usize) -> Vec<f64> {
    let mut pts = Vec::new();
    if d == 1 {
        for i in 0..=m {
            pts.push(i as f64 / m as f64);
        }
    } else {
        for j in 0..=m {
            for i in 0..=m - j {
                pts.push(i as f64 / m as f64);
                pts.push(j as f64 / m as f64);
            }
        }
    }
    pts
}

/// Euclidean projection onto the reference interval or triangle.
fn project_reference(xi: &[f64]) -> Vec<f64> {
    if xi.len() == 1 {
        return vec![xi[0].clamp(0.0, 1.0)];
    }
    let (x, y) = (xi[0], xi[1]);
    if x >= 0.0 && y >= 0.0 && x + y <= 1.0 {
        return vec![x, y];
    }
    let on_segment = |a: [f64; 2], b: [f64; 2]| -> [f64; 2] {
        let e = [b[0] - a[0], b[1] - a[1]];
        let t = (((x - a[0]) * e[0] + (y - a[1]) * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
        [a[0] + t * e[0], a[1] + t * e[1]]
    };
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut best = [0.0, 0.0];
    let mut bd = f64::INFINITY;
    for (a, b) in [(0, 1), (1, 2), (2, 0)] {
        let q = on_segment(corners[a], corners[b]);
        let dd = (q[0] - x).powi(2) + (q[1] - y).powi(2);
        if dd < bd {
            bd = dd;
            best = q;
        }
    }
    best.to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_triangle() {
        assert_eq!(project_reference(&[0.2, 0.3]), vec![0.2, 0.3]);
        assert_eq!(project_reference(&[-1.0, -1.0]), vec![0.0, 0.0]);
        assert_eq!(project_reference(&[2.0, -0.5]), vec![1.0, 0.0]);
        let p = project_reference(&[1.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        assert_eq!(project_reference(&[1.5]), vec![1.0]);
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice_points(1, 4).len(), 5);
        assert_eq!(lattice_points(2, 4).len(), 2 * 15);
    }
}

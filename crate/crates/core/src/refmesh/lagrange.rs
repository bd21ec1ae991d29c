//! Lagrange elements of arbitrary degree on the reference interval and triangle.
//!
//! Nodes are labelled by barycentric multi-indices `alpha` with `|alpha| = k`.
//! Local ordering is vertices first, then the interior nodes of each edge
//! (edges `(0,1)`, `(1,2)`, `(2,0)`, each walked from its first vertex to its
//! second), then cell-interior nodes.

use super::quadrature::QuadratureRule;

/// Highest supported polynomial degree.
pub const MAX_ELEMENT_DEGREE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeElement {
    dim: usize,
    degree: usize,
    // barycentric multi-indices, stride dim + 1
    alphas: Vec<usize>,
}

impl LagrangeElement {
    pub fn new(dim: usize, degree: usize) -> Self {
        assert!(dim == 1 || dim == 2, "reference cells are intervals or triangles");
        assert!(
            (1..=MAX_ELEMENT_DEGREE).contains(&degree),
            "element degree {degree} outside 1..={MAX_ELEMENT_DEGREE}"
        );
        let k = degree;
        let mut alphas = Vec::new();
        if dim == 1 {
            alphas.extend([k, 0, 0, k]);
            for j in 1..k {
                alphas.extend([k - j, j]);
            }
        } else {
            alphas.extend([k, 0, 0, 0, k, 0, 0, 0, k]);
            for j in 1..k {
                alphas.extend([k - j, j, 0]);
            }
            for j in 1..k {
                alphas.extend([0, k - j, j]);
            }
            for j in 1..k {
                alphas.extend([j, 0, k - j]);
            }
            for a1 in 1..k {
                for a2 in 1..k {
                    if a1 + a2 < k {
                        alphas.extend([k - a1 - a2, a1, a2]);
                    }
                }
            }
        }
        Self { dim, degree, alphas }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_nodes(&self) -> usize {
        self.alphas.len() / (self.dim + 1)
    }

    /// Number of nodes strictly inside each edge of the cell.
    pub fn nodes_per_edge(&self) -> usize {
        self.degree - 1
    }

    pub fn num_interior_nodes(&self) -> usize {
        match self.dim {
            1 => self.degree - 1,
            _ => (self.degree - 1) * self.degree.saturating_sub(2) / 2,
        }
    }

    pub fn alpha(&self, i: usize) -> &[usize] {
        &self.alphas[i * (self.dim + 1)..(i + 1) * (self.dim + 1)]
    }

    /// Barycentric coordinates of node `i`.
    pub fn node_barycentric(&self, i: usize) -> Vec<f64> {
        let k = self.degree as f64;
        self.alpha(i).iter().map(|&a| a as f64 / k).collect()
    }

    /// Reference coordinates of node `i` (the trailing barycentric entries).
    pub fn node_point(&self, i: usize) -> Vec<f64> {
        self.node_barycentric(i)[1..].to_vec()
    }

    /// Values `phi_i(x)` and reference gradients, gradients stored with stride `dim`.
    pub fn eval(&self, x: &[f64], values: &mut [f64], grads: &mut [f64]) {
        let d = self.dim;
        let k = self.degree;
        let kf = k as f64;
        let mut lam = [0.0; 3];
        lam[0] = 1.0 - x[..d].iter().sum::<f64>();
        lam[1..=d].copy_from_slice(&x[..d]);
        // f[m][a] = prod_{r<a} (k lam_m - r)/(r+1) and its lam-derivative
        let mut f = [[0.0; MAX_ELEMENT_DEGREE + 1]; 3];
        let mut df = [[0.0; MAX_ELEMENT_DEGREE + 1]; 3];
        for m in 0..=d {
            f[m][0] = 1.0;
            df[m][0] = 0.0;
            for a in 1..=k {
                let r = (a - 1) as f64;
                let c = (kf * lam[m] - r) / (r + 1.0);
                f[m][a] = f[m][a - 1] * c;
                df[m][a] = df[m][a - 1] * c + f[m][a - 1] * kf / (r + 1.0);
            }
        }
        for i in 0..self.num_nodes() {
            let al = self.alpha(i);
            let mut v = 1.0;
            for m in 0..=d {
                v *= f[m][al[m]];
            }
            values[i] = v;
            let mut dl = [0.0; 3];
            for m in 0..=d {
                let mut p = df[m][al[m]];
                for o in 0..=d {
                    if o != m {
                        p *= f[o][al[o]];
                    }
                }
                dl[m] = p;
            }
            for j in 0..d {
                grads[i * d + j] = dl[j + 1] - dl[0];
            }
        }
    }

    /// Basis values and gradients at every point of `rule`.
    pub fn tabulate(&self, rule: &QuadratureRule) -> BasisTable {
        let points: Vec<f64> = rule.iter().flat_map(|(p, _)| p.to_vec()).collect();
        self.tabulate_points(&points)
    }

    /// Basis values and gradients at flat point list (stride `dim`).
    pub fn tabulate_points(&self, points: &[f64]) -> BasisTable {
        let n = self.num_nodes();
        let d = self.dim;
        let npts = points.len() / d;
        let mut values = vec![0.0; npts * n];
        let mut grads = vec![0.0; npts * n * d];
        for q in 0..npts {
            self.eval(
                &points[q * d..(q + 1) * d],
                &mut values[q * n..(q + 1) * n],
                &mut grads[q * n * d..(q + 1) * n * d],
            );
        }
        BasisTable {
            dim: d,
            num_nodes: n,
            num_points: npts,
            values,
            grads,
        }
    }
}

/// Basis values/gradients tabulated at a fixed point set.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTable {
    pub dim: usize,
    pub num_nodes: usize,
    pub num_points: usize,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl BasisTable {
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.num_nodes..(q + 1) * self.num_nodes]
    }

    /// Gradients at point `q`, stride `dim`.
    pub fn grads(&self, q: usize) -> &[f64] {
        let s = self.num_nodes * self.dim;
        &self.grads[q * s..(q + 1) * s]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts() {
        for k in 1..=6 {
            let e = LagrangeElement::new(2, k);
            assert_eq!(e.num_nodes(), (k + 1) * (k + 2) / 2);
            assert_eq!(3 + 3 * e.nodes_per_edge() + e.num_interior_nodes(), e.num_nodes());
            let e1 = LagrangeElement::new(1, k);
            assert_eq!(e1.num_nodes(), k + 1);
        }
    }

    #[test]
    fn kronecker_property() {
        for dim in 1..=2 {
            for k in 1..=5 {
                let e = LagrangeElement::new(dim, k);
                let n = e.num_nodes();
                let mut v = vec![0.0; n];
                let mut g = vec![0.0; n * dim];
                for j in 0..n {
                    e.eval(&e.node_point(j), &mut v, &mut g);
                    for (i, vi) in v.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((vi - want).abs() < 1e-13, "dim {dim} k {k} i {i} j {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn edge_nodes_run_between_vertices() {
        let e = LagrangeElement::new(2, 3);
        // first edge node lies one third of the way from vertex 0 to vertex 1
        assert_eq!(e.node_point(3), vec![1.0 / 3.0, 0.0]);
        // edge (2,0) starts near vertex 2
        assert_eq!(e.node_point(7), vec![0.0, 2.0 / 3.0]);
        assert_eq!(e.node_point(9), vec![1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let e = LagrangeElement::new(2, 4);
        let n = e.num_nodes();
        let x = [0.23, 0.41];
        let h = 1e-6;
        let mut v0 = vec![0.0; n];
        let mut v1 = vec![0.0; n];
        let mut g = vec![0.0; 2 * n];
        let mut scratch = vec![0.0; 2 * n];
        e.eval(&x, &mut v0, &mut g);
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            e.eval(&xp, &mut v1, &mut scratch);
            e.eval(&xm, &mut v0, &mut scratch);
            for i in 0..n {
                let fd = (v1[i] - v0[i]) / (2.0 * h);
                assert!((fd - g[i * 2 + j]).abs() < 1e-7);
            }
        }
    }
}

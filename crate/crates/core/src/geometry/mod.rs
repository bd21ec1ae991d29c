//! Pullback geometry at reference points and the global functionals
//! (area, enclosed volume, mesh quality).

mod field;

pub use field::SpaceField;

use crate::error::{Error, Result};
use crate::refmesh::QuadratureRule;

/// Relative threshold on `det G` below which a point is treated as collapsed.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// Geometry of the immersion at one reference point.
///
/// `f[a][j]` is the derivative of ambient coordinate `a` along reference
/// direction `j`; unused slots are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub dim: usize,
    pub f: [[f64; 2]; 3],
    pub g: [[f64; 2]; 2],
    pub ginv: [[f64; 2]; 2],
    pub det_g: f64,
    pub jac: f64,
    pub nu: [f64; 3],
    pub normal: [f64; 3],
}

impl CellGeometry {
    /// Builds the geometry from the tangent matrix. Returns `det G` on failure.
    pub fn from_tangents(dim: usize, f: [[f64; 2]; 3]) -> std::result::Result<Self, f64> {
        let amb = dim + 1;
        let mut g = [[0.0; 2]; 2];
        for i in 0..dim {
            for j in 0..dim {
                g[i][j] = (0..amb).map(|a| f[a][i] * f[a][j]).sum();
            }
        }
        let (det_g, ginv, nu, scale2) = if dim == 1 {
            let det = g[0][0];
            (det, [[1.0 / det, 0.0], [0.0, 0.0]], [f[1][0], -f[0][0], 0.0], g[0][0])
        } else {
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            let inv = [
                [g[1][1] / det, -g[0][1] / det],
                [-g[1][0] / det, g[0][0] / det],
            ];
            let nu = [
                f[1][0] * f[2][1] - f[2][0] * f[1][1],
                f[2][0] * f[0][1] - f[0][0] * f[2][1],
                f[0][0] * f[1][1] - f[1][0] * f[0][1],
            ];
            (det, inv, nu, g[0][0].max(g[1][1]))
        };
        if !(det_g.is_finite() && det_g > DEGENERACY_THRESHOLD * scale2.powi(dim as i32)) || scale2 == 0.0 {
            return Err(det_g);
        }
        let jac = det_g.sqrt();
        let nn = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        let normal = [nu[0] / nn, nu[1] / nn, nu[2] / nn];
        Ok(Self {
            dim,
            f,
            g,
            ginv,
            det_g,
            jac,
            nu,
            normal,
        })
    }

    /// Geometry from local coefficients (node-major, `dim + 1` components)
    /// and reference basis gradients (stride `dim`).
    pub fn from_coefficients(dim: usize, coeffs: &[f64], grads: &[f64]) -> std::result::Result<Self, f64> {
        Self::from_tangents(dim, tangents(dim, coeffs, grads))
    }

    /// `F G^{-1} g` for a reference gradient `g`: the surface gradient of a
    /// scalar whose reference gradient is `g`.
    pub fn lift(&self, g: &[f64]) -> [f64; 3] {
        let d = self.dim;
        let mut h = [0.0; 2];
        for i in 0..d {
            h[i] = (0..d).map(|j| self.ginv[i][j] * g[j]).sum();
        }
        let mut out = [0.0; 3];
        for (a, o) in out.iter_mut().enumerate().take(d + 1) {
            *o = (0..d).map(|i| self.f[a][i] * h[i]).sum();
        }
        out
    }
}

/// Tangent matrix from local coefficients and basis gradients.
pub fn tangents(dim: usize, coeffs: &[f64], grads: &[f64]) -> [[f64; 2]; 3] {
    let amb = dim + 1;
    let nloc = grads.len() / dim;
    let mut f = [[0.0; 2]; 3];
    for l in 0..nloc {
        for a in 0..amb {
            let x = coeffs[l * amb + a];
            for j in 0..dim {
                f[a][j] += x * grads[l * dim + j];
            }
        }
    }
    f
}

fn degenerate(cell: usize, det_g: f64) -> Error {
    Error::DegenerateGeometry {
        cell,
        detail: format!("det G = {det_g:e}"),
    }
}

/// Geometry of `x` at a reference point of `cell`.
pub fn cell_geometry(x: &SpaceField, cell: usize, ref_point: &[f64]) -> Result<CellGeometry> {
    let space = x.space();
    let d = space.dim();
    let n = space.nodes_per_cell();
    let mut vals = vec![0.0; n];
    let mut grads = vec![0.0; n * d];
    space.element().eval(ref_point, &mut vals, &mut grads);
    let mut coeffs = vec![0.0; n * (d + 1)];
    x.gather(cell, &mut coeffs);
    CellGeometry::from_coefficients(d, &coeffs, &grads).map_err(|det| degenerate(cell, det))
}

/// Surface gradient of every component of `f`, one ambient vector per component.
pub fn surface_gradient(f: &SpaceField, cell: usize, ref_point: &[f64], geom: &CellGeometry) -> Vec<[f64; 3]> {
    let space = f.space();
    let d = space.dim();
    let n = space.nodes_per_cell();
    let nc = f.components();
    let mut vals = vec![0.0; n];
    let mut grads = vec![0.0; n * d];
    space.element().eval(ref_point, &mut vals, &mut grads);
    let mut coeffs = vec![0.0; n * nc];
    f.gather(cell, &mut coeffs);
    (0..nc)
        .map(|c| {
            let mut g = [0.0; 2];
            for l in 0..n {
                for j in 0..d {
                    g[j] += coeffs[l * nc + c] * grads[l * d + j];
                }
            }
            geom.lift(&g[..d])
        })
        .collect()
}

/// Visits every (cell, quadrature point) with the geometry of `x` there.
/// Cells are visited in index order, so sums are reproducible.
pub fn for_each_point(
    x: &SpaceField,
    rule: &QuadratureRule,
    mut visit: impl FnMut(usize, usize, f64, &CellGeometry),
) -> Result<()> {
    let space = x.space();
    let d = space.dim();
    let table = space.element().tabulate(rule);
    let mut coeffs = vec![0.0; space.nodes_per_cell() * (d + 1)];
    for c in 0..space.num_cells() {
        x.gather(c, &mut coeffs);
        for q in 0..rule.len() {
            let geom = CellGeometry::from_coefficients(d, &coeffs, table.grads(q))
                .map_err(|det| degenerate(c, det))?;
            visit(c, q, rule.weight(q), &geom);
        }
    }
    Ok(())
}

/// Surface area (curve length for `d = 1`).
pub fn area(x: &SpaceField, rule: &QuadratureRule) -> Result<f64> {
    let mut s = 0.0;
    for_each_point(x, rule, |_, _, w, g| s += w * g.jac)?;
    Ok(s)
}

/// Enclosed volume `1/(d+1) * sum w X . nu` (area enclosed for `d = 1`).
pub fn volume(x: &SpaceField, rule: &QuadratureRule) -> Result<f64> {
    let space = x.space();
    let d = space.dim();
    let amb = d + 1;
    let table = space.element().tabulate(rule);
    let n = space.nodes_per_cell();
    let mut coeffs = vec![0.0; n * amb];
    let mut v = 0.0;
    for c in 0..space.num_cells() {
        x.gather(c, &mut coeffs);
        for q in 0..rule.len() {
            let f = tangents(d, &coeffs, table.grads(q));
            let nu = raw_normal(d, &f);
            let phi = table.values(q);
            let mut pos = [0.0; 3];
            for l in 0..n {
                for a in 0..amb {
                    pos[a] += phi[l] * coeffs[l * amb + a];
                }
            }
            v += rule.weight(q) * (0..amb).map(|a| pos[a] * nu[a]).sum::<f64>();
        }
    }
    Ok(v / amb as f64)
}

/// Exterior-product normal of a tangent matrix, no degeneracy check.
pub fn raw_normal(dim: usize, f: &[[f64; 2]; 3]) -> [f64; 3] {
    if dim == 1 {
        [f[1][0], -f[0][0], 0.0]
    } else {
        [
            f[1][0] * f[2][1] - f[2][0] * f[1][1],
            f[2][0] * f[0][1] - f[0][0] * f[2][1],
            f[0][0] * f[1][1] - f[1][0] * f[0][1],
        ]
    }
}

/// Ratio of the largest to the smallest pointwise area distortion `sqrt(J / J0)`.
pub fn mesh_quality(x: &SpaceField, x0: &SpaceField, rule: &QuadratureRule) -> Result<f64> {
    let mut j0 = Vec::with_capacity(x.space().num_cells() * rule.len());
    for_each_point(x0, rule, |_, _, _, g| j0.push(g.jac))?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut i = 0;
    for_each_point(x, rule, |_, _, _, g| {
        let r = (g.jac / j0[i]).sqrt();
        lo = lo.min(r);
        hi = hi.max(r);
        i += 1;
    })?;
    Ok(hi / lo)
}

/// Derivative of the area along `x + t w` at `t = 0`.
pub fn area_rate(x: &SpaceField, w: &SpaceField, rule: &QuadratureRule) -> Result<f64> {
    let space = x.space();
    let d = space.dim();
    let amb = d + 1;
    let table = space.element().tabulate(rule);
    let n = space.nodes_per_cell();
    let mut wc = vec![0.0; n * amb];
    let mut rate = 0.0;
    let mut cell_prev = usize::MAX;
    for_each_point(x, rule, |c, q, wq, g| {
        if c != cell_prev {
            w.gather(c, &mut wc);
            cell_prev = c;
        }
        let gr = table.grads(q);
        let mut div = 0.0;
        for a in 0..amb {
            let mut ref_grad = [0.0; 2];
            for l in 0..n {
                for j in 0..d {
                    ref_grad[j] += wc[l * amb + a] * gr[l * d + j];
                }
            }
            div += g.lift(&ref_grad[..d])[a];
        }
        rate += wq * g.jac * div;
    })?;
    Ok(rate)
}

/// Derivative of the enclosed volume along `x + t w` at `t = 0`: `sum w W . nu`.
pub fn volume_rate(x: &SpaceField, w: &SpaceField, rule: &QuadratureRule) -> Result<f64> {
    let space = x.space();
    let d = space.dim();
    let amb = d + 1;
    let table = space.element().tabulate(rule);
    let n = space.nodes_per_cell();
    let mut xc = vec![0.0; n * amb];
    let mut wc = vec![0.0; n * amb];
    let mut rate = 0.0;
    for c in 0..space.num_cells() {
        x.gather(c, &mut xc);
        w.gather(c, &mut wc);
        for q in 0..rule.len() {
            let nu = raw_normal(d, &tangents(d, &xc, table.grads(q)));
            let phi = table.values(q);
            for a in 0..amb {
                let wa: f64 = (0..n).map(|l| phi[l] * wc[l * amb + a]).sum();
                rate += rule.weight(q) * wa * nu[a];
            }
        }
    }
    Ok(rate)
}

/// Default spatial quadrature degree for Lagrange degree `k` on a `d`-manifold.
pub fn default_spatial_degree(d: usize, k: usize) -> usize {
    (2 * k + 2).max((d + 1) * k)
}

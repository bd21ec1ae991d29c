//! Residual and exact Jacobian of the slab system.
//!
//! Rows are slab integrals divided by `tau` (integration over the unit slab).
//! For every time point the spatial integrals are first collected into small
//! per-cell kernels, which are then spread over the (test, trial) time-node
//! pairs with the time basis values at that point.

use std::sync::Arc;

use super::state::{FlowKind, FlowSpec, SlabLayout, SlabState};
use crate::error::{Error, Result};
use crate::geometry::{tangents, CellGeometry};
use crate::refmesh::{BasisTable, FunctionSpace, QuadratureRule};
use crate::timeslab::{trial_basis, test_basis};

/// Time basis values at the points of a rule.
#[derive(Debug, Clone)]
pub(crate) struct TimeTable {
    pub weights: Vec<f64>,
    /// `test[q][j]`
    pub test: Vec<Vec<f64>>,
    /// `trial[q][m]`, `m` in `0..=s`
    pub trial: Vec<Vec<f64>>,
    pub dtrial: Vec<Vec<f64>>,
}

impl TimeTable {
    pub fn new(rule: &QuadratureRule, s: usize) -> Self {
        let (tb, sb) = (trial_basis(s), test_basis(s));
        let pts: Vec<f64> = rule.iter().map(|(t, _)| t[0]).collect();
        Self {
            weights: rule.weights().to_vec(),
            test: pts.iter().map(|&t| sb.eval(t)).collect(),
            trial: pts.iter().map(|&t| tb.eval(t)).collect(),
            dtrial: pts.iter().map(|&t| tb.eval_derivative(t)).collect(),
        }
    }
}

/// Row blocks (a)-(d) and column blocks (X, p, R, κ) that couple.
const ACTIVE: [[bool; 4]; 4] = [
    [true, false, false, true],
    [true, true, false, false],
    [true, false, true, false],
    [true, false, true, true],
];

/// Sparse Jacobian pattern in compressed-column form.
#[derive(Debug, Clone)]
pub struct JacobianPattern {
    pub nrows: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
}

impl JacobianPattern {
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Position of `(row, col)` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.col_ptr[col], self.col_ptr[col + 1]);
        self.row_idx[lo..hi].binary_search(&row).ok().map(|k| lo + k)
    }
}

/// Integrals over a converged slab used by the ledger, each already
/// multiplied by `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabIntegrals {
    /// `∫ (∇Ẋ, ∇R)_M`.
    pub orthogonality: f64,
    /// `∫ (∇Ẋ, ∇Ẋ)_M`.
    pub xdot_norm2: f64,
    /// `∫ (∇R, ∇R)_M`.
    pub r_norm2: f64,
    /// `∫ ‖κ‖²_M` (MCF) or `∫ ‖∇κ‖²_M` (SD).
    pub dissipation: f64,
}

/// Assembles the slab system for a fixed space, flow and quadrature policy.
#[derive(Debug, Clone)]
pub struct SlabAssembler {
    space: Arc<FunctionSpace>,
    flow: FlowKind,
    layout: SlabLayout,
    nloc: usize,
    base_space: BasisTable,
    base_sw: Vec<f64>,
    elev_space: BasisTable,
    elev_sw: Vec<f64>,
    base_time: TimeTable,
    elev_time: TimeTable,
    pattern: JacobianPattern,
    // active local (row, col) pairs, shared by all cells
    local_pairs: Vec<(u32, u32)>,
    // per cell, value position of each local pair
    positions: Vec<u32>,
}

impl SlabAssembler {
    pub fn new(space: Arc<FunctionSpace>, spec: &FlowSpec) -> Result<Self> {
        if space.dim() != spec.dim || space.degree() != spec.degree {
            return Err(Error::Precondition(format!(
                "space (d = {}, k = {}) does not match the flow spec (d = {}, k = {})",
                space.dim(),
                space.degree(),
                spec.dim,
                spec.degree
            )));
        }
        let s = spec.stages;
        let layout = SlabLayout {
            nodes: space.num_nodes(),
            ambient: space.ambient_dim(),
            stages: s,
        };
        let el = space.element();
        let nloc = el.num_nodes();
        let policy = &spec.policy;
        let mut asm = Self {
            flow: spec.flow,
            layout,
            nloc,
            base_space: el.tabulate(&policy.base_space),
            base_sw: policy.base_space.weights().to_vec(),
            elev_space: el.tabulate(&policy.elevated_space),
            elev_sw: policy.elevated_space.weights().to_vec(),
            base_time: TimeTable::new(&policy.base_time, s),
            elev_time: TimeTable::new(&policy.elevated_time, s),
            pattern: JacobianPattern {
                nrows: 0,
                col_ptr: Vec::new(),
                row_idx: Vec::new(),
            },
            local_pairs: Vec::new(),
            positions: Vec::new(),
            space,
        };
        asm.build_pattern()?;
        Ok(asm)
    }

    pub fn layout(&self) -> SlabLayout {
        self.layout
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn pattern(&self) -> &JacobianPattern {
        &self.pattern
    }

    fn local_len(&self) -> usize {
        self.layout.stages * self.nloc * (2 * self.layout.ambient + 2)
    }

    fn local_row_block(&self, lr: usize) -> usize {
        let (s, n, d) = (self.layout.stages, self.nloc, self.layout.ambient);
        let bounds = [s * n, s * n * (d + 1), s * n * (d + 2)];
        bounds.iter().filter(|&&b| lr >= b).count()
    }

    fn local_col_block(&self, lc: usize) -> usize {
        let (s, n, d) = (self.layout.stages, self.nloc, self.layout.ambient);
        let bounds = [s * n * d, s * n * (d + 1), s * n * (2 * d + 1)];
        bounds.iter().filter(|&&b| lc >= b).count()
    }

    /// Global indices of the local rows and columns of `cell`.
    fn global_maps(&self, cell: usize, rows: &mut Vec<usize>, cols: &mut Vec<usize>) {
        let l = self.layout;
        let dofs = self.space.cell_dofs(cell);
        let (s, dd) = (l.stages, l.ambient);
        rows.clear();
        cols.clear();
        for j in 0..s {
            rows.extend(dofs.iter().map(|&g| l.row_a(j, g)));
        }
        for j in 0..s {
            for &g in dofs {
                rows.extend((0..dd).map(|c| l.row_b(j, g, c)));
            }
        }
        for j in 0..s {
            rows.extend(dofs.iter().map(|&g| l.row_c(j, g)));
        }
        for j in 0..s {
            for &g in dofs {
                rows.extend((0..dd).map(|c| l.row_d(j, g, c)));
            }
        }
        for m in 0..s {
            for &g in dofs {
                cols.extend((0..dd).map(|c| l.x(m, g, c)));
            }
        }
        for j in 0..s {
            cols.extend(dofs.iter().map(|&g| l.p(j, g)));
        }
        for j in 0..s {
            for &g in dofs {
                cols.extend((0..dd).map(|c| l.r(j, g, c)));
            }
        }
        for j in 0..s {
            cols.extend(dofs.iter().map(|&g| l.kappa(j, g)));
        }
    }

    fn build_pattern(&mut self) -> Result<()> {
        let nl = self.local_len();
        let n = self.layout.len();
        if n > u32::MAX as usize {
            return Err(Error::Capability(format!("{n} unknowns exceed the index range")));
        }
        let row_blocks: Vec<usize> = (0..nl).map(|r| self.local_row_block(r)).collect();
        let col_blocks: Vec<usize> = (0..nl).map(|c| self.local_col_block(c)).collect();
        self.local_pairs.clear();
        for lr in 0..nl {
            for lc in 0..nl {
                if ACTIVE[row_blocks[lr]][col_blocks[lc]] {
                    self.local_pairs.push((lr as u32, lc as u32));
                }
            }
        }
        let (mut rows, mut cols) = (Vec::new(), Vec::new());
        let mut entries: Vec<(u32, u32)> = Vec::with_capacity(self.space.num_cells() * self.local_pairs.len());
        for c in 0..self.space.num_cells() {
            self.global_maps(c, &mut rows, &mut cols);
            for &(lr, lc) in &self.local_pairs {
                entries.push((cols[lc as usize] as u32, rows[lr as usize] as u32));
            }
        }
        entries.sort_unstable();
        entries.dedup();
        let mut col_ptr = vec![0usize; n + 1];
        for &(c, _) in &entries {
            col_ptr[c as usize + 1] += 1;
        }
        for i in 0..n {
            col_ptr[i + 1] += col_ptr[i];
        }
        let row_idx: Vec<usize> = entries.iter().map(|&(_, r)| r as usize).collect();
        drop(entries);
        self.pattern = JacobianPattern {
            nrows: n,
            col_ptr,
            row_idx,
        };
        let mut positions = Vec::with_capacity(self.space.num_cells() * self.local_pairs.len());
        for c in 0..self.space.num_cells() {
            self.global_maps(c, &mut rows, &mut cols);
            for &(lr, lc) in &self.local_pairs {
                let pos = self
                    .pattern
                    .position(rows[lr as usize], cols[lc as usize])
                    .expect("entry present in pattern");
                positions.push(pos as u32);
            }
        }
        self.positions = positions;
        Ok(())
    }

    pub fn residual(&self, state: &SlabState) -> Result<Vec<f64>> {
        let mut r = vec![0.0; self.layout.len()];
        self.assemble(state, &mut r, None)?;
        Ok(r)
    }

    /// Residual and Jacobian values on [`Self::pattern`].
    pub fn residual_and_jacobian(&self, state: &SlabState) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut r = vec![0.0; self.layout.len()];
        let mut vals = vec![0.0; self.pattern.nnz()];
        self.assemble(state, &mut r, Some(&mut vals))?;
        Ok((r, vals))
    }

    fn check_state(&self, state: &SlabState) -> Result<()> {
        if state.layout() != self.layout || !Arc::ptr_eq(state.space(), &self.space) {
            return Err(Error::Precondition("slab state does not match the assembler".into()));
        }
        Ok(())
    }

    fn assemble(&self, state: &SlabState, res: &mut [f64], mut jac: Option<&mut [f64]>) -> Result<()> {
        self.check_state(state)?;
        let nl = self.local_len();
        let mut ws = Workspace::new(self.layout, self.nloc, self.space.dim());
        let mut lres = vec![0.0; nl];
        let mut ljac = if jac.is_some() { vec![0.0; nl * nl] } else { Vec::new() };
        let (mut rows, mut cols) = (Vec::new(), Vec::new());
        let np = self.local_pairs.len();
        for cell in 0..self.space.num_cells() {
            lres.iter_mut().for_each(|v| *v = 0.0);
            ljac.iter_mut().for_each(|v| *v = 0.0);
            ws.gather(state, cell);
            let want = jac.is_some();
            self.cell_local(&mut ws, state.tau(), &mut lres, if want { Some(&mut ljac) } else { None })
                .map_err(|(q, det)| Error::DegenerateGeometry {
                    cell,
                    detail: format!("slab t0 = {}, time point {q}, det G = {det:e}", state.t0()),
                })?;
            self.global_maps(cell, &mut rows, &mut cols);
            for (lr, &g) in rows.iter().enumerate() {
                res[g] += lres[lr];
            }
            if let Some(vals) = jac.as_deref_mut() {
                let pos = &self.positions[cell * np..(cell + 1) * np];
                for (k, &(lr, lc)) in self.local_pairs.iter().enumerate() {
                    vals[pos[k] as usize] += ljac[lr as usize * nl + lc as usize];
                }
            }
        }
        Ok(())
    }

    /// Local residual and (optionally) Jacobian of one cell. On degenerate
    /// geometry returns the time point index and `det G`.
    fn cell_local(
        &self,
        ws: &mut Workspace,
        tau: f64,
        res: &mut [f64],
        mut jac: Option<&mut [f64]>,
    ) -> std::result::Result<(), (usize, f64)> {
        let s = self.layout.stages;
        let dd = self.layout.ambient;
        let d = dd - 1;
        let n = self.nloc;
        let nd = n * dd;
        let nl = self.local_len();
        let want = jac.is_some();
        let sd = self.flow == FlowKind::Sd;

        // local index helpers
        let row_a = |j: usize, i: usize| j * n + i;
        let row_b = |j: usize, i: usize, c: usize| s * n + (j * n + i) * dd + c;
        let row_c = |j: usize, i: usize| s * n * (dd + 1) + j * n + i;
        let row_d = |j: usize, i: usize, c: usize| s * n * (dd + 2) + (j * n + i) * dd + c;
        let col_x = |m: usize, i: usize, c: usize| (m * n + i) * dd + c;
        let col_p = |j: usize, i: usize| s * n * dd + j * n + i;
        let col_r = |j: usize, i: usize, c: usize| s * n * (dd + 1) + (j * n + i) * dd + c;
        let col_k = |j: usize, i: usize| s * n * (2 * dd + 1) + j * n + i;

        // ---- base time points: all paired terms
        for (tq, &wt) in self.base_time.weights.iter().enumerate() {
            let lj = &self.base_time.test[tq];
            let lm = &self.base_time.trial[tq];
            let dlm = &self.base_time.dtrial[tq];
            ws.combine(lm, dlm, lj, tau);
            ws.clear_kernels(want);
            for (sq, &w) in self.base_sw.iter().enumerate() {
                let phi = self.base_space.values(sq);
                let gr = self.base_space.grads(sq);
                let f = tangents(d, &ws.xq, gr);
                let geom = CellGeometry::from_tangents(d, f).map_err(|det| (tq, det))?;
                let pt = PointFields::new(ws, &geom, phi, gr, n, d);
                let jw = geom.jac * w;
                let xdot_nu = dot(&pt.xdot, &geom.nu);
                let r_nu = dot(&pt.r, &geom.nu);
                for i in 0..n {
                    let ai = &pt.a[i];
                    let mut ra = w * phi[i] * xdot_nu;
                    if sd {
                        ra -= jw * dot2(ai, &pt.gk, d);
                    } else {
                        ra -= jw * phi[i] * pt.kappa;
                    }
                    ws.ra[i] += ra;
                    ws.rc[i] += w * phi[i] * r_nu;
                    for c in 0..dd {
                        ws.rb[i * dd + c] += jw * dot2(ai, &pt.gxdot[c], d) + w * pt.p * geom.nu[c] * phi[i];
                        ws.rd[i * dd + c] += jw * dot2(ai, &pt.gr[c], d) + w * pt.kappa * geom.nu[c] * phi[i];
                    }
                }
                if !want {
                    continue;
                }
                // derivative carriers
                let wx = normal_variation_dot(&geom, &pt.xdot);
                let wr = normal_variation_dot(&geom, &pt.r);
                let wmat = normal_variation_matrix(&geom);
                let lxd: Vec<([f64; 2], [f64; 3])> = (0..dd).map(|c| lifted(&geom, &pt.gxdot[c])).collect();
                let lrr: Vec<([f64; 2], [f64; 3])> = (0..dd).map(|c| lifted(&geom, &pt.gr[c])).collect();
                let lkk = lifted(&geom, &pt.gk);
                for i in 0..n {
                    let ai = pt.a[i];
                    let li = pt.lift[i];
                    let ai_xd: Vec<f64> = (0..dd).map(|c| dot2(&ai, &pt.gxdot[c], d)).collect();
                    let ai_r: Vec<f64> = (0..dd).map(|c| dot2(&ai, &pt.gr[c], d)).collect();
                    let ai_k = dot2(&ai, &pt.gk, d);
                    for k in 0..n {
                        let gk = &gr[k * d..(k + 1) * d];
                        let aa = dot2(&ai, gk, d);
                        let lk = pt.lift[k];
                        ws.a_ker[i * n + k] += jw * aa;
                        ws.mj[i * n + k] += jw * phi[i] * phi[k];
                        for cp in 0..dd {
                            ws.nker[(i * n + k) * dd + cp] += w * phi[i] * phi[k] * geom.nu[cp];
                        }
                        for cp in 0..dd {
                            let dnu_x: f64 = (0..d).map(|j| gk[j] * wx[j][cp]).sum();
                            let dnu_r: f64 = (0..d).map(|j| gk[j] * wr[j][cp]).sum();
                            let mut ka = w * phi[i] * dnu_x;
                            if sd {
                                ka -= jw * (lk[cp] * ai_k - aa * lkk.1[cp] - li[cp] * dot2(gk, &lkk.0, d));
                            } else {
                                ka -= jw * phi[i] * pt.kappa * lk[cp];
                            }
                            ws.kaf[i * nd + k * dd + cp] += ka;
                            ws.kcf[i * nd + k * dd + cp] += w * phi[i] * dnu_r;
                            for c in 0..dd {
                                let dnu_c: f64 = (0..d).map(|j| gk[j] * wmat[j][c][cp]).sum();
                                let row = (i * dd + c) * nd + k * dd + cp;
                                ws.kbf[row] += jw
                                    * (lk[cp] * ai_xd[c] - aa * lxd[c].1[cp] - li[cp] * dot2(gk, &lxd[c].0, d))
                                    + w * pt.p * phi[i] * dnu_c;
                                ws.kdf[row] += jw
                                    * (lk[cp] * ai_r[c] - aa * lrr[c].1[cp] - li[cp] * dot2(gk, &lrr[c].0, d))
                                    + w * pt.kappa * phi[i] * dnu_c;
                            }
                        }
                    }
                }
            }
            // spread over time nodes
            for j in 0..s {
                let cj = wt * lj[j];
                for i in 0..n {
                    res[row_a(j, i)] += cj * ws.ra[i];
                    res[row_c(j, i)] += cj * ws.rc[i];
                    for c in 0..dd {
                        res[row_b(j, i, c)] += cj * ws.rb[i * dd + c];
                        res[row_d(j, i, c)] += cj * ws.rd[i * dd + c];
                    }
                }
            }
            let Some(jm) = jac.as_deref_mut() else { continue };
            for j in 0..s {
                let cj = wt * lj[j];
                for m in 0..s {
                    let cf = cj * lm[m + 1];
                    let cv = cj * dlm[m + 1] / tau;
                    for i in 0..n {
                        for k in 0..n {
                            let akk = ws.a_ker[i * n + k];
                            for cp in 0..dd {
                                let col = col_x(m, k, cp);
                                let nk = ws.nker[(i * n + k) * dd + cp];
                                jm[row_a(j, i) * nl + col] += cf * ws.kaf[i * nd + k * dd + cp] + cv * nk;
                                jm[row_c(j, i) * nl + col] += cf * ws.kcf[i * nd + k * dd + cp];
                                for c in 0..dd {
                                    let kr = (i * dd + c) * nd + k * dd + cp;
                                    let diag = if c == cp { cv * akk } else { 0.0 };
                                    jm[row_b(j, i, c) * nl + col] += cf * ws.kbf[kr] + diag;
                                    jm[row_d(j, i, c) * nl + col] += cf * ws.kdf[kr];
                                }
                            }
                        }
                    }
                }
                for j2 in 0..s {
                    let c2 = cj * lj[j2];
                    for i in 0..n {
                        for k in 0..n {
                            let akk = ws.a_ker[i * n + k];
                            let kk = if sd { -akk } else { -ws.mj[i * n + k] };
                            jm[row_a(j, i) * nl + col_k(j2, k)] += c2 * kk;
                            for c in 0..dd {
                                let nk = ws.nker[(i * n + k) * dd + c];
                                jm[row_b(j, i, c) * nl + col_p(j2, k)] += c2 * nk;
                                jm[row_c(j, i) * nl + col_r(j2, k, c)] += c2 * nk;
                                jm[row_d(j, i, c) * nl + col_r(j2, k, c)] += c2 * akk;
                                jm[row_d(j, i, c) * nl + col_k(j2, k)] += c2 * nk;
                            }
                        }
                    }
                }
            }
        }

        // ---- elevated time points: right-hand side of the curvature equation
        for (tq, &wt) in self.elev_time.weights.iter().enumerate() {
            let lj = &self.elev_time.test[tq];
            let lm = &self.elev_time.trial[tq];
            let dlm = &self.elev_time.dtrial[tq];
            ws.combine(lm, dlm, lj, tau);
            ws.rd.iter_mut().for_each(|v| *v = 0.0);
            if want {
                ws.kdf.iter_mut().for_each(|v| *v = 0.0);
            }
            for (sq, &w) in self.elev_sw.iter().enumerate() {
                let gr = self.elev_space.grads(sq);
                let f = tangents(d, &ws.xq, gr);
                let geom = CellGeometry::from_tangents(d, f)
                    .map_err(|det| (self.base_time.weights.len() + tq, det))?;
                let jw = geom.jac * w;
                let mut a = vec![[0.0; 2]; n];
                let mut lift = vec![[0.0; 3]; n];
                for i in 0..n {
                    let (ai, li) = lifted(&geom, &gr[i * d..(i + 1) * d]);
                    a[i] = ai;
                    lift[i] = li;
                }
                // ∇X_c reference gradients: the columns of F
                let gx: Vec<[f64; 2]> = (0..dd).map(|c| [geom.f[c][0], geom.f[c][1]]).collect();
                for i in 0..n {
                    for c in 0..dd {
                        ws.rd[i * dd + c] += jw * dot2(&a[i], &gx[c], d);
                    }
                }
                if !want {
                    continue;
                }
                let lx: Vec<([f64; 2], [f64; 3])> = (0..dd).map(|c| lifted(&geom, &gx[c])).collect();
                for i in 0..n {
                    let ai = a[i];
                    let li = lift[i];
                    let ai_x: Vec<f64> = (0..dd).map(|c| dot2(&ai, &gx[c], d)).collect();
                    for k in 0..n {
                        let gk = &gr[k * d..(k + 1) * d];
                        let aa = dot2(&ai, gk, d);
                        let lk = lift[k];
                        for cp in 0..dd {
                            for c in 0..dd {
                                let row = (i * dd + c) * nd + k * dd + cp;
                                let mut v = lk[cp] * ai_x[c] - aa * lx[c].1[cp] - li[cp] * dot2(gk, &lx[c].0, d);
                                if c == cp {
                                    v += aa;
                                }
                                ws.kdf[row] += jw * v;
                            }
                        }
                    }
                }
            }
            for j in 0..s {
                let cj = wt * lj[j];
                for i in 0..n {
                    for c in 0..dd {
                        res[row_d(j, i, c)] += cj * ws.rd[i * dd + c];
                    }
                }
            }
            let Some(jm) = jac.as_deref_mut() else { continue };
            for j in 0..s {
                let cj = wt * lj[j];
                for m in 0..s {
                    let cf = cj * lm[m + 1];
                    for i in 0..n {
                        for c in 0..dd {
                            let row = row_d(j, i, c) * nl;
                            for k in 0..n {
                                for cp in 0..dd {
                                    jm[row + col_x(m, k, cp)] += cf * ws.kdf[(i * dd + c) * nd + k * dd + cp];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Orthogonality, gradient norms and dissipation of a slab, with the base rules.
    pub fn slab_integrals(&self, state: &SlabState) -> Result<SlabIntegrals> {
        self.check_state(state)?;
        let dd = self.layout.ambient;
        let d = dd - 1;
        let n = self.nloc;
        let tau = state.tau();
        let sd = self.flow == FlowKind::Sd;
        let mut ws = Workspace::new(self.layout, n, d);
        let mut out = SlabIntegrals {
            orthogonality: 0.0,
            xdot_norm2: 0.0,
            r_norm2: 0.0,
            dissipation: 0.0,
        };
        for cell in 0..self.space.num_cells() {
            ws.gather(state, cell);
            for (tq, &wt) in self.base_time.weights.iter().enumerate() {
                let t = &self.base_time;
                ws.combine(&t.trial[tq], &t.dtrial[tq], &t.test[tq], tau);
                for (sq, &w) in self.base_sw.iter().enumerate() {
                    let phi = self.base_space.values(sq);
                    let gr = self.base_space.grads(sq);
                    let geom = CellGeometry::from_tangents(d, tangents(d, &ws.xq, gr)).map_err(|det| {
                        Error::DegenerateGeometry {
                            cell,
                            detail: format!("slab t0 = {}, time point {tq}, det G = {det:e}", state.t0()),
                        }
                    })?;
                    let pt = PointFields::new(&ws, &geom, phi, gr, n, d);
                    let ww = tau * wt * w * geom.jac;
                    for c in 0..dd {
                        let (bx, _) = lifted(&geom, &pt.gxdot[c]);
                        let (br, _) = lifted(&geom, &pt.gr[c]);
                        out.orthogonality += ww * dot2(&bx, &pt.gr[c], d);
                        out.xdot_norm2 += ww * dot2(&bx, &pt.gxdot[c], d);
                        out.r_norm2 += ww * dot2(&br, &pt.gr[c], d);
                    }
                    out.dissipation += if sd {
                        let (bk, _) = lifted(&geom, &pt.gk);
                        ww * dot2(&bk, &pt.gk, d)
                    } else {
                        ww * pt.kappa * pt.kappa
                    };
                }
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn dot2(a: &[f64], b: &[f64], d: usize) -> f64 {
    (0..d).map(|j| a[j] * b[j]).sum()
}

/// `(G⁻¹ g, F G⁻¹ g)`.
fn lifted(geom: &CellGeometry, g: &[f64]) -> ([f64; 2], [f64; 3]) {
    let d = geom.dim;
    let mut a = [0.0; 2];
    for i in 0..d {
        a[i] = (0..d).map(|j| geom.ginv[i][j] * g[j]).sum();
    }
    let mut l = [0.0; 3];
    for (c, lc) in l.iter_mut().enumerate().take(d + 1) {
        *lc = (0..d).map(|i| geom.f[c][i] * a[i]).sum();
    }
    (a, l)
}

/// `W_j(u)` with `u · δν = Σ_j g_j W_j(u)[c']` for the tangent variation
/// `δF = e_{c'} gᵀ`.
fn normal_variation_dot(geom: &CellGeometry, u: &[f64; 3]) -> [[f64; 3]; 2] {
    if geom.dim == 1 {
        [[-u[1], u[0], 0.0], [0.0; 3]]
    } else {
        let f0 = [geom.f[0][0], geom.f[1][0], geom.f[2][0]];
        let f1 = [geom.f[0][1], geom.f[1][1], geom.f[2][1]];
        [cross(&f1, u), cross(u, &f0)]
    }
}

/// `W_j(e_c)[c']` for every component `c`.
fn normal_variation_matrix(geom: &CellGeometry) -> [[[f64; 3]; 3]; 2] {
    let mut out = [[[0.0; 3]; 3]; 2];
    for c in 0..=geom.dim {
        let mut e = [0.0; 3];
        e[c] = 1.0;
        let w = normal_variation_dot(geom, &e);
        out[0][c] = w[0];
        out[1][c] = w[1];
    }
    out
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Cell-local coefficient storage and kernel scratch.
struct Workspace {
    layout: SlabLayout,
    n: usize,
    x0: Vec<f64>,
    // displacements per trial node, then p, R, κ per test node
    u: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    // values at the current time point
    xq: Vec<f64>,
    vq: Vec<f64>,
    pq: Vec<f64>,
    rq: Vec<f64>,
    kq: Vec<f64>,
    ra: Vec<f64>,
    rb: Vec<f64>,
    rc: Vec<f64>,
    rd: Vec<f64>,
    a_ker: Vec<f64>,
    mj: Vec<f64>,
    nker: Vec<f64>,
    kaf: Vec<f64>,
    kbf: Vec<f64>,
    kcf: Vec<f64>,
    kdf: Vec<f64>,
}

impl Workspace {
    fn new(layout: SlabLayout, n: usize, _d: usize) -> Self {
        let dd = layout.ambient;
        let s = layout.stages;
        let nd = n * dd;
        Self {
            layout,
            n,
            x0: vec![0.0; nd],
            u: vec![vec![0.0; nd]; s],
            p: vec![vec![0.0; n]; s],
            r: vec![vec![0.0; nd]; s],
            k: vec![vec![0.0; n]; s],
            xq: vec![0.0; nd],
            vq: vec![0.0; nd],
            pq: vec![0.0; n],
            rq: vec![0.0; nd],
            kq: vec![0.0; n],
            ra: vec![0.0; n],
            rb: vec![0.0; nd],
            rc: vec![0.0; n],
            rd: vec![0.0; nd],
            a_ker: vec![0.0; n * n],
            mj: vec![0.0; n * n],
            nker: vec![0.0; n * nd],
            kaf: vec![0.0; n * nd],
            kbf: vec![0.0; nd * nd],
            kcf: vec![0.0; n * nd],
            kdf: vec![0.0; nd * nd],
        }
    }

    fn gather(&mut self, state: &SlabState, cell: usize) {
        let l = self.layout;
        let dd = l.ambient;
        let dofs = state.space().cell_dofs(cell);
        let u = state.unknowns();
        state.incoming().gather(cell, &mut self.x0);
        for m in 0..l.stages {
            for (i, &g) in dofs.iter().enumerate() {
                self.p[m][i] = u[l.p(m, g)];
                self.k[m][i] = u[l.kappa(m, g)];
                for c in 0..dd {
                    self.u[m][i * dd + c] = u[l.x(m, g, c)];
                    self.r[m][i * dd + c] = u[l.r(m, g, c)];
                }
            }
        }
    }

    /// Nodal values at a time point from trial values `lm`, derivatives `dlm`
    /// and test values `lj`.
    fn combine(&mut self, lm: &[f64], dlm: &[f64], lj: &[f64], tau: f64) {
        let s = self.layout.stages;
        self.xq.copy_from_slice(&self.x0);
        self.vq.iter_mut().for_each(|v| *v = 0.0);
        for m in 0..s {
            let (a, b) = (lm[m + 1], dlm[m + 1] / tau);
            for (idx, &um) in self.u[m].iter().enumerate() {
                self.xq[idx] += a * um;
                self.vq[idx] += b * um;
            }
        }
        self.pq.iter_mut().for_each(|v| *v = 0.0);
        self.kq.iter_mut().for_each(|v| *v = 0.0);
        self.rq.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..s {
            for i in 0..self.n {
                self.pq[i] += lj[j] * self.p[j][i];
                self.kq[i] += lj[j] * self.k[j][i];
            }
            for (idx, &rv) in self.r[j].iter().enumerate() {
                self.rq[idx] += lj[j] * rv;
            }
        }
    }

    fn clear_kernels(&mut self, jac: bool) {
        for v in [&mut self.ra, &mut self.rb, &mut self.rc, &mut self.rd] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        if jac {
            for v in [
                &mut self.a_ker,
                &mut self.mj,
                &mut self.nker,
                &mut self.kaf,
                &mut self.kbf,
                &mut self.kcf,
                &mut self.kdf,
            ] {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }
}

/// Field values and reference gradients at one space-time point.
struct PointFields {
    xdot: [f64; 3],
    gxdot: [[f64; 2]; 3],
    p: f64,
    r: [f64; 3],
    gr: [[f64; 2]; 3],
    kappa: f64,
    gk: [f64; 2],
    a: Vec<[f64; 2]>,
    lift: Vec<[f64; 3]>,
}

impl PointFields {
    fn new(ws: &Workspace, geom: &CellGeometry, phi: &[f64], gr: &[f64], n: usize, d: usize) -> Self {
        let dd = d + 1;
        let mut pf = PointFields {
            xdot: [0.0; 3],
            gxdot: [[0.0; 2]; 3],
            p: 0.0,
            r: [0.0; 3],
            gr: [[0.0; 2]; 3],
            kappa: 0.0,
            gk: [0.0; 2],
            a: Vec::with_capacity(n),
            lift: Vec::with_capacity(n),
        };
        for l in 0..n {
            let g = &gr[l * d..(l + 1) * d];
            pf.p += phi[l] * ws.pq[l];
            pf.kappa += phi[l] * ws.kq[l];
            for j in 0..d {
                pf.gk[j] += ws.kq[l] * g[j];
            }
            for c in 0..dd {
                let v = ws.vq[l * dd + c];
                let r = ws.rq[l * dd + c];
                pf.xdot[c] += phi[l] * v;
                pf.r[c] += phi[l] * r;
                for j in 0..d {
                    pf.gxdot[c][j] += v * g[j];
                    pf.gr[c][j] += r * g[j];
                }
            }
            let (a, li) = lifted(geom, g);
            pf.a.push(a);
            pf.lift.push(li);
        }
        pf
    }
}

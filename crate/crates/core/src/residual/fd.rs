use super::{SlabAssembler, SlabState};
use crate::error::Result;

/// Central finite-difference Jacobian on the assembler's sparsity pattern.
///
/// Columns are grouped by a greedy distance-2 coloring, so each color costs two
/// residual evaluations. The step for column `j` is `h * (1 + |u_j|)`.
pub fn fd_jacobian(asm: &SlabAssembler, state: &SlabState, h: f64) -> Result<Vec<f64>> {
    let pat = asm.pattern();
    let ncols = pat.col_ptr.len() - 1;
    // row -> columns
    let mut row_ptr = vec![0usize; pat.nrows + 1];
    for &r in &pat.row_idx {
        row_ptr[r + 1] += 1;
    }
    for i in 0..pat.nrows {
        row_ptr[i + 1] += row_ptr[i];
    }
    let mut fill = row_ptr.clone();
    let mut row_cols = vec![0usize; pat.nnz()];
    for c in 0..ncols {
        for &r in &pat.row_idx[pat.col_ptr[c]..pat.col_ptr[c + 1]] {
            row_cols[fill[r]] = c;
            fill[r] += 1;
        }
    }
    let mut color = vec![usize::MAX; ncols];
    let mut mark: Vec<usize> = Vec::new();
    let mut ncolors = 0;
    for c in 0..ncols {
        mark.clear();
        for &r in &pat.row_idx[pat.col_ptr[c]..pat.col_ptr[c + 1]] {
            for &o in &row_cols[row_ptr[r]..row_ptr[r + 1]] {
                if color[o] != usize::MAX {
                    mark.push(color[o]);
                }
            }
        }
        mark.sort_unstable();
        mark.dedup();
        let mut pick = 0;
        for &m in &mark {
            if m == pick {
                pick += 1;
            } else if m > pick {
                break;
            }
        }
        color[c] = pick;
        ncolors = ncolors.max(pick + 1);
    }

    let mut vals = vec![0.0; pat.nnz()];
    let mut plus = state.clone();
    let mut minus = state.clone();
    let base = state.unknowns();
    for k in 0..ncolors {
        let cols: Vec<usize> = (0..ncols).filter(|&c| color[c] == k).collect();
        let steps: Vec<f64> = cols.iter().map(|&c| h * (1.0 + base[c].abs())).collect();
        for (&c, &st) in cols.iter().zip(&steps) {
            plus.unknowns_mut()[c] = base[c] + st;
            minus.unknowns_mut()[c] = base[c] - st;
        }
        let rp = asm.residual(&plus)?;
        let rm = asm.residual(&minus)?;
        for (&c, &st) in cols.iter().zip(&steps) {
            for idx in pat.col_ptr[c]..pat.col_ptr[c + 1] {
                let r = pat.row_idx[idx];
                vals[idx] = (rp[r] - rm[r]) / (2.0 * st);
            }
            plus.unknowns_mut()[c] = base[c];
            minus.unknowns_mut()[c] = base[c];
        }
    }
    Ok(vals)
}

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::perm::PermRef;
use faer::sparse::linalg::lu::supernodal::{self, SupernodalLu, SymbolicSupernodalLu};
use faer::sparse::linalg::{amd, qr, SymbolicSupernodalParams};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Mat, Par};

use crate::error::{Error, Result};

/// Square or rectangular matrix in compressed-column form.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut t: Vec<(usize, usize, f64)> = triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx: Vec<usize> = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in t {
            if last == Some((c, r)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            values.push(v);
            last = Some((c, r));
        }
        for i in 0..ncols {
            col_ptr[i + 1] += col_ptr[i];
        }
        Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * x[c];
            }
        }
        y
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.ncols)
            .map(|c| self.values[self.col_ptr[c]..self.col_ptr[c + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Sparse LU with partial pivoting whose symbolic analysis is computed once
/// per pattern. Columns are ordered by approximate minimum degree on the
/// pattern of `AᵀA`, which bounds the fill of any row pivoting sequence.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    at_col_ptr: Vec<usize>,
    at_row_idx: Vec<usize>,
    /// Source position in the value array of each transpose entry.
    at_src: Vec<usize>,
    perm_fwd: Vec<usize>,
    perm_inv: Vec<usize>,
    symbolic: SymbolicSupernodalLu<usize>,
}

/// Numeric factors of one matrix on a [`SparseLu`] pattern.
#[derive(Debug, Clone)]
pub struct LuFactors<'a> {
    pattern: &'a SparseLu,
    values: Vec<f64>,
    lu: SupernodalLu<usize, f64>,
    row_fwd: Vec<usize>,
    row_inv: Vec<usize>,
}

fn scratch(req: StackReq) -> MemBuffer {
    MemBuffer::new(req)
}

impl SparseLu {
    pub fn new(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Result<Self> {
        if col_ptr.len() != n + 1 || col_ptr[n] != row_idx.len() {
            return Err(Error::InvalidInput("malformed compressed-column pattern".into()));
        }
        let a = SymbolicSparseColMatRef::new_checked(n, n, col_ptr, None, row_idx);

        let mut at_col_ptr = vec![0usize; n + 1];
        for &r in row_idx {
            at_col_ptr[r + 1] += 1;
        }
        for i in 0..n {
            at_col_ptr[i + 1] += at_col_ptr[i];
        }
        let mut fill = at_col_ptr.clone();
        let mut at_row_idx = vec![0usize; row_idx.len()];
        let mut at_src = vec![0usize; row_idx.len()];
        for c in 0..n {
            for k in col_ptr[c]..col_ptr[c + 1] {
                let r = row_idx[k];
                at_row_idx[fill[r]] = c;
                at_src[fill[r]] = k;
                fill[r] += 1;
            }
        }

        // pattern of AᵀA: columns sharing a row
        let mut ata: Vec<Vec<usize>> = vec![Vec::new(); n];
        for r in 0..n {
            let cols = &at_row_idx[at_col_ptr[r]..at_col_ptr[r + 1]];
            for &c1 in cols {
                ata[c1].extend_from_slice(cols);
            }
        }
        let mut ata_ptr = vec![0usize];
        let mut ata_idx = Vec::new();
        for c in ata.iter_mut() {
            c.sort_unstable();
            c.dedup();
            ata_idx.extend_from_slice(c);
            ata_ptr.push(ata_idx.len());
        }
        drop(ata);
        let mut perm_fwd = vec![0usize; n];
        let mut perm_inv = vec![0usize; n];
        amd::order(
            &mut perm_fwd,
            &mut perm_inv,
            SymbolicSparseColMatRef::new_checked(n, n, &ata_ptr, None, &ata_idx),
            amd::Control::default(),
            MemStack::new(&mut scratch(amd::order_scratch::<usize>(n, ata_idx.len()))),
        )
        .map_err(|e| Error::SingularMatrix(format!("ordering failed: {e:?}")))?;

        let perm = PermRef::new_checked(&perm_fwd, &perm_inv, n);
        let at = SymbolicSparseColMatRef::new_checked(n, n, &at_col_ptr, None, &at_row_idx);
        let mut etree = vec![0usize; n];
        let mut post = vec![0usize; n];
        let mut col_counts = vec![0usize; n];
        let mut min_col = vec![0usize; n];
        let et = qr::col_etree(
            a,
            Some(perm),
            &mut etree,
            MemStack::new(&mut scratch(qr::col_etree_scratch::<usize>(n, n))),
        );
        qr::postorder(&mut post, et, MemStack::new(&mut scratch(qr::postorder_scratch::<usize>(n))));
        qr::column_counts_ata(
            &mut col_counts,
            &mut min_col,
            at,
            Some(perm),
            et,
            &post,
            MemStack::new(&mut scratch(qr::column_counts_aat_scratch::<usize>(n, n))),
        );
        let symbolic = supernodal::factorize_supernodal_symbolic_lu::<usize>(
            a,
            Some(perm),
            &min_col,
            et,
            &col_counts,
            MemStack::new(&mut scratch(supernodal::factorize_supernodal_symbolic_lu_scratch::<usize>(n, n))),
            SymbolicSupernodalParams::default(),
        )
        .map_err(|e| Error::SingularMatrix(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Self {
            n,
            col_ptr: col_ptr.to_vec(),
            row_idx: row_idx.to_vec(),
            at_col_ptr,
            at_row_idx,
            at_src,
            perm_fwd,
            perm_inv,
            symbolic,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn perm(&self) -> PermRef<'_, usize> {
        PermRef::new_checked(&self.perm_fwd, &self.perm_inv, self.n)
    }

    /// Numeric factorization of the matrix with `values` on this pattern.
    pub fn factor(&self, values: &[f64]) -> Result<LuFactors<'_>> {
        if values.len() != self.row_idx.len() {
            return Err(Error::InvalidInput("value array does not match the pattern".into()));
        }
        let n = self.n;
        let a = SparseColMatRef::new(
            SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx),
            values,
        );
        let at_values: Vec<f64> = self.at_src.iter().map(|&k| values[k]).collect();
        let at = SparseColMatRef::new(
            SymbolicSparseColMatRef::new_checked(n, n, &self.at_col_ptr, None, &self.at_row_idx),
            &at_values,
        );
        let mut lu = SupernodalLu::new();
        let mut row_fwd = vec![0usize; n];
        let mut row_inv = vec![0usize; n];
        supernodal::factorize_supernodal_numeric_lu(
            &mut row_fwd,
            &mut row_inv,
            &mut lu,
            a,
            at,
            self.perm(),
            &self.symbolic,
            Par::Seq,
            MemStack::new(&mut scratch(supernodal::factorize_supernodal_numeric_lu_scratch::<usize, f64>(
                &self.symbolic,
                Default::default(),
            ))),
            Default::default(),
        )
        .map_err(|e| Error::SingularMatrix(format!("{e:?}")))?;
        Ok(LuFactors {
            pattern: self,
            values: values.to_vec(),
            lu,
            row_fwd,
            row_inv,
        })
    }

    /// Factors and solves `A x = b` in one go.
    pub fn solve(&self, values: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        self.factor(values)?.solve(b)
    }
}

impl LuFactors<'_> {
    fn apply_inverse(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.pattern.n;
        let mut m = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place_with_conj(
            PermRef::new_checked(&self.row_fwd, &self.row_inv, n),
            self.pattern.perm(),
            Conj::No,
            m.as_mut(),
            Par::Seq,
            MemStack::new(&mut scratch(supernodal::solve_in_place_scratch::<usize, f64>(n, 1, Par::Seq))),
        );
        (0..n).map(|i| m[(i, 0)]).collect()
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let p = self.pattern;
        let mut r = b.to_vec();
        for c in 0..p.n {
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                r[p.row_idx[k]] -= self.values[k] * x[c];
            }
        }
        r
    }

    /// Solves `A x = b` with up to two steps of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.pattern.n {
            return Err(Error::InvalidInput("right-hand side length".into()));
        }
        let mut x = self.apply_inverse(b);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix("non-finite solution".into()));
        }
        let p = self.pattern;
        let norm_a = (0..p.n)
            .map(|c| self.values[p.col_ptr[c]..p.col_ptr[c + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let norm_b = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for _ in 0..2 {
            let r = self.residual(&x, b);
            let norm_r = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let norm_x = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if norm_r <= 1e-14 * (norm_a * norm_x + norm_b) {
                break;
            }
            let dx = self.apply_inverse(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        Ok(x)
    }
}

/// One-shot direct solve of `A x = b`.
pub fn linear_solve(a: &CscMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows != a.ncols || b.len() != a.nrows {
        return Err(Error::InvalidInput(format!(
            "system of shape {}x{} with right-hand side of length {}",
            a.nrows,
            a.ncols,
            b.len()
        )));
    }
    SparseLu::new(a.nrows, &a.col_ptr, &a.row_idx)?.solve(&a.values, b)
}

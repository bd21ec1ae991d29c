use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, SpaceField};
use crate::refmesh::QuadratureRule;
use crate::residual::{FlowSpec, SlabAssembler, SlabState};

/// Structure diagnostics of one accepted slab, evaluated at its end time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "S_norm")]
    pub s_norm: f64,
    #[serde(rename = "V")]
    pub v: f64,
    /// `|V(t) - V(0)| / |V(0)|`.
    #[serde(rename = "dV_rel")]
    pub dv_rel: f64,
    pub rh: f64,
    /// `|S(t_{n+1}) - S(t_n) + D_n|`.
    pub diss_res: f64,
    /// `|∫(∇Ẋ, ∇R)|` over `max(1, ‖∇Ẋ‖ ‖∇R‖)`.
    pub orth_res: f64,
    pub newton_its: usize,
}

pub const LEDGER_HEADER: [&str; 9] = ["t", "S", "S_norm", "V", "dV_rel", "rh", "diss_res", "orth_res", "newton_its"];

impl LedgerRow {
    pub fn is_finite(&self) -> bool {
        [self.t, self.s, self.s_norm, self.v, self.dv_rel, self.rh, self.diss_res, self.orth_res]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Reference quantities of a run for building ledger rows.
#[derive(Debug, Clone)]
pub struct LedgerContext {
    x0: SpaceField,
    s0: f64,
    v0: f64,
    base_space: QuadratureRule,
    elevated_space: QuadratureRule,
}

impl LedgerContext {
    pub fn new(x0: &SpaceField, spec: &FlowSpec) -> Result<Self> {
        let base_space = spec.policy.base_space.clone();
        let elevated_space = spec.policy.elevated_space.clone();
        Ok(Self {
            x0: x0.clone(),
            s0: geometry::area(x0, &elevated_space)?,
            v0: geometry::volume(x0, &base_space)?,
            base_space,
            elevated_space,
        })
    }

    pub fn initial_area(&self) -> f64 {
        self.s0
    }

    pub fn initial_volume(&self) -> f64 {
        self.v0
    }

    /// Area as the ledger measures it.
    pub fn area(&self, x: &SpaceField) -> Result<f64> {
        geometry::area(x, &self.elevated_space)
    }

    /// Row for the slab `state`, which starts from `prev` with area `prev_area`.
    pub fn entry(
        &self,
        asm: &SlabAssembler,
        prev_area: f64,
        state: &SlabState,
        newton_its: usize,
    ) -> Result<LedgerRow> {
        let x = state.terminal_x();
        let s = self.area(&x)?;
        let v = geometry::volume(&x, &self.base_space)?;
        let ints = asm.slab_integrals(state)?;
        let norms = (ints.xdot_norm2 * ints.r_norm2).sqrt();
        Ok(LedgerRow {
            t: state.t0() + state.tau(),
            s,
            s_norm: s / self.s0,
            v,
            dv_rel: (v - self.v0).abs() / self.v0.abs(),
            rh: geometry::mesh_quality(&x, &self.x0, &self.base_space)?,
            diss_res: (s - prev_area + ints.dissipation).abs(),
            orth_res: ints.orthogonality.abs() / norms.max(1.0),
            newton_its,
        })
    }
}

/// One-off ledger row for a converged slab starting from `prev`.
pub fn ledger_entry(
    prev: &SpaceField,
    state: &SlabState,
    spec: &FlowSpec,
    x0: &SpaceField,
    newton_its: usize,
) -> Result<LedgerRow> {
    let ctx = LedgerContext::new(x0, spec)?;
    let asm = SlabAssembler::new(prev.space().clone(), spec)?;
    ctx.entry(&asm, ctx.area(prev)?, state, newton_its)
}

/// Streams ledger rows as CSV with the fixed header. Floats are written in
/// shortest round-trip form.
pub struct LedgerWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> LedgerWriter<W> {
    pub fn new(w: W) -> Self {
        Self {
            inner: csv::WriterBuilder::new().has_headers(true).from_writer(w),
        }
    }

    pub fn write(&mut self, row: &LedgerRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::from(e.into_error()))
    }
}

pub fn write_ledger<W: Write>(w: W, rows: &[LedgerRow]) -> Result<()> {
    let mut lw = LedgerWriter::new(w);
    if rows.is_empty() {
        lw.inner.write_record(LEDGER_HEADER).map_err(csv_error)?;
    }
    for r in rows {
        lw.write(r)?;
    }
    lw.into_inner()?;
    Ok(())
}

pub fn read_ledger<R: Read>(r: R) -> Result<Vec<LedgerRow>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if header != LEDGER_HEADER {
        return Err(Error::Parse(format!("unexpected ledger header {header:?}")));
    }
    rd.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("ledger csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_lossless() {
        let rows = vec![
            LedgerRow {
                t: 1e-5,
                s: 12.566370614359172,
                s_norm: 0.9999999999999999,
                v: 4.1887902047863905,
                dv_rel: 3.1e-17,
                rh: 1.0000000000000002,
                diss_res: 2.2250738585072014e-308,
                orth_res: 0.1 + 0.2,
                newton_its: 3,
            },
            LedgerRow {
                t: 2e-5,
                s: 1.0 / 3.0,
                s_norm: f64::MIN_POSITIVE,
                v: -0.0,
                dv_rel: 0.0,
                rh: 2.5,
                diss_res: 1e300,
                orth_res: 5e-324,
                newton_its: 0,
            },
        ];
        let mut buf = Vec::new();
        write_ledger(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,S,S_norm,V,dV_rel,rh,diss_res,orth_res,newton_its\n"));
        let back = read_ledger(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.s.to_bits(), b.s.to_bits());
            assert_eq!(a.orth_res.to_bits(), b.orth_res.to_bits());
            assert_eq!(a.s_norm.to_bits(), b.s_norm.to_bits());
        }
        assert_eq!(rows, back);
    }

    #[test]
    fn empty_ledger_has_header() {
        let mut buf = Vec::new();
        write_ledger(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), LEDGER_HEADER.join(","));
    }

    #[test]
    fn comment_lines_are_skipped() {
        let text = "# config abc\nt,S,S_norm,V,dV_rel,rh,diss_res,orth_res,newton_its\n0.1,1,1,1,0,1,0,0,2\n";
        let rows = read_ledger(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].newton_its, 2);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(read_ledger("t,S\n1,2\n".as_bytes()).is_err());
    }
}

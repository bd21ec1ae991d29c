use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::SpaceField;
use crate::refmesh::FunctionSpace;

pub const CHECKPOINT_HEADER: &str = "GEOMFLOW-CKPT v1";

/// Everything needed to resume a run after slab `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Hash of the configuration that produced the run.
    pub config_hash: String,
    pub step: usize,
    pub tau: f64,
    pub x0: Vec<f64>,
    pub x: Vec<f64>,
    /// Terminal `p`, `R`, `κ` of the last slab; empty before the first one.
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub kappa: Vec<f64>,
}

/// `0x1.8p1` style hexadecimal float, exact for every value.
pub fn format_hexfloat(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let man = bits & ((1u64 << 52) - 1);
    if exp == 0 && man == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let mut digits = format!("{man:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    if digits.is_empty() {
        format!("{sign}0x{lead}p{e:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{e:+}")
    }
}

pub fn parse_hexfloat(s: &str) -> Result<f64> {
    let bad = || Error::Parse(format!("invalid hexadecimal float `{s}`"));
    match s {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let rest = rest.strip_prefix("0x").ok_or_else(bad)?;
    let (mant, exp) = rest.split_once('p').ok_or_else(bad)?;
    let exp: i64 = exp.parse().map_err(|_| bad())?;
    let (lead, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if frac.len() > 13 || !matches!(lead, "0" | "1") {
        return Err(bad());
    }
    let frac_bits = if frac.is_empty() {
        0
    } else {
        u64::from_str_radix(frac, 16).map_err(|_| bad())? << (4 * (13 - frac.len()))
    };
    let bits = match (lead, exp) {
        ("0", _) if frac_bits == 0 => 0,
        ("0", -1022) => frac_bits,
        ("1", -1022..=1023) => (((exp + 1023) as u64) << 52) | frac_bits,
        _ => return Err(bad()),
    };
    let v = f64::from_bits(bits);
    Ok(if neg { -v } else { v })
}

fn write_array(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "array {name} {}", values.len());
    for chunk in values.chunks(4) {
        let line: Vec<String> = chunk.iter().map(|v| format_hexfloat(*v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_HEADER}");
        let hash = if self.config_hash.is_empty() { "-" } else { &self.config_hash };
        let _ = writeln!(out, "hash {hash}");
        let _ = writeln!(out, "step {}", self.step);
        let _ = writeln!(out, "tau {}", format_hexfloat(self.tau));
        write_array(&mut out, "x0", &self.x0);
        write_array(&mut out, "x", &self.x);
        write_array(&mut out, "p", &self.p);
        write_array(&mut out, "r", &self.r);
        write_array(&mut out, "kappa", &self.kappa);
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Parse(format!("checkpoint ends before {what}")));
        if next("header")? != CHECKPOINT_HEADER {
            return Err(Error::Parse(format!("not a `{CHECKPOINT_HEADER}` file")));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("expected `{key}` line, found `{line}`")))
        };
        let hash = field(next("hash")?, "hash")?;
        let step = field(next("step")?, "step")?
            .parse()
            .map_err(|_| Error::Parse("bad step".into()))?;
        let tau = parse_hexfloat(&field(next("tau")?, "tau")?)?;
        let mut arrays: Vec<Vec<f64>> = Vec::new();
        for name in ["x0", "x", "p", "r", "kappa"] {
            let head = field(next(name)?, "array")?;
            let (got, count) = head
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("bad array header `{head}`")))?;
            if got != name {
                return Err(Error::Parse(format!("expected array `{name}`, found `{got}`")));
            }
            let count: usize = count.parse().map_err(|_| Error::Parse(format!("bad count for `{name}`")))?;
            let mut values = Vec::with_capacity(count);
            while values.len() < count {
                for tok in next(name)?.split_whitespace() {
                    values.push(parse_hexfloat(tok)?);
                }
            }
            if values.len() != count {
                return Err(Error::Parse(format!("array `{name}` has {} values, expected {count}", values.len())));
            }
            arrays.push(values);
        }
        if next("end")? != "end" {
            return Err(Error::Parse("missing `end`".into()));
        }
        let mut it = arrays.into_iter();
        let mut take = || it.next().expect("five arrays");
        Ok(Self {
            config_hash: if hash == "-" { String::new() } else { hash },
            step,
            tau,
            x0: take(),
            x: take(),
            p: take(),
            r: take(),
            kappa: take(),
        })
    }

    pub(crate) fn field(space: &Arc<FunctionSpace>, components: usize, values: &[f64]) -> Result<SpaceField> {
        SpaceField::from_values(space.clone(), components, values.to_vec())
    }
}

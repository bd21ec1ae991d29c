//! Continuous Petrov-Galerkin time slabs: nodal trial/test bases on the unit
//! slab `[0, 1]`, polynomial-in-time fields and the quadrature policy.
//!
//! Trial functions (degree `s`) are nodal at `{0} ∪ {s Gauss points}`, so the
//! coefficient at node 0 is the incoming state. Test functions (degree `s-1`)
//! are nodal at the `s` Gauss points.

use crate::error::{Error, Result};
use crate::geometry::{self, SpaceField};
use crate::refmesh::quadrature::gauss_legendre_nodes;
use crate::refmesh::{simplex_quadrature, time_quadrature, QuadratureRule, TimeRuleKind};

/// Lagrange basis on `[0, 1]` through distinct nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBasis {
    nodes: Vec<f64>,
}

impl TimeBasis {
    pub fn new(nodes: Vec<f64>) -> Self {
        assert!(!nodes.is_empty());
        Self { nodes }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Polynomial degree of the space.
    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = &self.nodes;
        (0..n.len())
            .map(|i| {
                (0..n.len())
                    .filter(|&j| j != i)
                    .map(|j| (t - n[j]) / (n[i] - n[j]))
                    .product()
            })
            .collect()
    }

    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        let n = &self.nodes;
        (0..n.len())
            .map(|i| {
                let mut sum = 0.0;
                for m in 0..n.len() {
                    if m == i {
                        continue;
                    }
                    let mut p = 1.0 / (n[i] - n[m]);
                    for j in 0..n.len() {
                        if j != i && j != m {
                            p *= (t - n[j]) / (n[i] - n[j]);
                        }
                    }
                    sum += p;
                }
                sum
            })
            .collect()
    }
}

/// Degree-`s` trial basis with nodes `{0} ∪ Gauss(s)`.
pub fn trial_basis(s: usize) -> TimeBasis {
    assert!(s >= 1, "at least one stage");
    let mut nodes = vec![0.0];
    nodes.extend(gauss_legendre_nodes(s));
    TimeBasis::new(nodes)
}

/// Degree-`(s-1)` test basis with nodes at the `s` Gauss points.
pub fn test_basis(s: usize) -> TimeBasis {
    assert!(s >= 1, "at least one stage");
    TimeBasis::new(gauss_legendre_nodes(s))
}

/// Polynomial in time with `SpaceField` coefficients in a nodal basis.
#[derive(Debug, Clone)]
pub struct TimePolyField {
    basis: TimeBasis,
    coeffs: Vec<SpaceField>,
    t0: f64,
    t1: f64,
}

impl TimePolyField {
    pub fn new(basis: TimeBasis, coeffs: Vec<SpaceField>, t0: f64, t1: f64) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a basis of {} functions",
                coeffs.len(),
                basis.len()
            )));
        }
        if !(t1 > t0) {
            return Err(Error::Precondition(format!("empty slab [{t0}, {t1}]")));
        }
        Ok(Self { basis, coeffs, t0, t1 })
    }

    pub fn basis(&self) -> &TimeBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[SpaceField] {
        &self.coeffs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn tau(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Value at unit-slab time `theta`.
    pub fn eval(&self, theta: f64) -> SpaceField {
        combine(&self.coeffs, &self.basis.eval(theta))
    }

    /// Physical time derivative, represented in the Gauss-node basis of one
    /// degree lower (exact, since the derivative has that degree).
    pub fn derivative(&self) -> TimePolyField {
        let target = TimeBasis::new(gauss_legendre_nodes(self.basis.degree().max(1)));
        let inv_tau = 1.0 / self.tau();
        let coeffs = target
            .nodes()
            .iter()
            .map(|&t| {
                let w: Vec<f64> = self.basis.eval_derivative(t).iter().map(|d| d * inv_tau).collect();
                combine(&self.coeffs, &w)
            })
            .collect();
        TimePolyField {
            basis: target,
            coeffs,
            t0: self.t0,
            t1: self.t1,
        }
    }
}

fn combine(fields: &[SpaceField], w: &[f64]) -> SpaceField {
    let mut out = fields[0].map(|v| v * w[0]);
    for (f, &wi) in fields.iter().zip(w).skip(1) {
        out = out.axpy(wi, f);
    }
    out
}

/// Quadrature rules used on a slab.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraturePolicy {
    /// Rule for every matched pair of terms.
    pub base_time: QuadratureRule,
    /// Rule for the `(∇X, ∇Λ)` right-hand side of the curvature equation.
    pub elevated_time: QuadratureRule,
    pub base_space: QuadratureRule,
    pub elevated_space: QuadratureRule,
}

/// Knobs behind [`QuadraturePolicy`]; `None` selects the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PolicyOverrides {
    pub time_rule_points: Option<usize>,
    pub elevation_points: Option<usize>,
    pub spatial_degree: Option<usize>,
    pub spatial_elevation: Option<usize>,
}

/// Minimum base-rule time exactness degree `ds + 2s - 2`.
pub fn required_time_degree(d: usize, s: usize) -> usize {
    d * s + 2 * s - 2
}

/// Gauss points for the base time rule: `ceil((ds + 2s - 1) / 2)`.
pub fn default_time_points(d: usize, s: usize) -> usize {
    (d * s + 2 * s - 1).div_ceil(2)
}

pub const DEFAULT_ELEVATION_POINTS: usize = 3;

/// Default extra spatial degree for the elevated rule. Linear elements have
/// cellwise-constant metric terms, which every rule integrates exactly.
pub fn default_spatial_elevation(k: usize) -> usize {
    if k >= 2 {
        4
    } else {
        0
    }
}

pub fn default_policy(d: usize, k: usize, s: usize) -> Result<QuadraturePolicy> {
    policy_with(d, k, s, PolicyOverrides::default())
}

pub fn policy_with(d: usize, k: usize, s: usize, o: PolicyOverrides) -> Result<QuadraturePolicy> {
    if !(d == 1 || d == 2) || k == 0 || s == 0 {
        return Err(Error::Precondition(format!("invalid (d, k, s) = ({d}, {k}, {s})")));
    }
    let q = o.time_rule_points.unwrap_or_else(|| default_time_points(d, s));
    if 2 * q - 1 < required_time_degree(d, s) {
        return Err(Error::config(
            "time_rule_points",
            format!(
                "{q} Gauss points integrate degree {}, below the required {}",
                2 * q - 1,
                required_time_degree(d, s)
            ),
        ));
    }
    let elev = o.elevation_points.unwrap_or(DEFAULT_ELEVATION_POINTS);
    let sdeg = o.spatial_degree.unwrap_or_else(|| geometry::default_spatial_degree(d, k));
    let selev = o.spatial_elevation.unwrap_or_else(|| default_spatial_elevation(k));
    Ok(QuadraturePolicy {
        base_time: time_quadrature(TimeRuleKind::Gauss, q)?,
        elevated_time: time_quadrature(TimeRuleKind::Gauss, q + elev)?,
        base_space: simplex_quadrature(d, sdeg)?,
        elevated_space: simplex_quadrature(d, sdeg + selev)?,
    })
}

/// Slab integral of `(Ẋ·ν, y)` by `time_rule`, and the same quantity written as
/// `((X(1) - X(0))·ν̂, y)` with the Simpson-averaged normal
/// `ν̂ = (ν(0) + 4ν(1/2) + ν(1)) / 6`. Time derivatives are taken on the unit
/// slab. Requires a surface (`d = 2`) and a linear-in-time `X`.
pub fn intermediate_normal_check(
    x: &TimePolyField,
    y: &SpaceField,
    time_rule: &QuadratureRule,
    space_rule: &QuadratureRule,
) -> Result<(f64, f64)> {
    let space = y.space();
    if space.dim() != 2 || x.basis().degree() != 1 {
        return Err(Error::Precondition(
            "intermediate-normal check needs d = 2 and a single stage".into(),
        ));
    }
    let tau = x.tau();
    let xdot = x.derivative();
    // Ẋ is constant in time for a single stage
    let v = xdot.coeffs()[0].map(|c| c * tau);
    let pairing = |pos: &SpaceField, vel: &SpaceField| -> f64 { normal_pairing(pos, vel, y, space_rule) };
    let mut lhs = 0.0;
    for (t, w) in time_rule.iter() {
        lhs += w * pairing(&x.eval(t[0]), &v);
    }
    let x0 = x.eval(0.0);
    let xm = x.eval(0.5);
    let x1 = x.eval(1.0);
    let jump = x1.axpy(-1.0, &x0);
    let rhs = (pairing(&x0, &jump) + 4.0 * pairing(&xm, &jump) + pairing(&x1, &jump)) / 6.0;
    Ok((lhs, rhs))
}

/// `Σ w (V·ν(X), y)` over the reference mesh.
pub fn normal_pairing(x: &SpaceField, v: &SpaceField, y: &SpaceField, rule: &QuadratureRule) -> f64 {
    let space = x.space();
    let d = space.dim();
    let amb = d + 1;
    let n = space.nodes_per_cell();
    let table = space.element().tabulate(rule);
    let (mut xc, mut vc, mut yc) = (vec![0.0; n * amb], vec![0.0; n * amb], vec![0.0; n]);
    let mut total = 0.0;
    for c in 0..space.num_cells() {
        x.gather(c, &mut xc);
        v.gather(c, &mut vc);
        y.gather(c, &mut yc);
        for q in 0..rule.len() {
            let nu = geometry::raw_normal(d, &geometry::tangents(d, &xc, table.grads(q)));
            let phi = table.values(q);
            let mut vq = [0.0; 3];
            let mut yq = 0.0;
            for l in 0..n {
                yq += phi[l] * yc[l];
                for a in 0..amb {
                    vq[a] += phi[l] * vc[l * amb + a];
                }
            }
            total += rule.weight(q) * yq * (0..amb).map(|a| vq[a] * nu[a]).sum::<f64>();
        }
    }
    total
}

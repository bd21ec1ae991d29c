//! Quadrature on the reference interval `[0, 1]` and the reference triangle
//! `{(x, y) : x, y >= 0, x + y <= 1}`.
//!
//! Gauss-type nodes are the eigenvalues of the Jacobi matrix of the relevant
//! orthogonal polynomial family, isolated by Sturm-sequence bisection and then
//! polished with Newton on the three-term recurrence. Triangle rules are
//! collapsed (conical) products of Gauss-Legendre and Gauss-Jacobi(1, 0)
//! rules, so every weight is positive and every point is interior.

use crate::error::{Error, Result};

/// Highest polynomial degree any rule in this module is built for.
pub const MAX_DEGREE: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    degree: usize,
}

impl QuadratureRule {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>, degree: usize) -> Self {
        assert_eq!(points.len(), dim * weights.len());
        Self {
            dim,
            points,
            weights,
            degree,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks(self.dim.max(1))
            .zip(self.weights.iter().copied())
    }

    /// Integrates `f` over the reference cell.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeRuleKind {
    Gauss,
    Lobatto,
}

/// Positive-weight rule on the reference simplex of dimension `dim`,
/// exact for polynomials of total degree `degree`.
pub fn simplex_quadrature(dim: usize, degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::Capability(format!(
            "simplex quadrature of degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    let n = degree / 2 + 1;
    match dim {
        1 => {
            let (x, w) = gauss_jacobi_unit(n, 0, 0);
            Ok(QuadratureRule::new(1, x, w, degree))
        }
        2 => {
            let (xa, wa) = gauss_jacobi_unit(n, 0, 0);
            let (xb, wb) = gauss_jacobi_unit(n, 1, 0);
            let mut points = Vec::with_capacity(2 * n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (b, w_b) in xb.iter().zip(&wb) {
                for (a, w_a) in xa.iter().zip(&wa) {
                    points.push(a * (1.0 - b));
                    points.push(*b);
                    weights.push(w_a * w_b);
                }
            }
            Ok(QuadratureRule::new(2, points, weights, degree))
        }
        _ => Err(Error::Capability(format!(
            "simplex quadrature in dimension {dim}"
        ))),
    }
}

/// Rule on `[0, 1]` for time integration.
pub fn time_quadrature(kind: TimeRuleKind, points: usize) -> Result<QuadratureRule> {
    match kind {
        TimeRuleKind::Gauss => {
            if points == 0 || 2 * points - 1 > MAX_DEGREE {
                return Err(Error::Capability(format!(
                    "Gauss rule with {points} points"
                )));
            }
            let (x, w) = gauss_jacobi_unit(points, 0, 0);
            Ok(QuadratureRule::new(1, x, w, 2 * points - 1))
        }
        TimeRuleKind::Lobatto => {
            if points < 2 || 2 * points - 3 > MAX_DEGREE {
                return Err(Error::Capability(format!(
                    "Gauss-Lobatto rule with {points} points"
                )));
            }
            let (x, w) = gauss_lobatto_unit(points);
            Ok(QuadratureRule::new(1, x, w, 2 * points - 3))
        }
    }
}

/// Gauss-Legendre nodes on `[0, 1]`, ascending.
pub fn gauss_legendre_nodes(n: usize) -> Vec<f64> {
    gauss_jacobi_unit(n, 0, 0).0
}

/// Jacobi polynomial `P_n^{(a,b)}(x)` and its derivative.
pub(crate) fn jacobi(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    let value = |n: usize, a: f64, b: f64| -> f64 {
        if n == 0 {
            return 1.0;
        }
        let mut p0 = 1.0;
        let mut p1 = 0.5 * ((a + b + 2.0) * x + (a - b));
        for k in 2..=n {
            let k = k as f64;
            let c = 2.0 * k + a + b;
            let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
            let a2 = (c - 1.0) * (c * (c - 2.0) * x + a * a - b * b);
            let a3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
            let p2 = (a2 * p1 - a3 * p0) / a1;
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    let p = value(n, a, b);
    let dp = if n == 0 {
        0.0
    } else {
        0.5 * (n as f64 + a + b + 1.0) * value(n - 1, a + 1.0, b + 1.0)
    };
    (p, dp)
}

/// Eigenvalues of the symmetric tridiagonal Jacobi matrix, ascending.
fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    // number of eigenvalues strictly below x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..n {
            let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if count_below(mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Gauss-Jacobi nodes/weights on `[-1, 1]` for integer exponents.
fn gauss_jacobi(n: usize, alpha: u32, beta: u32) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = (alpha as f64, beta as f64);
    let diag: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            let c = 2.0 * k + a + b;
            if k == 0.0 {
                (b - a) / (a + b + 2.0)
            } else {
                (b * b - a * a) / (c * (c + 2.0))
            }
        })
        .collect();
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            let c = 2.0 * k + a + b;
            (4.0 * k * (k + a) * (k + b) * (k + a + b) / (c * c * (c + 1.0) * (c - 1.0))).sqrt()
        })
        .collect();
    let mut nodes = tridiagonal_eigenvalues(&diag, &off);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = jacobi(n, a, b, *x);
            let dx = p / dp;
            *x -= dx;
            if dx.abs() < 1e-17 {
                break;
            }
        }
    }
    // Gamma(n+a+1) Gamma(n+b+1) / (Gamma(n+a+b+1) n!) for integer a, b
    let mut scale = 2f64.powi((alpha + beta + 1) as i32);
    for j in 1..=alpha {
        scale *= (n as f64) + j as f64;
    }
    for j in 1..=alpha {
        scale /= (n as f64) + b + j as f64;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (_, dp) = jacobi(n, a, b, x);
            scale / ((1.0 - x * x) * dp * dp)
        })
        .collect();
    (nodes, weights)
}

fn gauss_jacobi_unit(n: usize, alpha: u32, beta: u32) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_jacobi(n, alpha, beta);
    let factor = 2f64.powi((alpha + beta + 1) as i32);
    (
        x.iter().map(|x| 0.5 * (1.0 + x)).collect(),
        w.iter().map(|w| w / factor).collect(),
    )
}

fn gauss_lobatto_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![-1.0];
    if n > 2 {
        x.extend(gauss_jacobi(n - 2, 1, 1).0);
    }
    x.push(1.0);
    let nf = n as f64;
    let w: Vec<f64> = x
        .iter()
        .map(|&x| {
            let (p, _) = jacobi(n - 1, 0.0, 0.0, x);
            2.0 / (nf * (nf - 1.0) * p * p)
        })
        .collect();
    (
        x.iter().map(|x| 0.5 * (1.0 + x)).collect(),
        w.iter().map(|w| 0.5 * w).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of x^i y^j over the reference triangle: i! j! / (i+j+2)!.
    fn triangle_moment(i: u32, j: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn midpoint_rule_is_exact_for_linear() {
        let rule = simplex_quadrature(1, 1).unwrap();
        assert_eq!(rule.len(), 1);
        assert!((rule.integrate(|x| x[0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_second_moment() {
        let rule = simplex_quadrature(2, 2).unwrap();
        let got = rule.integrate(|p| p[0] * p[0] + p[1] * p[1]);
        let want = triangle_moment(2, 0) + triangle_moment(0, 2);
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        assert!((want - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_rules_reproduce_moments() {
        for degree in 0..=24 {
            let rule = simplex_quadrature(2, degree).unwrap();
            assert!((rule.weights().iter().sum::<f64>() - 0.5).abs() < 1e-14);
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            for i in 0..=degree as u32 {
                for j in 0..=(degree as u32 - i) {
                    let got = rule.integrate(|p| p[0].powi(i as i32) * p[1].powi(j as i32));
                    let want = triangle_moment(i, j);
                    assert!(
                        ((got - want) / want).abs() < 1e-13,
                        "degree {degree}, x^{i} y^{j}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn interval_rules_reproduce_moments() {
        for degree in 0..=41 {
            let rule = simplex_quadrature(1, degree).unwrap();
            for i in 0..=degree as i32 {
                let got = rule.integrate(|x| x[0].powi(i));
                let want = 1.0 / (i as f64 + 1.0);
                assert!(((got - want) / want).abs() < 1e-13, "deg {degree} x^{i}");
            }
        }
    }

    #[test]
    fn lobatto_weights() {
        let r2 = time_quadrature(TimeRuleKind::Lobatto, 2).unwrap();
        assert_eq!(r2.weights(), &[0.5, 0.5]);
        let r3 = time_quadrature(TimeRuleKind::Lobatto, 3).unwrap();
        let want = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];
        for (w, v) in r3.weights().iter().zip(want) {
            assert!((w - v).abs() < 1e-15);
        }
        assert!((r3.point(1)[0] - 0.5).abs() < 1e-15);
        assert_eq!(r3.point(0)[0], 0.0);
        assert_eq!(r3.point(2)[0], 1.0);
    }

    #[test]
    fn time_rules_exactness() {
        for q in 1..=15 {
            let g = time_quadrature(TimeRuleKind::Gauss, q).unwrap();
            assert_eq!(g.degree(), 2 * q - 1);
            for i in 0..=g.degree() as i32 {
                let got = g.integrate(|t| t[0].powi(i));
                assert!((got - 1.0 / (i as f64 + 1.0)).abs() < 1e-14);
            }
            if q >= 2 {
                let l = time_quadrature(TimeRuleKind::Lobatto, q).unwrap();
                for i in 0..=l.degree() as i32 {
                    let got = l.integrate(|t| t[0].powi(i));
                    assert!((got - 1.0 / (i as f64 + 1.0)).abs() < 1e-14, "lobatto {q} t^{i}");
                }
            }
        }
        let g2 = time_quadrature(TimeRuleKind::Gauss, 2).unwrap();
        assert!((g2.integrate(|t| t[0].powi(3)) - 0.25).abs() < 1e-16);
    }

    #[test]
    fn invalid_counts_are_rejected() {
        assert!(matches!(
            time_quadrature(TimeRuleKind::Gauss, 0),
            Err(Error::Capability(_))
        ));
        assert!(matches!(
            time_quadrature(TimeRuleKind::Lobatto, 1),
            Err(Error::Capability(_))
        ));
        assert!(matches!(
            simplex_quadrature(2, MAX_DEGREE + 1),
            Err(Error::Capability(_))
        ));
        assert!(simplex_quadrature(3, 2).is_err());
    }
}

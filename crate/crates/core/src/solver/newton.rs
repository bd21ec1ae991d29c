use crate::error::{Error, Result};
use crate::geometry::SpaceField;
use crate::residual::{fd_jacobian, FlowSpec, SlabAssembler, SlabState};

use super::linear::{LuFactors, SparseLu};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Absolute tolerance on the residual 2-norm.
    pub atol: f64,
    /// Tolerance relative to the initial residual norm.
    pub rtol: f64,
    pub max_iterations: usize,
    /// Step reduction factor of the backtracking line search.
    pub backtrack: f64,
    pub max_halvings: usize,
    /// Keep the factored Jacobian across iterations of a slab while the
    /// residual contracts by at least `reuse_contraction` per step.
    pub reuse_jacobian: bool,
    pub reuse_contraction: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            atol: 1e-11,
            rtol: 1e-10,
            max_iterations: 25,
            backtrack: 0.5,
            max_halvings: 8,
            reuse_jacobian: true,
            reuse_contraction: 0.25,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(Error::config("newton.atol", "must be positive"));
        }
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return Err(Error::config("newton.rtol", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("newton.max_iterations", "must be at least 1"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::config("newton.backtrack", "must lie in (0, 1)"));
        }
        if !(self.reuse_contraction > 0.0 && self.reuse_contraction < 1.0) {
            return Err(Error::config("newton.reuse_contraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A converged slab.
#[derive(Debug, Clone)]
pub struct SlabSolution {
    pub state: SlabState,
    pub iterations: usize,
    pub residual_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton solver bound to one space and problem; the symbolic factorization
/// is shared by every slab.
#[derive(Debug, Clone)]
pub struct SlabSolver {
    assembler: SlabAssembler,
    lu: SparseLu,
    spec: FlowSpec,
}

impl SlabSolver {
    pub fn new(space: std::sync::Arc<crate::refmesh::FunctionSpace>, spec: &FlowSpec) -> Result<Self> {
        spec.validate()?;
        let assembler = SlabAssembler::new(space, spec)?;
        let p = assembler.pattern();
        let lu = SparseLu::new(p.nrows, &p.col_ptr, &p.row_idx)?;
        Ok(Self {
            assembler,
            lu,
            spec: spec.clone(),
        })
    }

    pub fn assembler(&self) -> &SlabAssembler {
        &self.assembler
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    fn linearize(&self, state: &SlabState) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.spec.fd_jacobian {
            let r = self.assembler.residual(state)?;
            let j = fd_jacobian(&self.assembler, state, 1e-7)?;
            Ok((r, j))
        } else {
            self.assembler.residual_and_jacobian(state)
        }
    }

    /// Runs Newton from `guess`. Degenerate geometry at the starting point is
    /// returned as such; everything else that stops the iteration is a
    /// Newton failure.
    ///
    /// With Jacobian reuse the factorization is refreshed whenever a step
    /// contracts the residual too little or the line search fails, so a
    /// failure is only reported for a freshly linearized step.
    pub fn solve(&self, guess: SlabState) -> Result<SlabSolution> {
        let cfg = self.spec.newton;
        let mut state = guess;
        let (res0, jac) = self.linearize(&state)?;
        let mut res = res0;
        let mut rnorm = norm(&res);
        if !rnorm.is_finite() {
            return Err(Error::NewtonFailure("non-finite initial residual".into()));
        }
        let target = cfg.atol.max(cfg.rtol * rnorm);
        if rnorm <= cfg.atol {
            return Ok(SlabSolution {
                state,
                iterations: 0,
                residual_norm: rnorm,
            });
        }
        let factor = |jac: &[f64], it: usize| {
            self.lu
                .factor(jac)
                .map_err(|e| Error::NewtonFailure(format!("iteration {it}: {e}")))
        };
        let mut lu = factor(&jac, 0)?;
        let mut fresh = true;
        let mut it = 0;
        while it < cfg.max_iterations {
            it += 1;
            let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
            let step = lu
                .solve(&rhs)
                .map_err(|e| Error::NewtonFailure(format!("iteration {it}: {e}")))?;
            let accepted = self.line_search(&state, &step, rnorm, &lu)?;
            let Some((trial, r, n)) = accepted else {
                if fresh {
                    return Err(Error::NewtonFailure(format!(
                        "line search stalled at iteration {it} with residual {rnorm:.3e}"
                    )));
                }
                let (_, jac) = self.linearize(&state)?;
                lu = factor(&jac, it)?;
                fresh = true;
                continue;
            };
            let contraction = n / rnorm;
            state = trial;
            res = r;
            rnorm = n;
            if rnorm <= target {
                return Ok(SlabSolution {
                    state,
                    iterations: it,
                    residual_norm: rnorm,
                });
            }
            if !cfg.reuse_jacobian || contraction > cfg.reuse_contraction {
                let (r, jac) = self.linearize(&state)?;
                res = r;
                lu = factor(&jac, it)?;
                fresh = true;
            } else {
                fresh = false;
            }
        }
        Err(Error::NewtonFailure(format!(
            "no convergence in {} iterations (residual {rnorm:.3e})",
            cfg.max_iterations
        )))
    }

    /// Backtracking line search. A trial point is accepted when it lowers the
    /// residual norm or passes the natural monotonicity test
    /// `‖J⁻¹F(x + λΔx)‖ ≤ (1 - λ/4) ‖Δx‖` with the current factorization. The
    /// second test is invariant under scaling of the equations, which matters
    /// when the multiplier `p` is large and the residual norm is dominated by
    /// terms that are quadratic in the step. Degenerate trial geometry counts
    /// as a rejected step.
    fn line_search(
        &self,
        state: &SlabState,
        step: &[f64],
        rnorm: f64,
        lu: &LuFactors<'_>,
    ) -> Result<Option<(SlabState, Vec<f64>, f64)>> {
        let cfg = self.spec.newton;
        let step_norm = norm(step);
        let mut lambda = 1.0;
        for _ in 0..=cfg.max_halvings {
            let mut trial = state.clone();
            for (u, d) in trial.unknowns_mut().iter_mut().zip(step) {
                *u += lambda * d;
            }
            match self.assembler.residual(&trial) {
                Ok(r) => {
                    let n = norm(&r);
                    if n.is_finite() && n < rnorm {
                        return Ok(Some((trial, r, n)));
                    }
                    if n.is_finite() {
                        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
                        if let Ok(simplified) = lu.solve(&rhs) {
                            if norm(&simplified) <= (1.0 - 0.25 * lambda) * step_norm {
                                return Ok(Some((trial, r, n)));
                            }
                        }
                    }
                }
                Err(Error::DegenerateGeometry { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= cfg.backtrack;
        }
        Ok(None)
    }

    /// Default guess: `X` frozen at `incoming`, auxiliary fields from `aux`
    /// (zero when absent).
    pub fn default_guess(
        &self,
        incoming: SpaceField,
        t0: f64,
        aux: Option<&(SpaceField, SpaceField, SpaceField)>,
    ) -> Result<SlabState> {
        let mut g = SlabState::stationary(incoming, self.spec.stages, t0, self.spec.tau)?;
        if let Some((p, r, k)) = aux {
            g.set_auxiliary(p, r, k);
        }
        Ok(g)
    }
}

/// Solves the first slab `[0, tau]` starting from `incoming`.
pub fn solve_slab(incoming: &SpaceField, spec: &FlowSpec, guess: Option<SlabState>) -> Result<SlabSolution> {
    let solver = SlabSolver::new(incoming.space().clone(), spec)?;
    let guess = match guess {
        Some(g) => g,
        None => solver.default_guess(incoming.clone(), 0.0, None)?,
    };
    solver.solve(guess)
}

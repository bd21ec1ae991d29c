use crate::diagnostics::{LedgerContext, LedgerRow};
use crate::error::{Error, Result};
use crate::geometry::SpaceField;
use crate::residual::FlowSpec;

use super::checkpoint::Checkpoint;
use super::newton::SlabSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedT,
    NewtonFailure,
    DegenerateGeometry,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::ReachedT => "reached_T",
            Termination::NewtonFailure => "newton_failure",
            Termination::DegenerateGeometry => "degenerate_geometry",
        }
    }
}

/// Outcome of a march: one ledger row per accepted slab and why it stopped.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<LedgerRow>,
    pub termination: Termination,
    /// End time of the last accepted slab.
    pub final_time: f64,
    /// Message of the error that ended the run, if any.
    pub failure: Option<String>,
    pub initial_area: f64,
    pub initial_volume: f64,
}

/// A run in progress: the current position, the auxiliary fields carried
/// into the next Newton guess, and the slab counter.
#[derive(Debug, Clone)]
pub struct Simulation {
    solver: SlabSolver,
    ledger: LedgerContext,
    x0: SpaceField,
    x: SpaceField,
    aux: Option<(SpaceField, SpaceField, SpaceField)>,
    area: f64,
    step: usize,
    total_steps: usize,
}

impl Simulation {
    pub fn new(spec: &FlowSpec, x0: SpaceField) -> Result<Self> {
        spec.validate()?;
        let space = x0.space().clone();
        if space.dim() != spec.dim || space.degree() != spec.degree {
            return Err(Error::Precondition(format!(
                "initial geometry is CG({}) in dimension {}, the problem asks for CG({}) in dimension {}",
                space.degree(),
                space.dim(),
                spec.degree,
                spec.dim
            )));
        }
        let solver = SlabSolver::new(space, spec)?;
        let ledger = LedgerContext::new(&x0, spec)?;
        Ok(Self {
            solver,
            area: ledger.initial_area(),
            ledger,
            x: x0.clone(),
            x0,
            aux: None,
            step: 0,
            total_steps: spec.num_steps()?,
        })
    }

    pub fn spec(&self) -> &FlowSpec {
        self.solver.spec()
    }

    /// Number of accepted slabs.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.spec().tau
    }

    pub fn position(&self) -> &SpaceField {
        &self.x
    }

    pub fn initial_position(&self) -> &SpaceField {
        &self.x0
    }

    pub fn ledger(&self) -> &LedgerContext {
        &self.ledger
    }

    /// Solves and accepts one slab.
    pub fn advance(&mut self) -> Result<LedgerRow> {
        let t0 = self.time();
        let guess = self.solver.default_guess(self.x.clone(), t0, self.aux.as_ref())?;
        let sol = self.solver.solve(guess)?;
        let row = self
            .ledger
            .entry(self.solver.assembler(), self.area, &sol.state, sol.iterations)?;
        self.x = sol.state.terminal_x();
        self.aux = Some(sol.state.terminal_auxiliary());
        self.area = row.s;
        self.step += 1;
        Ok(row)
    }

    /// Marches at most `max_slabs` slabs (stopping at the final time), calling
    /// `on_slab` after each accepted one. Newton failure and degenerate
    /// geometry end the march and are recorded, not returned.
    pub fn run_for(
        &mut self,
        max_slabs: usize,
        mut on_slab: impl FnMut(&Simulation, &LedgerRow) -> Result<()>,
    ) -> Result<RunRecord> {
        let mut rows = Vec::new();
        let mut termination = Termination::ReachedT;
        let mut failure = None;
        let end = self.step.saturating_add(max_slabs).min(self.total_steps);
        while self.step < end {
            match self.advance() {
                Ok(row) => {
                    on_slab(self, &row)?;
                    rows.push(row);
                }
                Err(e @ (Error::NewtonFailure(_) | Error::SingularMatrix(_))) => {
                    termination = Termination::NewtonFailure;
                    failure = Some(e.to_string());
                    break;
                }
                Err(e @ Error::DegenerateGeometry { .. }) => {
                    termination = Termination::DegenerateGeometry;
                    failure = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(RunRecord {
            rows,
            termination,
            final_time: self.time(),
            failure,
            initial_area: self.ledger.initial_area(),
            initial_volume: self.ledger.initial_volume(),
        })
    }

    pub fn run(&mut self, on_slab: impl FnMut(&Simulation, &LedgerRow) -> Result<()>) -> Result<RunRecord> {
        self.run_for(usize::MAX, on_slab)
    }

    pub fn checkpoint(&self, config_hash: &str) -> Checkpoint {
        let (p, r, kappa) = match &self.aux {
            Some((p, r, k)) => (p.values().to_vec(), r.values().to_vec(), k.values().to_vec()),
            None => (Vec::new(), Vec::new(), Vec::new()),
        };
        Checkpoint {
            config_hash: config_hash.to_string(),
            step: self.step,
            tau: self.spec().tau,
            x0: self.x0.values().to_vec(),
            x: self.x.values().to_vec(),
            p,
            r,
            kappa,
        }
    }

    /// Resumes from a checkpoint. `x0` supplies the function space; its values
    /// are replaced by the stored ones.
    pub fn restore(spec: &FlowSpec, x0: SpaceField, ck: &Checkpoint) -> Result<Self> {
        if ck.tau.to_bits() != spec.tau.to_bits() {
            return Err(Error::Precondition(format!(
                "checkpoint timestep {} differs from configured {}",
                ck.tau, spec.tau
            )));
        }
        let space = x0.space().clone();
        let amb = space.ambient_dim();
        let x0 = Checkpoint::field(&space, amb, &ck.x0)?;
        let mut sim = Self::new(spec, x0)?;
        if ck.step > sim.total_steps {
            return Err(Error::Precondition(format!("checkpoint step {} beyond the final time", ck.step)));
        }
        sim.x = Checkpoint::field(&space, amb, &ck.x)?;
        sim.aux = if ck.p.is_empty() {
            None
        } else {
            Some((
                Checkpoint::field(&space, 1, &ck.p)?,
                Checkpoint::field(&space, amb, &ck.r)?,
                Checkpoint::field(&space, 1, &ck.kappa)?,
            ))
        };
        sim.area = sim.ledger.area(&sim.x)?;
        sim.step = ck.step;
        Ok(sim)
    }
}

/// Marches `x0` from `t = 0` to the final time or the first failure.
pub fn march(spec: &FlowSpec, x0: SpaceField) -> Result<RunRecord> {
    Simulation::new(spec, x0)?.run(|_, _| Ok(()))
}

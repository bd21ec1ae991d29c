mod checkpoint;
mod linear;
mod march;
mod newton;

pub use checkpoint::{format_hexfloat, parse_hexfloat, Checkpoint, CHECKPOINT_HEADER};
pub use linear::{linear_solve, CscMatrix, LuFactors, SparseLu};
pub use march::{march, RunRecord, Simulation, Termination};
pub use newton::{solve_slab, NewtonConfig, SlabSolution, SlabSolver};

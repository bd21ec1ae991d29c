//! Nonlinear slab residual of the mixed curvature/tangential-motion system,
//! its exact linearization and a colored finite-difference oracle.

mod assembly;
mod fd;
mod state;

pub use assembly::{JacobianPattern, SlabAssembler, SlabIntegrals};
pub use fd::fd_jacobian;
pub use state::{FlowKind, FlowSpec, SlabLayout, SlabState};

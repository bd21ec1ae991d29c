//! Structure-preserving parametric finite elements for mean curvature flow
//! and surface diffusion of closed curves and surfaces.

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod refmesh;
pub mod residual;
pub mod solver;
pub mod timeslab;

pub use error::{Error, Result};

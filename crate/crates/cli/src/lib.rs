//! Batch front end for the geomflow solver: configuration files, the `run`,
//! `sweep`, `distance` and `check-mesh` subcommands, and their output files.

pub mod config;
pub mod run;
pub mod sweep;

use geomflow::Error;

/// Process exit status for an error: 2 for bad input or configuration, 3
/// for failures while computing.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse(_) | Error::Io(_) | Error::InvalidMesh(_) | Error::InvalidInput(_) => 2,
        _ => 3,
    }
}

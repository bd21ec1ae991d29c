mod distance;
mod ledger;

pub use distance::{mesh_distance, sphere_distance, DistanceIndex};
pub use ledger::{
    ledger_entry, read_ledger, write_ledger, LedgerContext, LedgerRow, LedgerWriter, LEDGER_HEADER,
};

use crate::error::{Error, Result};

/// Observed orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` between
/// consecutive levels.
pub fn eoc(errors: &[f64], steps: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != steps.len() || errors.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two matching (error, step) pairs, got {} and {}",
            errors.len(),
            steps.len()
        )));
    }
    if errors.iter().chain(steps).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("errors and steps must be positive".into()));
    }
    Ok((0..errors.len() - 1)
        .map(|i| (errors[i] / errors[i + 1]).ln() / (steps[i] / steps[i + 1]).ln())
        .collect())
}

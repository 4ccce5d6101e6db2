//! Shared fixtures for the benchmarks.

use collocate::{ConfigState, Plant};
use nalgebra::DVector;

/// A nonsingular configuration inside the plant's sampling box, with a
/// small velocity.
pub fn fixture_state(plant: &Plant) -> ConfigState {
    let n = plant.dof();
    let q = DVector::from_iterator(
        n,
        plant.domain.iter().enumerate().map(|(i, &(lo, hi))| lo + (hi - lo) * (0.31 + 0.37 * ((i as f64 * 0.7).sin().abs()))),
    );
    let qdot = DVector::from_fn(n, |i, _| 0.1 * ((i + 1) as f64).cos());
    ConfigState::new(q, qdot).expect("fixture dimensions")
}

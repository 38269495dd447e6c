//! Shared inputs for the benchmarks.

use aggbounds::simlab::{exercise_preset, simulate_aggregate, JointSpec};
use aggbounds::AggregateDataset;

pub fn preset(id: u8) -> JointSpec {
    exercise_preset(id).expect("preset")
}

/// Sampled aggregates for a preset, shares included.
pub fn preset_dataset(id: u8, n_per_group: u64, seed: u64) -> AggregateDataset {
    simulate_aggregate(&preset(id), n_per_group, seed, false).expect("simulate")
}

/// Indicator of the cell `(1, 0, 0)` over the preset support.
pub fn focus_weights() -> Vec<f64> {
    let mut lam = vec![0.0; 8];
    lam[4] = 1.0;
    lam
}

/// Evenly spread joint over `k` cells with a little tilt.
pub fn spread_joint(k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|i| 1.0 + 0.1 * i as f64).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

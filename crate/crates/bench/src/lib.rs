//! Shared fixtures for the benchmarks.

use hapc_core::{JointPair, ReferencePath};

/// Deterministic query points scattered around the default gait path.
pub fn query_points(n: usize) -> Vec<JointPair> {
    let path = ReferencePath::default_gait();
    (0..n)
        .map(|i| {
            let p = i as f64 / n as f64;
            let wobble = ((i * 7919) % 101) as f64 / 100.0 - 0.5;
            path.at_phase(p) + JointPair::new(0.1 * wobble, -0.08 * wobble)
        })
        .collect()
}

//! Shared fixtures for the benchmarks.

use ordeal_core::{Boundary, DensityModel};

/// Smooth tilted density on an `n × n` grid.
pub fn tilted(n: usize) -> DensityModel {
    DensityModel::from_fn(n, |a, b| 0.5 + a + 0.5 * b * b + 0.3 * (6.0 * a * b).sin().abs())
        .expect("positive density")
}

/// Three-piece boundary ending on the top wall.
pub fn kinked() -> Boundary {
    Boundary::new(vec![(0.2, 0.1), (0.4, 0.3), (0.6, 0.5), (0.85, 1.0)]).expect("valid knots")
}

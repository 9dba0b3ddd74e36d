//! Shared fixtures for the benchmarks.

use ricnet_core::geom::{crop_partial, generate_synthetic, PointCloud, ShapeKind};

/// A `(partial, complete)` box pair with `n` complete points.
pub fn pair(n: usize, seed: u64) -> (PointCloud, PointCloud) {
    let y = generate_synthetic(ShapeKind::Box, n, seed).expect("valid size");
    let x = crop_partial(&y, seed ^ 1, 0.5).expect("valid crop");
    (x, y)
}

//! Rotation-invariant local descriptors.
//!
//! Each point gets a local reference axis ([`Lra`]). For a reference point
//! and its k nearest neighbours, the neighbours are ordered clockwise on the
//! tangent disk and every neighbour is mapped to an [`IrifTuple`] built from
//! distances and angles only, which makes the tuples invariant under proper
//! rigid motions.

mod irif;
mod lra;
mod order;

pub use irif::{irif, irif_csv, IrifTuple, IRIF_CSV_HEADER};
pub use lra::{compute_lras, estimate_lra, Lra, DEFAULT_LRA_K};
pub use order::{order_neighbors, OrderedNeighborhood};

use crate::geom::{knn_points, PointCloud};
use crate::Result;

/// IRIF rows for a set of reference points: `(reference_idx, tuples in clockwise order)`.
pub type IrifTable = Vec<(usize, Vec<IrifTuple>)>;

/// Computes IRIF tuples for every reference in `references` with `k` neighbours each.
pub fn irif_table(
    cloud: &PointCloud,
    lras: &[Lra],
    references: &[usize],
    k: usize,
) -> Result<IrifTable> {
    references
        .iter()
        .map(|&r| {
            let nbrs = knn_points(cloud.points(), r, k)?;
            let ordered = order_neighbors(cloud, r, lras, &nbrs.neighbor_idxs)?;
            Ok((r, irif(cloud, &ordered)?))
        })
        .collect()
}

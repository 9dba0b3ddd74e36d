use crate::geom::{knn_all, Point};
use crate::nn::{Mlp, ParamStore, Tape, Var};
use crate::Result;

/// Static k-NN graph on the input coordinates, flattened to `N·k` edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGraph {
    pub k: usize,
    pub centers: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl EdgeGraph {
    pub fn build(points: &[Point], k: usize) -> Result<Self> {
        let all = knn_all(points, k)?;
        let mut centers = Vec::with_capacity(points.len() * k);
        let mut neighbors = Vec::with_capacity(points.len() * k);
        for n in all {
            centers.extend(std::iter::repeat_n(n.reference_idx, k));
            neighbors.extend(n.neighbor_idxs);
        }
        Ok(Self { k, centers, neighbors })
    }

    /// Neighbour list of point `i`, nearest first.
    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// One edge convolution: `max_j MLP([f_i, f_j − f_i])`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, block: &Mlp, f: Var) -> Result<Var> {
        let fi = tape.gather_rows(f, &self.centers)?;
        let fj = tape.gather_rows(f, &self.neighbors)?;
        let d = tape.sub(fj, fi)?;
        let e = tape.concat(&[fi, d])?;
        let h = block.forward(tape, store, e)?;
        tape.max_groups(h, self.k)
    }
}

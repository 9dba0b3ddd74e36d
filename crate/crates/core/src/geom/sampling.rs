use std::cmp::Ordering;

use super::{Point, PointCloud};
use crate::{Error, Result};

#[inline]
pub fn sq_dist(a: &Point, b: &Point) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

fn lex_cmp(a: &Point, b: &Point) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// The `k` nearest neighbours of a reference point, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    pub reference_idx: usize,
    pub neighbor_idxs: Vec<usize>,
}

/// Farthest point sampling of `m` indices.
///
/// Starts at the point nearest the centroid, then repeatedly takes the point
/// whose squared distance to the selected set is largest. Ties go to the
/// lexicographically smallest coordinates, then the smallest index.
pub fn fps(cloud: &PointCloud, m: usize) -> Result<Vec<usize>> {
    fps_points(cloud.points(), m)
}

pub fn fps_points(points: &[Point], m: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "fps sample size {m} outside 1..={n}"
        )));
    }
    let centroid = points.iter().sum::<Point>() / n as f64;
    let better = |i: usize, key_i: f64, j: usize, key_j: f64, larger: bool| -> bool {
        let ord = if larger {
            key_i.total_cmp(&key_j)
        } else {
            key_j.total_cmp(&key_i)
        };
        match ord {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => lex_cmp(&points[i], &points[j]).then(i.cmp(&j)) == Ordering::Less,
        }
    };

    let mut start = 0;
    let mut start_d = sq_dist(&points[0], &centroid);
    for (i, p) in points.iter().enumerate().skip(1) {
        let d = sq_dist(p, &centroid);
        if better(i, d, start, start_d, false) {
            start = i;
            start_d = d;
        }
    }

    let mut selected = vec![false; n];
    let mut min_d = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(m);
    let mut current = start;
    loop {
        selected[current] = true;
        out.push(current);
        if out.len() == m {
            return Ok(out);
        }
        let c = points[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let d = sq_dist(&points[i], &c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if best == usize::MAX || better(i, min_d[i], best, best_d, true) {
                best = i;
                best_d = min_d[i];
            }
        }
        current = best;
    }
}

/// Exact k-NN of `reference_idx`, excluding the reference itself; ties by smaller index.
pub fn knn(cloud: &PointCloud, reference_idx: usize, k: usize) -> Result<NeighborIndex> {
    knn_points(cloud.points(), reference_idx, k)
}

pub fn knn_points(points: &[Point], reference_idx: usize, k: usize) -> Result<NeighborIndex> {
    let n = points.len();
    if reference_idx >= n {
        return Err(Error::InvalidArgument(format!(
            "reference index {reference_idx} out of range for {n} points"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={} for {n} points",
            n.saturating_sub(1)
        )));
    }
    let r = points[reference_idx];
    let mut cand: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != reference_idx)
        .map(|(i, p)| (sq_dist(p, &r), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    Ok(NeighborIndex {
        reference_idx,
        neighbor_idxs: cand.into_iter().map(|(_, i)| i).collect(),
    })
}

/// k-NN for every point of the cloud.
pub fn knn_all(points: &[Point], k: usize) -> Result<Vec<NeighborIndex>> {
    (0..points.len()).map(|i| knn_points(points, i, k)).collect()
}

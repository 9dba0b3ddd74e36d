use std::f64::consts::TAU;

use super::Lra;
use crate::geom::PointCloud;
use crate::{Error, Result};

const PROJ_EPS: f64 = 1e-12;

/// Neighbours of a reference point in clockwise order on its tangent disk.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedNeighborhood {
    pub reference_idx: usize,
    pub lra_r: Lra,
    /// `(point index, LRA)` in cyclic clockwise order, starting at the farthest neighbour.
    pub ordered_neighbors: Vec<(usize, Lra)>,
    /// Clockwise projection angle of each ordered neighbour relative to the first, in `[0, 2π)`.
    pub angles: Vec<f64>,
    /// Point indices whose tangent projection was shorter than 1e-12; they sit at the end.
    pub degenerate: Vec<usize>,
}

/// Orders `neighbor_idxs` clockwise around `reference_idx`, viewed from the tip of its LRA.
///
/// The start `x_0` is the neighbour farthest from the reference (ties: first
/// in the given order). The rest follow by ascending clockwise angle of their
/// tangent-plane projections measured from the projection of `x_0`.
pub fn order_neighbors(
    cloud: &PointCloud,
    reference_idx: usize,
    lras: &[Lra],
    neighbor_idxs: &[usize],
) -> Result<OrderedNeighborhood> {
    if neighbor_idxs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ordering needs at least 2 neighbours, got {}",
            neighbor_idxs.len()
        )));
    }
    if lras.len() != cloud.len() {
        return Err(Error::Shape(format!(
            "{} LRAs for {} points",
            lras.len(),
            cloud.len()
        )));
    }
    let pts = cloud.points();
    let r = pts
        .get(reference_idx)
        .ok_or_else(|| Error::InvalidArgument(format!("reference {reference_idx} out of range")))?;
    let lra_r = lras[reference_idx];
    let n = lra_r.axis();

    struct Item {
        idx: usize,
        dist: f64,
        proj: nalgebra::Vector3<f64>,
        degenerate: bool,
    }
    let items: Vec<Item> = neighbor_idxs
        .iter()
        .map(|&j| {
            let d = pts
                .get(j)
                .ok_or_else(|| Error::InvalidArgument(format!("neighbour {j} out of range")))?
                - r;
            let proj = d - n * d.dot(n);
            Ok(Item {
                idx: j,
                dist: d.norm(),
                degenerate: proj.norm() < PROJ_EPS,
                proj,
            })
        })
        .collect::<Result<_>>()?;

    let farthest = |allow_degenerate: bool| {
        items
            .iter()
            .enumerate()
            .filter(|(_, it)| allow_degenerate || !it.degenerate)
            .fold(None::<(usize, f64)>, |best, (i, it)| match best {
                Some((_, d)) if it.dist <= d => best,
                _ => Some((i, it.dist)),
            })
            .map(|(i, _)| i)
    };
    let start = farthest(false)
        .or_else(|| farthest(true))
        .expect("at least two neighbours");
    let q0 = items[start].proj;

    let mut keyed: Vec<(bool, f64, usize)> = items
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let angle = if i == start || it.degenerate || items[start].degenerate {
                0.0
            } else {
                let ccw = n.dot(&q0.cross(&it.proj)).atan2(q0.dot(&it.proj));
                let mut cw = -ccw;
                if cw < 0.0 {
                    cw += TAU;
                }
                if cw >= TAU {
                    cw -= TAU;
                }
                cw
            };
            (it.degenerate && i != start, angle, i)
        })
        .collect();
    // start first, then by angle; degenerate projections last; ties keep input order
    keyed.sort_by(|a, b| {
        (a.2 != start)
            .cmp(&(b.2 != start))
            .then(a.0.cmp(&b.0))
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    Ok(OrderedNeighborhood {
        reference_idx,
        lra_r,
        ordered_neighbors: keyed.iter().map(|&(_, _, i)| (items[i].idx, lras[items[i].idx])).collect(),
        angles: keyed.iter().map(|&(_, a, _)| a).collect(),
        degenerate: keyed
            .iter()
            .filter(|k| k.0)
            .map(|&(_, _, i)| items[i].idx)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;

    fn up() -> Lra {
        Lra::new(Point::new(0.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn square_orders_clockwise_from_farthest() {
        // reference at origin; neighbours on a square, the +x one farthest
        let pts = vec![
            Point::zeros(),
            Point::new(0.0, 1.0, 0.0),
            Point::new(1.2, 0.0, 0.0),
            Point::new(0.0, -1.0, 0.0),
            Point::new(-1.0, 0.0, 0.0),
        ];
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let lras = vec![up(); 5];
        let ord = order_neighbors(&cloud, 0, &lras, &[1, 2, 3, 4]).unwrap();
        let idx: Vec<usize> = ord.ordered_neighbors.iter().map(|e| e.0).collect();
        // clockwise seen from +z: +x → −y → −x → +y
        assert_eq!(idx, vec![2, 3, 4, 1]);
        // independent angle oracle: clockwise angle = (atan2(y0, x0) − atan2(y, x)) mod 2π
        let base = pts[2].y.atan2(pts[2].x);
        for (&(i, _), &a) in ord.ordered_neighbors.iter().zip(&ord.angles) {
            let expect = (base - pts[i].y.atan2(pts[i].x)).rem_euclid(TAU);
            assert!((a - expect).abs() < 1e-12, "{i}: {a} vs {expect}");
        }
        assert!(ord.degenerate.is_empty());
    }

    #[test]
    fn two_neighbours_farther_first() {
        let cloud = PointCloud::new(vec![
            Point::zeros(),
            Point::new(0.5, 0.0, 0.0),
            Point::new(0.0, 2.0, 0.0),
        ])
        .unwrap();
        let ord = order_neighbors(&cloud, 0, &[up(); 3], &[1, 2]).unwrap();
        assert_eq!(ord.ordered_neighbors[0].0, 2);
        assert_eq!(ord.ordered_neighbors[1].0, 1);
    }

    #[test]
    fn axis_aligned_neighbour_is_flagged_last() {
        let cloud = PointCloud::new(vec![
            Point::zeros(),
            Point::new(0.0, 0.0, 3.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
        ])
        .unwrap();
        let ord = order_neighbors(&cloud, 0, &[up(); 4], &[1, 2, 3]).unwrap();
        let idx: Vec<usize> = ord.ordered_neighbors.iter().map(|e| e.0).collect();
        assert_eq!(idx, vec![2, 3, 1]);
        assert_eq!(ord.degenerate, vec![1]);
    }

    #[test]
    fn single_neighbour_is_rejected() {
        let cloud = PointCloud::new(vec![Point::zeros(), Point::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(order_neighbors(&cloud, 0, &[up(); 2], &[1]).is_err());
    }
}

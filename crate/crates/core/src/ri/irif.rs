use std::fmt::Write as _;

use super::{IrifTable, OrderedNeighborhood};
use crate::geom::{Point, PointCloud};
use crate::{Error, Result};

pub const IRIF_CSV_HEADER: &str = "ref_idx,nbr_rank,s,delta,a1,a2,a3,b1,b2,b3";

/// Distance/angle descriptor of one neighbour `x_n` relative to the
/// reference `r` and its clockwise successor `x_{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrifTuple {
    pub s: f64,
    pub delta: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl IrifTuple {
    pub const WIDTH: usize = 8;

    /// `[s, δ, a1, a2, a3, b1, b2, b3]`.
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.s, self.delta, self.a1, self.a2, self.a3, self.b1, self.b2, self.b3,
        ]
    }
}

fn angle(u: &Point, v: &Point, nbr: usize) -> Result<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if !(nu > 1e-12 && nv > 1e-12) {
        return Err(Error::DegenerateGeometry(format!(
            "zero-length vector in angle at neighbour {nbr}"
        )));
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

/// `+1` when the first angle does not exceed the second, `−1` otherwise.
fn sign_factor(first: f64, second: f64) -> f64 {
    if first <= second {
        1.0
    } else {
        -1.0
    }
}

/// One tuple per ordered neighbour; the successor of the last is the first.
pub fn irif(cloud: &PointCloud, ordered: &OrderedNeighborhood) -> Result<Vec<IrifTuple>> {
    let pts = cloud.points();
    let k = ordered.ordered_neighbors.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "IRIF needs at least 2 neighbours, got {k}"
        )));
    }
    let r = pts[ordered.reference_idx];
    let lra_r = ordered.lra_r.axis();
    (0..k)
        .map(|n| {
            let (i, lra_n) = ordered.ordered_neighbors[n];
            let (j, lra_m) = ordered.ordered_neighbors[(n + 1) % k];
            let (lra_n, lra_m) = (lra_n.axis(), lra_m.axis());
            let (x_n, x_m) = (pts[i], pts[j]);
            let to_r = r - x_n;
            let succ_to_r = r - x_m;
            let to_succ = x_m - x_n;
            for (v, who) in [(&to_r, i), (&succ_to_r, j), (&to_succ, j)] {
                if !(v.norm() > 1e-12) {
                    return Err(Error::DegenerateGeometry(format!(
                        "zero-length vector in angle at neighbour {who}"
                    )));
                }
            }

            let a1 = angle(lra_r, &to_r, i)?;
            let a2 = angle(lra_n, &to_r, i)?;
            let a3 = sign_factor(a1, a2) * angle(lra_n, lra_r, i)?;
            let b1 = angle(lra_n, &to_succ, i)?;
            let b2 = angle(lra_m, &to_succ, i)?;
            let b3 = sign_factor(b1, b2) * angle(lra_n, lra_m, i)?;
            Ok(IrifTuple {
                s: to_r.norm(),
                delta: angle(&succ_to_r, &to_r, i)?,
                a1,
                a2,
                a3,
                b1,
                b2,
                b3,
            })
        })
        .collect()
}

/// CSV dump with header [`IRIF_CSV_HEADER`], shortest round-trip decimals.
pub fn irif_csv(table: &IrifTable) -> String {
    let mut out = String::new();
    out.push_str(IRIF_CSV_HEADER);
    out.push('\n');
    for (r, tuples) in table {
        for (rank, t) in tuples.iter().enumerate() {
            let _ = write!(out, "{r},{rank}");
            for v in t.to_array() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

//! Completion metrics and the original-vs-transformed evaluation protocol.

mod eval;

pub use eval::{
    aggregate, eval_csv, evaluate, robustness_csv, robustness_report, CategorySummary, EvalRecord,
    Predictor, RobustnessReport, RobustnessRow, TransformProtocol, EVAL_CSV_HEADER, ROBUSTNESS_CSV_HEADER,
};

use crate::geom::PointCloud;
use crate::{Error, Result};

/// Default F-score threshold for unit-scale clouds.
pub const DEFAULT_TAU: f64 = 0.01;

/// Chamfer values are reported multiplied by this factor.
pub const CD_REPORT_SCALE: f64 = 1e4;

/// Nearest neighbour (first on ties) of each `[x, y, z]` row of `a` among rows of `b`,
/// with the squared distance.
pub(crate) fn nearest_flat(a: &[f64], b: &[f64]) -> Vec<(usize, f64)> {
    a.chunks_exact(3)
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, q) in b.chunks_exact(3).enumerate() {
                let (dx, dy, dz) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
                let d = dx * dx + dy * dy + dz * dz;
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

/// Symmetric squared-distance Chamfer distance on flat coordinate buffers,
/// with the nearest-neighbour indices of each side.
pub(crate) fn chamfer_flat(a: &[f64], b: &[f64]) -> (f64, Vec<usize>, Vec<usize>) {
    let ab = nearest_flat(a, b);
    let ba = nearest_flat(b, a);
    let term = |v: &[(usize, f64)]| v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64;
    (
        term(&ab) + term(&ba),
        ab.into_iter().map(|x| x.0).collect(),
        ba.into_iter().map(|x| x.0).collect(),
    )
}

/// `mean_{x∈P} min_{y∈Q} ‖x−y‖² + mean_{y∈Q} min_{x∈P} ‖x−y‖²`.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> f64 {
    chamfer_flat(&p.to_flat(), &q.to_flat()).0
}

/// Harmonic mean of precision (fraction of `p` within `tau` of `q`) and recall.
pub fn fscore(p: &PointCloud, q: &PointCloud, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("F-score threshold {tau} must be positive")));
    }
    let (pf, qf) = (p.to_flat(), q.to_flat());
    let t2 = tau * tau;
    let within = |v: Vec<(usize, f64)>| {
        let n = v.len() as f64;
        v.into_iter().filter(|x| x.1 <= t2).count() as f64 / n
    };
    let precision = within(nearest_flat(&pf, &qf));
    let recall = within(nearest_flat(&qf, &pf));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;

    #[test]
    fn chamfer_identity_and_single_pair() {
        let p = PointCloud::new(vec![Point::zeros(), Point::new(0.3, 0.1, 0.2)]).unwrap();
        assert_eq!(chamfer(&p, &p), 0.0);
        let a = PointCloud::new(vec![Point::zeros()]).unwrap();
        let b = PointCloud::new(vec![Point::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(chamfer(&a, &b), 2.0);
    }

    #[test]
    fn fscore_extremes() {
        let p = PointCloud::new(vec![Point::zeros(), Point::new(0.3, 0.1, 0.2)]).unwrap();
        assert_eq!(fscore(&p, &p, 1e-6).unwrap(), 1.0);
        let far = p.map_points(|x| x + Point::new(10.0, 0.0, 0.0)).unwrap();
        assert_eq!(fscore(&p, &far, 0.01).unwrap(), 0.0);
        assert!(fscore(&p, &p, 0.0).is_err());
        assert!(fscore(&p, &p, -1.0).is_err());
    }
}

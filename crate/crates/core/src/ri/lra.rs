use nalgebra::{Matrix3, SymmetricEigen};

use crate::geom::{knn_points, Point, PointCloud};
use crate::{Error, Result};

pub const DEFAULT_LRA_K: usize = 16;

const SIGN_EPS: f64 = 1e-9;

/// Unit local reference axis attached to a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lra(Point);

impl Lra {
    /// Normalises `v`; fails for (near) zero vectors.
    pub fn new(v: Point) -> Result<Self> {
        let n = v.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(Error::DegenerateGeometry("zero-length reference axis".into()));
        }
        Ok(Lra(v / n))
    }

    pub fn axis(&self) -> &Point {
        &self.0
    }
}

/// LRA of point `idx`: smallest-eigenvalue eigenvector of the covariance of
/// the point and its `k − 1` nearest neighbours.
///
/// Sign: `axis · (p − local centroid) ≥ 0`; when that projection is below
/// 1e-9 in magnitude (flat patches), `axis · (p − cloud centroid) ≥ 0`; when
/// that is also below 1e-9, the first non-zero component is made positive.
pub fn estimate_lra(cloud: &PointCloud, idx: usize, k: usize) -> Result<Lra> {
    estimate_with_centroid(cloud, idx, k, &cloud.centroid())
}

/// LRAs for every point of the cloud.
pub fn compute_lras(cloud: &PointCloud, k: usize) -> Result<Vec<Lra>> {
    let centroid = cloud.centroid();
    (0..cloud.len())
        .map(|i| estimate_with_centroid(cloud, i, k, &centroid))
        .collect()
}

fn estimate_with_centroid(
    cloud: &PointCloud,
    idx: usize,
    k: usize,
    cloud_centroid: &Point,
) -> Result<Lra> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("LRA neighbourhood k = {k} < 3")));
    }
    if k > cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "LRA neighbourhood k = {k} exceeds cloud size {}",
            cloud.len()
        )));
    }
    let pts = cloud.points();
    let nbrs = knn_points(pts, idx, k - 1)?;
    let p = pts[idx];
    let mut centroid = p;
    for &j in &nbrs.neighbor_idxs {
        centroid += pts[j];
    }
    centroid /= k as f64;

    let mut cov = Matrix3::zeros();
    let mut add = |q: &Point| {
        let d = q - centroid;
        cov += d * d.transpose();
    };
    add(&p);
    for &j in &nbrs.neighbor_idxs {
        add(&pts[j]);
    }
    cov /= k as f64;
    if !(cov.trace() > 1e-24) {
        return Err(Error::DegenerateGeometry(format!(
            "neighbourhood of point {idx} is a single location"
        )));
    }

    let eig = SymmetricEigen::new(cov);
    let (min_i, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("3 eigenvalues");
    let mut axis: Point = eig.eigenvectors.column(min_i).into_owned();
    axis /= axis.norm();

    let local = axis.dot(&(p - centroid));
    let global = axis.dot(&(p - cloud_centroid));
    let flip = if local.abs() >= SIGN_EPS {
        local < 0.0
    } else if global.abs() >= SIGN_EPS {
        global < 0.0
    } else {
        axis.iter()
            .find(|c| c.abs() > 1e-12)
            .is_some_and(|&c| c < 0.0)
    };
    if flip {
        axis = -axis;
    }
    Lra::new(axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{apply_transform, random_rigid};
    use crate::seed;
    use rand::Rng;

    #[test]
    fn planar_neighbourhood_gives_plane_normal() {
        let mut rng = seed::rng(1);
        let pts: Vec<Point> = (0..20)
            .map(|_| Point::new(rng.random(), rng.random(), 0.0))
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let lra = estimate_lra(&cloud, 3, 10).unwrap();
        assert!((lra.axis() - Point::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn coincident_neighbourhood_is_degenerate() {
        let cloud = PointCloud::new(vec![Point::new(1.0, 2.0, 3.0); 5]).unwrap();
        assert!(matches!(
            estimate_lra(&cloud, 0, 4),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(estimate_lra(&cloud, 0, 2).is_err());
    }

    #[test]
    fn axis_is_unit_and_equivariant() {
        let cloud = crate::geom::generate_synthetic(crate::ShapeKind::Sphere, 300, 2).unwrap();
        let t = random_rigid(3, 0.5);
        let moved = apply_transform(&cloud, &t);
        let a = compute_lras(&cloud, 16).unwrap();
        let b = compute_lras(&moved, 16).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.axis().norm() - 1.0).abs() < 1e-12);
            assert!((t.rotation() * x.axis() - y.axis()).norm() < 1e-9);
        }
    }

    #[test]
    fn sphere_axes_point_outward() {
        let cloud = crate::geom::generate_synthetic(crate::ShapeKind::Sphere, 400, 4).unwrap();
        for (p, l) in cloud.points().iter().zip(compute_lras(&cloud, 12).unwrap()) {
            assert!(l.axis().dot(p) > 0.9);
        }
    }
}

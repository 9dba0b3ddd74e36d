use nalgebra::{Matrix3, SymmetricEigen};

use crate::geom::{Point, PointCloud};
use crate::{Error, Result};

const MOMENT_EPS: f64 = 1e-12;

/// Pose estimated from the observed cloud: origin at the centroid, axes
/// along the principal directions, signs fixed by the third moment.
///
/// Rotating and translating the input moves the frame with it, so
/// predictions made in local coordinates and mapped back are equivariant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFrame {
    origin: Point,
    /// Rows are the local axes in world coordinates.
    axes: Matrix3<f64>,
}

impl PoseFrame {
    pub fn identity() -> Self {
        Self {
            origin: Point::zeros(),
            axes: Matrix3::identity(),
        }
    }

    pub fn estimate(cloud: &PointCloud) -> Result<Self> {
        let c = cloud.centroid();
        let mut cov = Matrix3::zeros();
        for p in cloud.points() {
            let d = p - c;
            cov += d * d.transpose();
        }
        cov /= cloud.len() as f64;
        if cov.trace() <= 1e-24 {
            return Err(Error::DegenerateGeometry(
                "cannot estimate a pose frame for coincident points".into(),
            ));
        }
        let eig = SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let axis = |i: usize| -> Point {
            let e: Point = eig.eigenvectors.column(order[i]).into_owned();
            let m3: f64 = cloud.points().iter().map(|p| (p - c).dot(&e).powi(3)).sum();
            let flip = if m3.abs() > MOMENT_EPS {
                m3 < 0.0
            } else {
                e.iter().find(|v| v.abs() > MOMENT_EPS).is_some_and(|v| *v < 0.0)
            };
            if flip {
                -e
            } else {
                e
            }
        };
        let e1 = axis(0);
        let e2 = axis(1);
        let e3 = e1.cross(&e2);
        Ok(Self {
            origin: c,
            axes: Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]),
        })
    }

    pub fn origin(&self) -> &Point {
        &self.origin
    }

    pub fn axes(&self) -> &Matrix3<f64> {
        &self.axes
    }

    pub fn to_local(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let out = cloud.map_points(|p| self.axes * (p - self.origin))?;
        Ok(match cloud.label() {
            Some(l) => out.with_label(l),
            None => out,
        })
    }

    pub fn to_world(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let r = self.axes.transpose();
        cloud.map_points(|p| r * p + self.origin)
    }
}

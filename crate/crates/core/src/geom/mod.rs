//! Deterministic geometric substrate: clouds, I/O, synthetic shapes, rigid
//! transforms, farthest point sampling and brute-force k-NN.

mod io;
mod sampling;
mod synth;
mod transform;

pub use io::{load_xyz, parse_xyz, save_xyz, to_xyz_string};
pub use sampling::{fps, fps_points, knn, knn_all, knn_points, sq_dist, NeighborIndex};
pub use synth::{crop_direction, crop_partial, generate_synthetic, ShapeKind};
pub use transform::{apply_transform, random_rigid, RigidTransform, DEFAULT_MAX_TRANSLATION};

use crate::{Error, Result};

pub type Point = nalgebra::Vector3<f64>;

/// Ordered, non-empty list of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    label: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(Self {
            points,
            label: None,
        })
    }

    /// Builds a cloud from a row-major `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() % 3 != 0 {
            return Err(Error::Shape(format!(
                "flat coordinate buffer of length {} is not a multiple of 3",
                values.len()
            )));
        }
        Self::new(
            values
                .chunks_exact(3)
                .map(|c| Point::new(c[0], c[1], c[2]))
                .collect(),
        )
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        self.points.iter().sum::<Point>() / self.points.len() as f64
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    /// Sub-cloud with the given indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let points = idx
            .iter()
            .map(|&i| {
                self.points
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(points)?;
        out.label = self.label.clone();
        Ok(out)
    }

    /// Applies `f` to every point, keeping order and label.
    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> Result<Self> {
        let mut out = Self::new(self.points.iter().map(f).collect())?;
        out.label = self.label.clone();
        Ok(out)
    }
}

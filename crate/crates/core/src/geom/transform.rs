use nalgebra::{Matrix3, UnitQuaternion, Quaternion};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Point, PointCloud};
use crate::{seed, Error, Result};

/// Default translation bound for evaluation perturbations, in model units.
pub const DEFAULT_MAX_TRANSLATION: f64 = 0.5;

const ORTHO_TOL: f64 = 1e-12;

/// Proper rigid motion `p ↦ R·p + t` with `R ∈ SO(3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Point,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigidTransformJson {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl RigidTransform {
    /// Validates orthonormality and `det = +1` within 1e-12.
    pub fn new(rotation: Matrix3<f64>, translation: Point) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= ORTHO_TOL) {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (max |RᵀR − I| = {err:e})"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ORTHO_TOL) {
            return Err(Error::InvalidArgument(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Point::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Point {
        &self.translation
    }

    pub fn apply(&self, p: &Point) -> Point {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_json(&self) -> String {
        let r = &self.rotation;
        let json = RigidTransformJson {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        };
        serde_json::to_string_pretty(&json).expect("transform serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: RigidTransformJson = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("transform JSON: {e}")))?;
        let r = json.rotation;
        Self::new(
            Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            Point::from(json.translation),
        )
    }
}

/// Rotation uniform over SO(3) (Shoemake unit-quaternion sampling) and
/// translation uniform in `[-max_translation, max_translation]³`.
pub fn random_rigid(seed: u64, max_translation: f64) -> RigidTransform {
    let mut rng = seed::rng(seed);
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = UnitQuaternion::from_quaternion(Quaternion::new(
        b * u3.cos(),
        a * u2.sin(),
        a * u2.cos(),
        b * u3.sin(),
    ));
    let m = max_translation.max(0.0);
    let mut t = Point::zeros();
    if m > 0.0 {
        for c in t.iter_mut() {
            *c = rng.random_range(-m..=m);
        }
    }
    RigidTransform {
        rotation: q.to_rotation_matrix().into_inner(),
        translation: t,
    }
}

pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud
        .map_points(|p| t.apply(p))
        .expect("rigid motion of a finite cloud stays finite")
}

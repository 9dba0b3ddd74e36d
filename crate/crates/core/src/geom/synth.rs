use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Point, PointCloud};
use crate::{seed, Error, Result};

/// Synthetic surface families used as desk-scale training categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeKind {
    /// Unit sphere.
    Sphere,
    /// Axis-aligned box, half extents drawn from the seed in `[0.5, 1.0]`.
    Box,
    /// Z-aligned closed cylinder, radius in `[0.4, 0.8]`, half height in `[0.5, 1.0]`.
    Cylinder,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sphere" => Ok(ShapeKind::Sphere),
            "box" => Ok(ShapeKind::Box),
            "cylinder" => Ok(ShapeKind::Cylinder),
            other => Err(Error::InvalidArgument(format!("unknown shape kind {other:?}"))),
        }
    }
}

/// Samples `n ≥ 8` points uniformly (by area) on the surface of `kind`.
pub fn generate_synthetic(kind: ShapeKind, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "synthetic clouds need at least 8 points, got {n}"
        )));
    }
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag::SYNTH_SHAPE]));
    let points = match kind {
        ShapeKind::Sphere => (0..n).map(|_| unit_vector(&mut rng)).collect(),
        ShapeKind::Box => {
            let h = Point::new(
                rng.random_range(0.5..=1.0),
                rng.random_range(0.5..=1.0),
                rng.random_range(0.5..=1.0),
            );
            // face pair areas: yz, xz, xy
            let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
            let total: f64 = areas.iter().sum();
            (0..n)
                .map(|_| {
                    let mut u = rng.random::<f64>() * total;
                    let mut axis = 2;
                    for (a, &area) in areas.iter().enumerate() {
                        if u < area {
                            axis = a;
                            break;
                        }
                        u -= area;
                    }
                    let mut p = Point::zeros();
                    for k in 0..3 {
                        p[k] = if k == axis {
                            if rng.random::<bool>() {
                                h[k]
                            } else {
                                -h[k]
                            }
                        } else {
                            rng.random_range(-h[k]..=h[k])
                        };
                    }
                    p
                })
                .collect()
        }
        ShapeKind::Cylinder => {
            let radius: f64 = rng.random_range(0.4..=0.8);
            let half: f64 = rng.random_range(0.5..=1.0);
            let side = 2.0 * std::f64::consts::PI * radius * 2.0 * half;
            let caps = 2.0 * std::f64::consts::PI * radius * radius;
            (0..n)
                .map(|_| {
                    let theta = rng.random::<f64>() * std::f64::consts::TAU;
                    if rng.random::<f64>() * (side + caps) < side {
                        let z = rng.random_range(-half..=half);
                        Point::new(radius * theta.cos(), radius * theta.sin(), z)
                    } else {
                        let r = radius * rng.random::<f64>().sqrt();
                        let z = if rng.random::<bool>() { half } else { -half };
                        Point::new(r * theta.cos(), r * theta.sin(), z)
                    }
                })
                .collect()
        }
    };
    Ok(PointCloud::new(points)?.with_label(kind.name()))
}

fn unit_vector(rng: &mut impl Rng) -> Point {
    loop {
        let v = Point::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Simulated single-view scan: keeps the `⌈keep_fraction·N⌉` points with the
/// largest projection on a seeded random view direction, in original order.
pub fn crop_partial(cloud: &PointCloud, seed: u64, keep_fraction: f64) -> Result<PointCloud> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    let keep = (keep_fraction * cloud.len() as f64).ceil() as usize;
    if keep < 4 {
        return Err(Error::InvalidArgument(format!(
            "crop would keep {keep} points, need at least 4"
        )));
    }
    let keep = keep.min(cloud.len());
    let dir = crop_direction(seed);
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    let dots: Vec<f64> = cloud.points().iter().map(|p| p.dot(&dir)).collect();
    order.sort_by(|&a, &b| dots[b].total_cmp(&dots[a]).then(a.cmp(&b)));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    cloud.select(&kept)
}

/// The view direction used by [`crop_partial`] for `seed`.
pub fn crop_direction(seed: u64) -> Point {
    unit_vector(&mut seed::rng(seed::derive(seed, &[seed::tag::SYNTH_CROP])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_points_are_unit() {
        let c = generate_synthetic(ShapeKind::Sphere, 100, 3).unwrap();
        assert_eq!(c.len(), 100);
        for p in c.points() {
            assert!((p.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn same_seed_same_cloud() {
        for kind in ShapeKind::ALL {
            assert_eq!(
                generate_synthetic(kind, 64, 9).unwrap(),
                generate_synthetic(kind, 64, 9).unwrap()
            );
        }
        assert_ne!(
            generate_synthetic(ShapeKind::Box, 64, 9).unwrap(),
            generate_synthetic(ShapeKind::Box, 64, 10).unwrap()
        );
    }

    #[test]
    fn box_points_lie_on_faces() {
        let c = generate_synthetic(ShapeKind::Box, 2048, 5).unwrap();
        // Half extents recovered independently from the data.
        let mut h = Point::zeros();
        for p in c.points() {
            for k in 0..3 {
                h[k] = h[k].max(p[k].abs());
            }
        }
        let mut faces = [0usize; 6];
        for p in c.points() {
            let on: Vec<usize> = (0..3)
                .filter(|&k| (p[k].abs() - h[k]).abs() <= 1e-12)
                .collect();
            assert!(!on.is_empty(), "{p:?} is on no face");
            for k in 0..3 {
                assert!(p[k].abs() <= h[k] + 1e-12);
            }
            let k = on[0];
            faces[2 * k + usize::from(p[k] > 0.0)] += 1;
        }
        assert!(faces.iter().all(|&f| f > 0), "{faces:?}");
    }

    #[test]
    fn cylinder_points_lie_on_surface() {
        let c = generate_synthetic(ShapeKind::Cylinder, 1000, 2).unwrap();
        let r = c.points().iter().map(|p| p.xy().norm()).fold(0.0, f64::max);
        let h = c.points().iter().map(|p| p.z.abs()).fold(0.0, f64::max);
        for p in c.points() {
            let on_side = (p.xy().norm() - r).abs() < 1e-9;
            let on_cap = (p.z.abs() - h).abs() < 1e-12;
            assert!(on_side || on_cap);
        }
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(generate_synthetic(ShapeKind::Sphere, 7, 0).is_err());
        assert!("torus".parse::<ShapeKind>().is_err());
        assert_eq!("Box".parse::<ShapeKind>().unwrap(), ShapeKind::Box);
    }

    #[test]
    fn crop_with_full_fraction_keeps_everything() {
        let c = generate_synthetic(ShapeKind::Sphere, 50, 1).unwrap();
        assert_eq!(crop_partial(&c, 4, 1.0).unwrap(), c);
    }

    #[test]
    fn crop_keeps_one_side_of_view_plane() {
        let c = generate_synthetic(ShapeKind::Sphere, 400, 1).unwrap();
        let part = crop_partial(&c, 8, 0.5).unwrap();
        assert_eq!(part.len(), 200);
        let dir = crop_direction(8);
        let threshold = part
            .points()
            .iter()
            .map(|p| p.dot(&dir))
            .fold(f64::INFINITY, f64::min);
        let kept: Vec<&Point> = part.points().iter().collect();
        for p in c.points() {
            let is_kept = kept.iter().any(|q| *q == p);
            assert_eq!(is_kept, p.dot(&dir) >= threshold, "{p:?}");
        }
    }

    #[test]
    fn crop_is_deterministic_and_validates_fraction() {
        let c = generate_synthetic(ShapeKind::Cylinder, 100, 1).unwrap();
        assert_eq!(crop_partial(&c, 3, 0.4).unwrap(), crop_partial(&c, 3, 0.4).unwrap());
        assert!(crop_partial(&c, 3, 0.0).is_err());
        assert!(crop_partial(&c, 3, 1.5).is_err());
        assert!(crop_partial(&c, 3, 0.03).is_err());
    }
}

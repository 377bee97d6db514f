//! Analytic antipodal grasp sampler over primitive shapes.
//!
//! Grasp frames: +x approaches the object, +y is the closing axis and the
//! origin sits `TCP_DEPTH` behind the grasp centre along +x. Closing axes are
//! always horizontal in the object frame, which keeps the roll canonical.

use std::f64::consts::{FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::catalog::{ObjectSpec, Shape};
use crate::scene::status::{GRIPPER_APERTURE, TCP_DEPTH};
use crate::se3::{Mat3, Pose6, Vec3};

const CANDIDATE_STREAM: u64 = 0x6772_6173_7000_0003;
/// Steepest downward tilt of side approaches.
const MAX_TILT: f64 = FRAC_PI_4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    /// Gripper pose in the object frame.
    pub pose: Pose6<f64>,
    pub score: f64,
    /// Finger opening needed, m.
    pub width: f64,
}

impl GraspCandidate {
    pub fn approach(&self) -> Vec3<f64> {
        self.pose.rotation().column(0)
    }

    pub fn closing_axis(&self) -> Vec3<f64> {
        self.pose.rotation().column(1)
    }

    pub fn centre(&self) -> Vec3<f64> {
        self.pose.position + self.approach() * TCP_DEPTH
    }
}

/// Candidate quality: narrower is better, approaching from below is penalized.
pub fn grasp_score(width: f64, approach: Vec3<f64>) -> f64 {
    (1.0 - width / GRIPPER_APERTURE - 0.5 * approach.z.max(0.0)).clamp(0.0, 1.0)
}

fn candidate(centre: Vec3<f64>, approach: Vec3<f64>, closing: Vec3<f64>, width: f64) -> GraspCandidate {
    let a = approach.normalized().unwrap_or(Vec3::unit_x());
    let y = closing.normalized().unwrap_or(Vec3::unit_y());
    let rot = Mat3::from_columns(a, y, a.cross(y));
    GraspCandidate {
        pose: Pose6::from_rotation(centre - a * TCP_DEPTH, &rot),
        score: grasp_score(width, a),
        width,
    }
}

/// Horizontal unit vector perpendicular to `a`, or `fallback` when `a` is vertical.
fn horizontal_perp(a: Vec3<f64>, fallback: Vec3<f64>) -> Vec3<f64> {
    Vec3::new(-a.y, a.x, 0.0).normalized().unwrap_or(fallback)
}

enum Family {
    Sphere { radius: f64 },
    /// Box closing along local axis `axis` (0 or 1).
    BoxSide { axis: usize, half: Vec3<f64> },
    CylinderSide { radius: f64, half_height: f64 },
    CylinderTop { radius: f64, half_height: f64 },
}

fn families(shape: &Shape) -> Vec<Family> {
    let fits = |w: f64| w <= GRIPPER_APERTURE;
    match *shape {
        Shape::Sphere { radius } if fits(2.0 * radius) => vec![Family::Sphere { radius }],
        Shape::Box { extents } => {
            let half = shape.half_extents();
            (0..2)
                .filter(|&i| fits(extents[i]))
                .map(|axis| Family::BoxSide { axis, half })
                .collect()
        }
        Shape::Cylinder { radius, height } if fits(2.0 * radius) => vec![
            Family::CylinderSide {
                radius,
                half_height: height / 2.0,
            },
            Family::CylinderTop {
                radius,
                half_height: height / 2.0,
            },
        ],
        _ => Vec::new(),
    }
}

fn sample(family: &Family, rng: &mut ChaCha8Rng) -> GraspCandidate {
    let down = Vec3::new(0.0, 0.0, -1.0);
    match *family {
        Family::Sphere { radius } => {
            // Uniform direction on the sphere.
            let z: f64 = rng.random_range(-1.0..=1.0);
            let phi = rng.random_range(-PI..PI);
            let r = (1.0 - z * z).sqrt();
            let a = Vec3::new(r * phi.cos(), r * phi.sin(), z);
            let y = horizontal_perp(a, Vec3::unit_y());
            candidate(Vec3::zero(), a, y, 2.0 * radius)
        }
        Family::BoxSide { axis, half } => {
            let h = half.to_array();
            let other = 1 - axis;
            let mut y = Vec3::zero();
            let mut side = Vec3::zero();
            if axis == 0 {
                y.x = 1.0;
                side.y = 1.0;
            } else {
                y.y = 1.0;
                side.x = 1.0;
            }
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let tilt = rng.random_range(0.0..=MAX_TILT);
            let a = side * (sign * tilt.cos()) + down * tilt.sin();
            let b = a.cross(y);
            let reach = 0.3 * h[other].min(h[2]);
            let centre = b * rng.random_range(-reach..=reach);
            candidate(centre, a, y, 2.0 * h[axis])
        }
        Family::CylinderSide { radius, half_height } => {
            let heading = rng.random_range(-PI..PI);
            let tilt = rng.random_range(0.0..=MAX_TILT);
            let h = Vec3::new(heading.cos(), heading.sin(), 0.0);
            let a = h * tilt.cos() + down * tilt.sin();
            let y = horizontal_perp(h, Vec3::unit_y());
            // On the axis, at or above mid-height so tilted approaches still face the centroid.
            let centre = Vec3::new(0.0, 0.0, rng.random_range(0.0..=0.3 * half_height));
            candidate(centre, a, y, 2.0 * radius)
        }
        Family::CylinderTop { radius, half_height } => {
            let heading = rng.random_range(-PI..PI);
            let y = Vec3::new(heading.cos(), heading.sin(), 0.0);
            let depth = (0.02f64).min(half_height / 2.0);
            candidate(Vec3::new(0.0, 0.0, half_height - depth), down, y, 2.0 * radius)
        }
    }
}

/// `n` candidates cycling through the feasible grasp families of `spec`.
/// Objects too wide for the gripper yield an empty list.
pub fn generate_candidates(spec: &ObjectSpec, n: usize, seed: u64) -> Result<Vec<GraspCandidate>> {
    if n == 0 {
        return Err(Error::invalid("need at least one candidate"));
    }
    let fams = families(&spec.shape);
    if fams.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CANDIDATE_STREAM);
    Ok((0..n).map(|i| sample(&fams[i % fams.len()], &mut rng)).collect())
}

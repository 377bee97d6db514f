//! Prescribed platform motion for the four difficulty levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::wrap_angle;
use crate::se3::{Pose6, Twist, Vec3};

const TRAJECTORY_STREAM: u64 = 0x7472_616a_0000_0001;

pub const PLATFORM_Z_RANGE: [f64; 2] = [0.2, 0.7];
/// Acceleration bound for the stochastic modes, m/s^2.
pub const MAX_ACCEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    Linear,
    Arc,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZPolicy {
    Fixed,
    Free { min: f64, max: f64 },
}

/// Mean-reverting velocity noise: `dv = -theta (v - mean) dt + sigma dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub theta: f64,
    pub sigma: f64,
    pub sigma_z: f64,
    /// Gain pulling the vertical mean velocity toward the middle of the z band.
    pub z_centering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformTrajectory {
    pub level: u8,
    pub mode: MotionMode,
    pub speed_range: [f64; 2],
    pub z_policy: ZPolicy,
    /// Constant speed of the linear and arc modes.
    pub speed: f64,
    /// Initial heading, which is also the platform yaw.
    pub heading: f64,
    /// Signed arc radius; positive turns left.
    pub arc_radius: f64,
    pub ou: OuParams,
}

pub fn level_speed_range(level: u8) -> Result<[f64; 2]> {
    match level {
        1 => Ok([0.0, 0.15]),
        2 => Ok([0.15, 0.30]),
        3 | 4 => Ok([0.0, 0.30]),
        _ => Err(Error::invalid(format!("level must be 1..=4, got {level}"))),
    }
}

const DEFAULT_OU: OuParams = OuParams {
    theta: 1.0,
    sigma: 0.21,
    sigma_z: 0.12,
    z_centering: 0.4,
};

pub fn make_trajectory(level: u8, seed: u64) -> Result<PlatformTrajectory> {
    let speed_range = level_speed_range(level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TRAJECTORY_STREAM);
    let heading = wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
    let (mode, speed, arc_radius) = if level <= 2 {
        let speed = rng.random_range(speed_range[0]..=speed_range[1]);
        let radius = rng.random_range(1.0..=3.0);
        let left = rng.random_bool(0.5);
        if rng.random_bool(0.5) {
            (MotionMode::Linear, speed, 0.0)
        } else {
            (MotionMode::Arc, speed, if left { radius } else { -radius })
        }
    } else {
        (MotionMode::Random, 0.0, 0.0)
    };
    let z_policy = if level == 4 {
        ZPolicy::Free {
            min: PLATFORM_Z_RANGE[0],
            max: PLATFORM_Z_RANGE[1],
        }
    } else {
        ZPolicy::Fixed
    };
    Ok(PlatformTrajectory {
        level,
        mode,
        speed_range,
        z_policy,
        speed,
        heading,
        arc_radius,
        ou: DEFAULT_OU,
    })
}

impl PlatformTrajectory {
    /// A platform that never moves.
    pub fn stationary(level: u8) -> Result<Self> {
        Ok(Self {
            level,
            mode: MotionMode::Linear,
            speed_range: level_speed_range(level)?,
            z_policy: ZPolicy::Fixed,
            speed: 0.0,
            heading: 0.0,
            arc_radius: 0.0,
            ou: DEFAULT_OU,
        })
    }

    /// Velocity the platform starts with.
    pub fn initial_twist(&self) -> Twist<f64> {
        match self.mode {
            MotionMode::Random => Twist::zero(),
            _ => self.deterministic_twist(self.heading),
        }
    }

    fn deterministic_twist(&self, yaw: f64) -> Twist<f64> {
        let linear = Vec3::new(self.speed * yaw.cos(), self.speed * yaw.sin(), 0.0);
        let wz = match self.mode {
            MotionMode::Arc if self.arc_radius != 0.0 => self.speed / self.arc_radius,
            _ => 0.0,
        };
        Twist {
            linear,
            angular: Vec3::new(0.0, 0.0, wz),
        }
    }

    /// Advances the platform by `dt`. The returned twist is the one applied
    /// over the step, so `(pose' - pose) / dt == twist.linear` for translation.
    pub fn step(
        &self,
        pose: &Pose6<f64>,
        twist: &Twist<f64>,
        rng: &mut ChaCha8Rng,
        dt: f64,
    ) -> (Pose6<f64>, Twist<f64>) {
        match self.mode {
            MotionMode::Linear | MotionMode::Arc => {
                let tw = self.deterministic_twist(pose.orientation.z);
                if tw.linear == Vec3::zero() && tw.angular == Vec3::zero() {
                    return (*pose, tw);
                }
                let p = pose.position + tw.linear * dt;
                let yaw = pose.orientation.z + tw.angular.z * dt;
                (Pose6::from_xyz_yaw(p.x, p.y, p.z, yaw), tw)
            }
            MotionMode::Random => self.step_random(pose, twist, rng, dt),
        }
    }

    fn step_random(
        &self,
        pose: &Pose6<f64>,
        twist: &Twist<f64>,
        rng: &mut ChaCha8Rng,
        dt: f64,
    ) -> (Pose6<f64>, Twist<f64>) {
        let OuParams {
            theta,
            sigma,
            sigma_z,
            z_centering,
        } = self.ou;
        let v = twist.linear;
        let sq = dt.sqrt();
        let mut n = || -> f64 { StandardNormal.sample(rng) };
        let (nx, ny, nz) = (n(), n(), n());
        let mut dv = Vec3::new(
            -theta * v.x * dt + sigma * sq * nx,
            -theta * v.y * dt + sigma * sq * ny,
            0.0,
        );
        let z = pose.position.z;
        if let ZPolicy::Free { min, max } = self.z_policy {
            let mean = z_centering * (0.5 * (min + max) - z);
            dv.z = -theta * (v.z - mean) * dt + sigma_z * sq * nz;
        }
        let mut nv = (v + dv.clamp_norm(MAX_ACCEL * dt)).clamp_norm(self.speed_range[1]);
        let mut nz = z;
        if let ZPolicy::Free { min, max } = self.z_policy {
            // Never head toward a bound faster than braking at MAX_ACCEL allows.
            let limit = |d: f64| (2.0 * MAX_ACCEL * d.max(0.0)).sqrt();
            nv.z = nv.z.clamp(-limit(z - min), limit(max - z));
            nz = (z + nv.z * dt).clamp(min, max);
            nv.z = (nz - z) / dt;
        } else {
            nv.z = 0.0;
        }
        let p = Vec3::new(pose.position.x + nv.x * dt, pose.position.y + nv.y * dt, nz);
        (
            Pose6::from_xyz_yaw(p.x, p.y, p.z, pose.orientation.z),
            Twist {
                linear: nv,
                angular: Vec3::zero(),
            },
        )
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robot::RobotState;
use crate::se3::{Pose6, Vec3};

pub use crate::nn::student::{IMAGE_HEIGHT, IMAGE_WIDTH};

pub const DEFAULT_HFOV_DEG: f64 = 87.0;
pub const BASE_CAMERA_PITCH_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mount {
    /// Rigid on the body; parent frame is the base pose.
    Base,
    /// Rigid on the gripper; parent frame is the end-effector pose.
    Wrist,
}

/// Pinhole camera looking along its local +x with +y left and +z up.
/// A point `(x, y, z)` in the camera frame lands on pixel
/// `u = cx - f y / x`, `v = cy - f z / x`, with pixel centres at half-integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, rad.
    pub hfov: f64,
    pub mount: Mount,
    pub mount_offset: Pose6<f64>,
}

impl CameraModel {
    pub fn base() -> Self {
        CameraModel {
            width: IMAGE_WIDTH,
            height: IMAGE_HEIGHT,
            hfov: DEFAULT_HFOV_DEG.to_radians(),
            mount: Mount::Base,
            mount_offset: Pose6::new(Vec3::new(0.3, 0.0, 0.1), Vec3::new(0.0, BASE_CAMERA_PITCH_DEG.to_radians(), 0.0)),
        }
    }

    pub fn wrist() -> Self {
        CameraModel {
            width: IMAGE_WIDTH,
            height: IMAGE_HEIGHT,
            hfov: DEFAULT_HFOV_DEG.to_radians(),
            mount: Mount::Wrist,
            mount_offset: Pose6::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera resolution must be non-zero"));
        }
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return Err(Error::invalid(format!("horizontal FOV {} outside (0, pi)", self.hfov)));
        }
        Ok(())
    }

    /// Focal length in pixels; square pixels.
    pub fn focal(&self) -> f64 {
        self.width as f64 / 2.0 / (self.hfov / 2.0).tan()
    }

    pub fn vfov(&self) -> f64 {
        2.0 * (self.height as f64 / 2.0 / self.focal()).atan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// World pose of the optical frame.
    pub fn world_pose(&self, robot: &RobotState) -> Pose6<f64> {
        let parent = match self.mount {
            Mount::Base => robot.base_pose,
            Mount::Wrist => robot.ee_pose,
        };
        parent.compose(&self.mount_offset)
    }

    /// Pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: Vec3<f64>) -> Option<(f64, f64)> {
        if p.x <= 0.0 {
            return None;
        }
        let f = self.focal();
        let (cx, cy) = self.principal_point();
        Some((cx - f * p.y / p.x, cy - f * p.z / p.x))
    }

    /// Camera-frame ray through the centre of pixel `(row, col)`, scaled so its
    /// x component is 1; the ray parameter is then the z-depth.
    pub fn pixel_ray(&self, row: usize, col: usize) -> Vec3<f64> {
        let f = self.focal();
        let (cx, cy) = self.principal_point();
        Vec3::new(1.0, (cx - (col as f64 + 0.5)) / f, (cy - (row as f64 + 0.5)) / f)
    }
}

//! Episode configuration, the scene value type and its pure stepping.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{self, ObjectSpec};
use super::status::GraspCheck;
use super::terrain::{sample_terrain, TerrainField};
use super::trajectory::{make_trajectory, PlatformTrajectory, PLATFORM_Z_RANGE};
use crate::error::{Error, Result};
use crate::se3::{Pose6, Twist, Vec3};

pub const PHYSICS_DT: f64 = 0.02;
pub const DECISION_DT: f64 = 0.1;
pub const TIMEOUT_STEPS: u32 = 300;
/// Platform overhang beyond the object footprint on each side.
pub const PLATFORM_MARGIN: f64 = 0.02;
pub const PLATFORM_THICKNESS: f64 = 0.02;
pub const TERRAIN_EXTENT: f64 = 30.0;
pub const TERRAIN_CELL: f64 = 0.25;
pub const SPAWN_DISTANCE: [f64; 2] = [1.5, 2.5];
pub const SPAWN_LATERAL: f64 = 0.3;

const SCENE_STREAM: u64 = 0x7363_656e_6500_0002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub level: u8,
    pub object_id: String,
    pub seed: u64,
    #[serde(default = "default_physics_dt")]
    pub physics_dt: f64,
    #[serde(default = "default_decision_dt")]
    pub decision_dt: f64,
    #[serde(default = "default_timeout")]
    pub timeout_steps: u32,
    #[serde(default)]
    pub grasp: GraspCheck,
}

fn default_physics_dt() -> f64 {
    PHYSICS_DT
}
fn default_decision_dt() -> f64 {
    DECISION_DT
}
fn default_timeout() -> u32 {
    TIMEOUT_STEPS
}

impl EpisodeConfig {
    pub fn new(level: u8, object_id: impl Into<String>, seed: u64) -> Self {
        Self {
            level,
            object_id: object_id.into(),
            seed,
            physics_dt: PHYSICS_DT,
            decision_dt: DECISION_DT,
            timeout_steps: TIMEOUT_STEPS,
            grasp: GraspCheck::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.level) {
            return Err(Error::invalid(format!("level must be 1..=4, got {}", self.level)));
        }
        if !(self.physics_dt > 0.0 && self.decision_dt > 0.0) {
            return Err(Error::invalid("time steps must be positive"));
        }
        let ratio = self.decision_dt / self.physics_dt;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "decision_dt {} is not an integer multiple of physics_dt {}",
                self.decision_dt, self.physics_dt
            )));
        }
        if self.timeout_steps == 0 {
            return Err(Error::invalid("timeout_steps must be positive"));
        }
        Ok(())
    }

    /// Physics steps per decision step.
    pub fn substeps(&self) -> usize {
        (self.decision_dt / self.physics_dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attachment {
    Platform,
    Gripper,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub time: f64,
    /// Centre of the platform's top surface.
    pub platform_pose: Pose6<f64>,
    pub platform_twist: Twist<f64>,
    pub platform_half_extents: Vec3<f64>,
    pub object: ObjectSpec,
    pub object_pose: Pose6<f64>,
    pub object_twist: Twist<f64>,
    pub attached_to: Attachment,
    /// Object pose in the frame of whatever it is attached to.
    pub attach_offset: Pose6<f64>,
    pub terrain: Arc<TerrainField>,
    pub rng: ChaCha8Rng,
}

pub fn platform_half_extents(object: &ObjectSpec) -> Vec3<f64> {
    let h = object.shape.half_extents();
    Vec3::new(h.x + PLATFORM_MARGIN, h.y + PLATFORM_MARGIN, PLATFORM_THICKNESS / 2.0)
}

pub fn reset_episode(config: &EpisodeConfig, catalog: &[ObjectSpec]) -> Result<SceneState> {
    config.validate()?;
    let object = catalog::find(catalog, &config.object_id)?.clone();
    let traj = make_trajectory(config.level, config.seed)?;
    let terrain = Arc::new(sample_terrain(config.seed, TERRAIN_EXTENT, TERRAIN_CELL)?);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SCENE_STREAM);
    let x = rng.random_range(SPAWN_DISTANCE[0]..=SPAWN_DISTANCE[1]);
    let y = rng.random_range(-SPAWN_LATERAL..=SPAWN_LATERAL);
    let z = rng.random_range(PLATFORM_Z_RANGE[0]..=PLATFORM_Z_RANGE[1]);
    let platform_pose = Pose6::from_xyz_yaw(x, y, z, traj.heading);
    let platform_twist = traj.initial_twist();
    let attach_offset = Pose6::from_translation(Vec3::new(0.0, 0.0, object.shape.rest_height()));
    Ok(SceneState {
        time: 0.0,
        platform_pose,
        platform_twist,
        platform_half_extents: platform_half_extents(&object),
        object_pose: platform_pose.compose(&attach_offset),
        object_twist: platform_twist,
        object,
        attached_to: Attachment::Platform,
        attach_offset,
        terrain,
        rng,
    })
}

/// Advances the scene by `dt`. `gripper` is the end-effector pose at the end
/// of the step; it only matters while the object is held.
pub fn step_scene(
    state: &SceneState,
    traj: &PlatformTrajectory,
    dt: f64,
    gripper: &Pose6<f64>,
) -> Result<SceneState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let mut next = state.clone();
    let (pose, twist) = traj.step(&state.platform_pose, &state.platform_twist, &mut next.rng, dt);
    next.platform_pose = pose;
    next.platform_twist = twist;
    match state.attached_to {
        Attachment::Platform => {
            next.object_pose = pose.compose(&state.attach_offset);
            // The mount offset is vertical and yaw-only platforms spin about z,
            // so the object shares the platform twist exactly.
            next.object_twist = twist;
        }
        Attachment::Gripper => {
            next.object_pose = gripper.compose(&state.attach_offset);
            next.object_twist = Twist {
                linear: (next.object_pose.position - state.object_pose.position) * (1.0 / dt),
                angular: Vec3::zero(),
            };
        }
        Attachment::Free => next.object_twist = Twist::zero(),
    }
    next.time = state.time + dt;
    Ok(next)
}

impl SceneState {
    pub fn platform_top(&self) -> f64 {
        self.platform_pose.position.z
    }

    /// Height of the object above where it rests on the platform.
    pub fn lift_height(&self) -> f64 {
        self.object_pose.position.z - (self.platform_top() + self.object.shape.rest_height())
    }

    /// Object centre in the platform frame.
    pub fn object_in_platform(&self) -> Vec3<f64> {
        self.platform_pose.inverse().transform_point(self.object_pose.position)
    }

    /// Whether the object's footprint still lies within the platform's.
    pub fn object_over_platform(&self) -> bool {
        let p = self.object_in_platform();
        let h = self.object.shape.half_extents();
        let eps = 1e-9;
        p.x.abs() + h.x <= self.platform_half_extents.x + eps
            && p.y.abs() + h.y <= self.platform_half_extents.y + eps
    }

    pub fn attach_to_gripper(&mut self, ee_pose: &Pose6<f64>) {
        self.attach_offset = ee_pose.inverse().compose(&self.object_pose);
        self.attached_to = Attachment::Gripper;
    }

    /// Slides a platform-mounted object horizontally; it comes loose once it
    /// overhangs the platform edge.
    pub fn shove(&mut self, direction: Vec3<f64>, distance: f64) {
        if self.attached_to != Attachment::Platform {
            return;
        }
        let Some(d) = Vec3::new(direction.x, direction.y, 0.0).normalized() else {
            return;
        };
        let local = self.platform_pose.rotation().transpose().mul_vec(d * distance);
        self.attach_offset.position = self.attach_offset.position + Vec3::new(local.x, local.y, 0.0);
        self.object_pose = self.platform_pose.compose(&self.attach_offset);
        if !self.object_over_platform() {
            self.attached_to = Attachment::Free;
            self.object_twist = Twist::zero();
        }
    }
}

/// Convenience: the trajectory a config implies.
pub fn trajectory_for(config: &EpisodeConfig) -> Result<PlatformTrajectory> {
    make_trajectory(config.level, config.seed)
}

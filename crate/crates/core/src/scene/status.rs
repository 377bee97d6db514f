//! Episode phase machine and the physical grasp test applied at close time.

use serde::{Deserialize, Serialize};

use super::catalog::Shape;
use super::state::{Attachment, EpisodeConfig, SceneState};
use crate::robot::{GripperState, RobotState};
use crate::scalar::wrap_angle;
use crate::se3::Vec3;

/// Maximum finger opening, m.
pub const GRIPPER_APERTURE: f64 = 0.085;
/// Distance from the end-effector frame origin forward to the finger closing line.
pub const TCP_DEPTH: f64 = 0.015;
pub const LIFT_HEIGHT: f64 = 0.15;
pub const LIFT_HOLD_STEPS: u32 = 10;
pub const MAX_YAW_DRIFT: f64 = 70.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approaching,
    Grasped,
    Lifted,
    Success,
    FailedTimeout,
    FailedDropped,
    FailedYaw,
}

impl Phase {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            Phase::Success | Phase::FailedTimeout | Phase::FailedDropped | Phase::FailedYaw
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Approaching => "approaching",
            Phase::Grasped => "grasped",
            Phase::Lifted => "lifted",
            Phase::Success => "success",
            Phase::FailedTimeout => "failed_timeout",
            Phase::FailedDropped => "failed_dropped",
            Phase::FailedYaw => "failed_yaw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub phase: Phase,
    pub attempt_count: u32,
    pub success_step: Option<u32>,
    /// Consecutive physics steps with the object at lift height.
    pub lift_steps: u32,
}

impl Default for EpisodeStatus {
    fn default() -> Self {
        Self {
            phase: Phase::Approaching,
            attempt_count: 0,
            success_step: None,
            lift_steps: 0,
        }
    }
}

/// Tolerances of the physical grasp test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspCheck {
    pub pos_tol: f64,
    pub ori_tol: f64,
    pub max_rel_speed: f64,
    /// Largest world-z component of the approach axis; steeper means from below.
    pub max_upward_approach: f64,
    /// How far a fumbled close pushes the object.
    pub shove_distance: f64,
}

impl Default for GraspCheck {
    fn default() -> Self {
        Self {
            pos_tol: 0.03,
            ori_tol: 0.30,
            max_rel_speed: 0.25,
            max_upward_approach: 0.5,
            shove_distance: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspVerdict {
    Valid,
    FromBelow,
    TooWide,
    Misaligned,
    Offset,
    TooFast,
}

/// Grasp centre between the fingers, world frame.
pub fn grasp_centre(robot: &RobotState) -> Vec3<f64> {
    let r = robot.ee_pose.rotation();
    robot.ee_pose.position + r.column(0) * TCP_DEPTH
}

/// Whether closing the gripper now would hold the object.
pub fn evaluate_grasp(scene: &SceneState, robot: &RobotState, check: &GraspCheck) -> GraspVerdict {
    let ee_rot = robot.ee_pose.rotation();
    let approach = ee_rot.column(0);
    if approach.z > check.max_upward_approach {
        return GraspVerdict::FromBelow;
    }
    let obj_rot_t = scene.object_pose.rotation().transpose();
    let c = obj_rot_t.mul_vec(grasp_centre(robot) - scene.object_pose.position);
    let close_axis = obj_rot_t.mul_vec(ee_rot.column(1));
    let shape_ok = match scene.object.shape {
        Shape::Sphere { radius } => {
            if 2.0 * radius > GRIPPER_APERTURE {
                Err(GraspVerdict::TooWide)
            } else if c.norm() > check.pos_tol {
                Err(GraspVerdict::Offset)
            } else {
                Ok(())
            }
        }
        Shape::Box { extents } => {
            let a = close_axis.to_array().map(f64::abs);
            let i = (0..3).max_by(|&p, &q| a[p].total_cmp(&a[q])).unwrap_or(0);
            let cc = c.to_array();
            if a[i].min(1.0).acos() > check.ori_tol {
                Err(GraspVerdict::Misaligned)
            } else if extents[i] > GRIPPER_APERTURE {
                Err(GraspVerdict::TooWide)
            } else if cc[i].abs() > check.pos_tol
                || (0..3).any(|j| j != i && cc[j].abs() > extents[j] / 2.0)
            {
                Err(GraspVerdict::Offset)
            } else {
                Ok(())
            }
        }
        Shape::Cylinder { radius, height } => {
            if close_axis.z.abs() > check.ori_tol.sin() {
                Err(GraspVerdict::Misaligned)
            } else if 2.0 * radius > GRIPPER_APERTURE {
                Err(GraspVerdict::TooWide)
            } else if c.norm_xy() > check.pos_tol || c.z.abs() > height / 2.0 {
                Err(GraspVerdict::Offset)
            } else {
                Ok(())
            }
        }
    };
    if let Err(v) = shape_ok {
        return v;
    }
    if (robot.ee_velocity - scene.object_twist.linear).norm() > check.max_rel_speed {
        return GraspVerdict::TooFast;
    }
    GraspVerdict::Valid
}

/// Direction a fumbled close pushes the object, if the fingers hit it.
pub fn fumble_direction(scene: &SceneState, robot: &RobotState) -> Option<Vec3<f64>> {
    let c = grasp_centre(robot);
    if (c - scene.object_pose.position).norm() > scene.object.shape.bounding_radius() {
        return None;
    }
    let close_axis = robot.ee_pose.rotation().column(1);
    let flat = Vec3::new(close_axis.x, close_axis.y, 0.0);
    if flat.norm() > 0.1 {
        return Some(flat);
    }
    let a = robot.ee_pose.rotation().column(0);
    Some(Vec3::new(a.x, a.y, 0.0)).filter(|v| v.norm() > 1e-9)
}

/// Next status after one physics step. `decision_step` is the 1-based index of
/// the decision step being executed; an index past the timeout ends the episode.
/// A closed gripper during `Approaching` is a close event; the caller resolves
/// it (attach or reopen) before the next call.
pub fn check_status(
    scene: &SceneState,
    robot: &RobotState,
    status: &EpisodeStatus,
    config: &EpisodeConfig,
    decision_step: u32,
) -> EpisodeStatus {
    let mut s = *status;
    if s.phase.is_terminal() {
        return s;
    }
    if wrap_angle(robot.yaw() - robot.yaw_ref).abs() > MAX_YAW_DRIFT {
        s.phase = Phase::FailedYaw;
        return s;
    }
    if decision_step > config.timeout_steps {
        s.phase = Phase::FailedTimeout;
        return s;
    }
    match s.phase {
        Phase::Approaching => {
            if robot.gripper == GripperState::Closed {
                s.attempt_count += 1;
                if evaluate_grasp(scene, robot, &config.grasp) == GraspVerdict::Valid {
                    s.phase = Phase::Grasped;
                }
            }
            if s.phase == Phase::Approaching
                && (scene.attached_to == Attachment::Free || !scene.object_over_platform())
            {
                s.phase = Phase::FailedDropped;
            }
        }
        Phase::Grasped | Phase::Lifted => {
            if scene.lift_height() >= LIFT_HEIGHT {
                s.lift_steps += 1;
                s.phase = Phase::Lifted;
                if s.lift_steps >= LIFT_HOLD_STEPS {
                    s.phase = Phase::Success;
                    s.success_step = Some(decision_step);
                }
            } else {
                s.lift_steps = 0;
                s.phase = Phase::Grasped;
            }
        }
        _ => {}
    }
    s
}

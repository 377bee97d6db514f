//! Scripted privileged controller. It sees the object's pose, velocity and
//! descriptor, the robot state and the grasp memory, which is the information
//! a learned high-level policy would be given, so one can replace it behind
//! the same call.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp::{
    build_memory, centroid_grasp, generate_candidates, gfm_forward, object_feature, select_argmax, GfmWeights,
    GraspMemoryBank, ObjectFeature, DEFAULT_K,
};
use crate::robot::{HighLevelAction, RobotState, MAX_OMEGA, MAX_V_LIN, WORKSPACE_CENTER_HEIGHT};
use crate::scalar::wrap_angle;
use crate::scene::catalog::ObjectSpec;
use crate::scene::state::{Attachment, SceneState};
use crate::se3::{Mat3, Pose6, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    /// Preferred planar base-to-object distance, m.
    pub standoff: f64,
    pub align_pos_tol: f64,
    pub align_ori_tol: f64,
    pub max_rel_speed_at_close: f64,
    /// Longest look-ahead when predicting the object's position, s.
    pub intercept_horizon: f64,
    /// Arm reach used to shrink the standoff for low or high objects, m.
    pub reach: f64,
    pub min_standoff: f64,
    /// Back-off along the approach axis while the wrist is still turning, m.
    pub pregrasp: f64,
    /// Height above the platform top the object is carried to, m.
    pub lift_clearance: f64,
    /// Velocity feed-forward on the arm target, s; offsets the arm's tracking lag.
    pub arm_lead: f64,
    pub heading_gain: f64,
    pub distance_gain: f64,
    /// Heading limit relative to the start heading, kept inside the yaw failure bound.
    pub max_heading_offset: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            standoff: 0.6,
            align_pos_tol: 0.025,
            align_ori_tol: 0.26,
            max_rel_speed_at_close: 0.2,
            intercept_horizon: 0.5,
            reach: 0.75,
            min_standoff: 0.2,
            pregrasp: 0.08,
            lift_clearance: 0.3,
            arm_lead: 0.2,
            heading_gain: 2.0,
            distance_gain: 1.5,
            max_heading_offset: 60f64.to_radians(),
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("standoff", self.standoff),
            ("align_pos_tol", self.align_pos_tol),
            ("align_ori_tol", self.align_ori_tol),
            ("max_rel_speed_at_close", self.max_rel_speed_at_close),
            ("intercept_horizon", self.intercept_horizon),
            ("reach", self.reach),
            ("min_standoff", self.min_standoff),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("teacher.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Where the arm is sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspMode {
    /// Attention-weighted fusion of the memory.
    Fused,
    /// The single stored grasp with the largest attention weight.
    Argmax,
    /// Uniform average over the memory, i.e. no learned guidance.
    Centroid,
}

impl GraspMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            GraspMode::Fused => "fused",
            GraspMode::Argmax => "argmax",
            GraspMode::Centroid => "centroid",
        }
    }
}

impl std::str::FromStr for GraspMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(GraspMode::Fused),
            "argmax" => Ok(GraspMode::Argmax),
            "centroid" => Ok(GraspMode::Centroid),
            other => Err(Error::invalid(format!("unknown grasp mode {other:?}"))),
        }
    }
}

/// Per-object state the controller keeps between steps: the memory and the descriptor.
#[derive(Debug, Clone)]
pub struct Teacher {
    pub config: TeacherConfig,
    pub mode: GraspMode,
    pub weights: GfmWeights,
    pub bank: GraspMemoryBank,
    pub feature: ObjectFeature,
}

/// Memory bank construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BankParams {
    pub candidates: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for BankParams {
    fn default() -> Self {
        BankParams {
            candidates: 200,
            k: DEFAULT_K,
            seed: 0,
        }
    }
}

pub fn bank_for(spec: &ObjectSpec, params: &BankParams) -> Result<GraspMemoryBank> {
    let candidates = generate_candidates(spec, params.candidates, params.seed)?;
    build_memory(&spec.id, &candidates, params.k)
}

impl Teacher {
    pub fn new(
        spec: &ObjectSpec,
        config: TeacherConfig,
        mode: GraspMode,
        weights: GfmWeights,
        params: &BankParams,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Teacher {
            config,
            mode,
            weights,
            bank: bank_for(spec, params)?,
            feature: object_feature(spec),
        })
    }

    pub fn act(&self, scene: &SceneState, robot: &RobotState) -> Result<HighLevelAction> {
        teacher_step_with(scene, robot, &self.bank, &self.feature, &self.weights, &self.config, self.mode)
    }
}

/// `teacher_step_with` in fused mode, computing the descriptor on the spot.
pub fn teacher_step(
    scene: &SceneState,
    robot: &RobotState,
    bank: &GraspMemoryBank,
    weights: &GfmWeights,
    cfg: &TeacherConfig,
) -> Result<HighLevelAction> {
    let feature = object_feature(&scene.object);
    teacher_step_with(scene, robot, bank, &feature, weights, cfg, GraspMode::Fused)
}

/// Object pose in the robot's yaw-only base frame.
pub fn object_in_base(scene: &SceneState, robot: &RobotState) -> Pose6<f64> {
    robot.base_frame().inverse().compose(&scene.object_pose)
}

/// Grasp target in the base frame for the given mode.
pub fn grasp_target(
    scene: &SceneState,
    robot: &RobotState,
    bank: &GraspMemoryBank,
    feature: &ObjectFeature,
    weights: &GfmWeights,
    mode: GraspMode,
) -> Result<Pose6<f64>> {
    let obj = object_in_base(scene, robot);
    match mode {
        GraspMode::Fused => Ok(gfm_forward(feature, &obj, bank, weights)?.fused),
        GraspMode::Argmax => select_argmax(bank, &obj, feature, weights),
        GraspMode::Centroid => {
            if bank.is_empty() {
                return Err(Error::EmptyBank);
            }
            centroid_grasp(bank, &obj, weights)
        }
    }
}

/// Standoff that keeps an object at height `z` (base frame) within reach.
pub fn adaptive_standoff(cfg: &TeacherConfig, z: f64) -> f64 {
    let dz = z - WORKSPACE_CENTER_HEIGHT;
    let planar = (cfg.reach * cfg.reach - dz * dz).max(0.0).sqrt();
    cfg.standoff.min(planar).max(cfg.min_standoff)
}

/// Predicted object position in the base frame, `x + v * min(horizon, time-to-reach)`.
pub fn intercept_point(scene: &SceneState, robot: &RobotState, cfg: &TeacherConfig) -> Vec3<f64> {
    let to_base = robot.base_frame().inverse();
    let p = scene.object_pose.position;
    let b = robot.base_pose.position;
    let standoff = adaptive_standoff(cfg, to_base.transform_point(p).z);
    let dist = ((p.x - b.x).powi(2) + (p.y - b.y).powi(2)).sqrt();
    let t_reach = ((dist - standoff).max(0.0) / MAX_V_LIN).min(cfg.intercept_horizon);
    to_base.transform_point(p + scene.object_twist.linear * t_reach)
}

/// A parallel-jaw grasp is unchanged by a half turn about its approach axis;
/// picks the variant nearer `current`.
pub fn nearest_equivalent(target: &Pose6<f64>, current: &Pose6<f64>) -> Pose6<f64> {
    let r = target.rotation();
    let flipped = Pose6::from_rotation(target.position, &(r * Mat3::rot_x(std::f64::consts::PI)));
    let cur = current.rotation();
    if cur.angle_to(&flipped.rotation()) < cur.angle_to(&r) {
        flipped
    } else {
        *target
    }
}

fn orientation_step(from: Vec3<f64>, to: Vec3<f64>) -> Vec3<f64> {
    Vec3::new(wrap_angle(to.x - from.x), wrap_angle(to.y - from.y), wrap_angle(to.z - from.z))
}

pub fn teacher_step_with(
    scene: &SceneState,
    robot: &RobotState,
    bank: &GraspMemoryBank,
    feature: &ObjectFeature,
    weights: &GfmWeights,
    cfg: &TeacherConfig,
    mode: GraspMode,
) -> Result<HighLevelAction> {
    let base = robot.base_frame();
    let to_base = base.inverse();
    let rot_t = base.rotation().transpose();
    let obj = to_base.compose(&scene.object_pose);

    if scene.attached_to == Attachment::Gripper {
        // Carry straight up and hold still.
        let top = to_base.transform_point(scene.platform_pose.position).z;
        let goal = Vec3::new(
            robot.ee_target.position.x,
            robot.ee_target.position.y,
            top + scene.object.shape.rest_height() + cfg.lift_clearance,
        );
        return Ok(HighLevelAction::new(
            goal - robot.ee_target.position,
            Vec3::zero(),
            0.0,
            0.0,
            true,
        ));
    }

    // Base: head for a standoff point short of where the object will be.
    let v = scene.object_twist.linear;
    let standoff = adaptive_standoff(cfg, obj.position.z);
    let predicted = intercept_point(scene, robot, cfg);
    let bearing = predicted.y.atan2(predicted.x);
    let offset = wrap_angle(robot.yaw() + bearing - robot.yaw_ref).clamp(-cfg.max_heading_offset, cfg.max_heading_offset);
    let heading_err = wrap_angle(robot.yaw_ref + offset - robot.yaw());
    let v_obj = rot_t.mul_vec(v);
    let r2 = (predicted.x * predicted.x + predicted.y * predicted.y).max(1e-6);
    // Line-of-sight rate from the object's own motion.
    let los_rate = (predicted.x * v_obj.y - predicted.y * v_obj.x) / r2;
    let omega = (cfg.heading_gain * heading_err + los_rate).clamp(-MAX_OMEGA, MAX_OMEGA);
    let v_lin = (cfg.distance_gain * (predicted.x - standoff) + v_obj.x).clamp(-MAX_V_LIN, MAX_V_LIN);

    // Arm: track the grasp with a velocity lead.
    let grasp = grasp_target(scene, robot, bank, feature, weights, mode)?;
    let grasp = nearest_equivalent(&grasp, &robot.ee_target);
    let w = robot.base_twist.angular.z;
    let v_rel = rot_t.mul_vec(v - robot.base_twist.linear) - Vec3::new(-w * obj.position.y, w * obj.position.x, 0.0);
    let ee = robot.ee_local();
    let ori_err = ee.rotation().angle_to(&grasp.rotation());
    let approach = grasp.rotation().column(0);
    let back = if ori_err > 2.0 * cfg.align_ori_tol { cfg.pregrasp } else { 0.0 };
    let goal = grasp.position - approach * back + v_rel * cfg.arm_lead;
    let dp = goal - robot.ee_target.position;
    let dr = orientation_step(robot.ee_target.orientation, grasp.orientation);

    let pos_err = (ee.position - grasp.position).norm();
    let rel_speed = (robot.ee_velocity - v).norm();
    let close = pos_err <= cfg.align_pos_tol && ori_err <= cfg.align_ori_tol && rel_speed <= cfg.max_rel_speed_at_close;
    Ok(HighLevelAction::new(dp, dr, v_lin, omega, close))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::catalog::default_catalog;
    use crate::scene::reset_episode;
    use crate::scene::EpisodeConfig;
    use crate::se3::Twist;

    fn setup(id: &str) -> (SceneState, RobotState, Teacher) {
        let catalog = default_catalog();
        let spec = catalog.iter().find(|s| s.id == id).unwrap();
        let scene = reset_episode(&EpisodeConfig::new(1, id, 3), &catalog).unwrap();
        let robot = RobotState::spawn(&scene.terrain, 0.0, 0.0, 0.0);
        let t = Teacher::new(spec, TeacherConfig::default(), GraspMode::Fused, GfmWeights::default(), &BankParams::default()).unwrap();
        (scene, robot, t)
    }

    #[test]
    fn standoff_shrinks_for_low_objects() {
        let cfg = TeacherConfig::default();
        assert_eq!(adaptive_standoff(&cfg, 0.3), 0.6);
        assert!(adaptive_standoff(&cfg, -0.4) < 0.6);
        assert_eq!(adaptive_standoff(&cfg, -2.0), cfg.min_standoff);
    }

    #[test]
    fn static_object_ahead_drives_forward_and_steers_toward_it() {
        let (mut scene, robot, t) = setup("soup_can");
        scene.platform_twist = Twist::zero();
        scene.object_twist = Twist::zero();
        for y in [-0.8, 0.8] {
            scene.object_pose.position = Vec3::new(3.0, y, scene.object_pose.position.z);
            let a = t.act(&scene, &robot).unwrap();
            assert!(a.v_lin > 0.0);
            assert_eq!(a.omega_yaw.signum(), y.signum());
            assert!(!a.gripper_close);
        }
    }

    #[test]
    fn flipped_grasp_is_equivalent_and_nearer() {
        let g = Pose6::new(Vec3::new(0.5, 0.0, 0.2), Vec3::new(0.0, 0.3, 0.2));
        let cur = Pose6::new(Vec3::zero(), Vec3::new(std::f64::consts::PI, -0.3, 0.2 + std::f64::consts::PI));
        let n = nearest_equivalent(&g, &cur);
        assert!(n.rotation().column(0).max_abs_diff(g.rotation().column(0)) < 1e-12);
        assert!(cur.rotation().angle_to(&n.rotation()) <= cur.rotation().angle_to(&g.rotation()));
    }
}

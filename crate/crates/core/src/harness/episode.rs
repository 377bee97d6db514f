use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp::{Alignment, GfmWeights};
use crate::nn::student::PROPRIO_DIM;
use crate::nn::Tensor;
use crate::perception::{
    proprio_vector, render_frame, stack_observation, CameraModel, Frame, LatencyBuffer, ObsHistory, LATENCY_STEPS,
};
use crate::rewards::{high_level_reward_with, HighLevelRewardInput, HighLevelWeights, TaskPhase};
use crate::robot::{accumulate_command, execute_command, GripperState, HighLevelAction, RobotState, NOMINAL_BODY_HEIGHT};
use crate::scene::catalog::{self, ObjectSpec};
use crate::scene::state::{reset_episode, step_scene, trajectory_for, EpisodeConfig, SceneState};
use crate::scene::status::{check_status, fumble_direction, grasp_centre, EpisodeStatus, Phase};
use crate::se3::{vec6_encode, Vec3};

use super::teacher::{BankParams, GraspMode, Teacher, TeacherConfig};

/// Everything about an episode that is not part of the scene config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeOptions {
    pub teacher: TeacherConfig,
    pub mode: GraspMode,
    pub bearing_gain: f64,
    pub height_bias: f64,
    pub bank: BankParams,
    /// Render and buffer observations every decision step.
    pub observe: bool,
    pub wrist_camera: CameraModel,
    pub base_camera: CameraModel,
    /// Keep per-step records in the log.
    pub record_steps: bool,
    pub reward_weights: HighLevelWeights,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        let a = Alignment::default();
        EpisodeOptions {
            teacher: TeacherConfig::default(),
            mode: GraspMode::Fused,
            bearing_gain: a.bearing_gain,
            height_bias: a.height_bias,
            bank: BankParams::default(),
            observe: false,
            wrist_camera: CameraModel::wrist(),
            base_camera: CameraModel::base(),
            record_steps: true,
            reward_weights: HighLevelWeights::default(),
        }
    }
}

impl EpisodeOptions {
    pub fn gfm_weights(&self) -> GfmWeights {
        GfmWeights::alignment(Alignment {
            bearing_gain: self.bearing_gain,
            height_bias: self.height_bias,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloseEvent {
    pub step: u32,
    pub success: bool,
}

/// Snapshot at the end of a decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub time: f64,
    pub platform: [f64; 6],
    pub object: [f64; 6],
    pub base: [f64; 6],
    pub ee: [f64; 6],
    pub gripper: GripperState,
    /// `[dp, dr, v_lin, omega_yaw]`.
    pub action: [f64; 8],
    pub gripper_close: bool,
    pub reward: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub config: EpisodeConfig,
    pub mode: GraspMode,
    pub category: String,
    pub split: String,
    pub steps: Vec<StepRecord>,
    pub close_events: Vec<CloseEvent>,
    pub outcome: EpisodeStatus,
    /// Decision steps executed.
    pub decision_steps: u32,
}

impl EpisodeLog {
    pub fn succeeded(&self) -> bool {
        self.outcome.phase == Phase::Success
    }

    /// Succeeded, and the first close already held the object.
    pub fn one_shot(&self) -> bool {
        self.succeeded() && self.close_events.first().is_some_and(|e| e.success)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::invalid(format!("log serialization: {e}")))
    }
}

/// What the student would see at one decision step, with the teacher's label.
#[derive(Debug, Clone)]
pub struct StepSample<'a> {
    pub step: u32,
    /// State the teacher acted on, before the step is executed.
    pub scene: &'a SceneState,
    pub robot: &'a RobotState,
    pub observation: Tensor,
    pub proprio: [f32; PROPRIO_DIM],
    pub action: HighLevelAction,
}

/// Called once per observed decision step; an error aborts the episode.
pub type StepCallback<'a> = &'a mut dyn FnMut(&StepSample<'_>) -> Result<()>;

/// Per-view capture pipeline: render, delay, stack.
struct Observer {
    wrist_cam: CameraModel,
    base_cam: CameraModel,
    wrist_delay: LatencyBuffer<Frame>,
    base_delay: LatencyBuffer<Frame>,
    wrist: ObsHistory,
    base: ObsHistory,
}

impl Observer {
    fn new(opts: &EpisodeOptions) -> Self {
        Observer {
            wrist_cam: opts.wrist_camera,
            base_cam: opts.base_camera,
            wrist_delay: LatencyBuffer::new(LATENCY_STEPS),
            base_delay: LatencyBuffer::new(LATENCY_STEPS),
            wrist: ObsHistory::new(),
            base: ObsHistory::new(),
        }
    }

    fn observe(&mut self, scene: &SceneState, robot: &RobotState, proprio: [f32; PROPRIO_DIM]) -> Result<Tensor> {
        let w = self.wrist_delay.push_and_fetch(render_frame(scene, robot, &self.wrist_cam));
        let b = self.base_delay.push_and_fetch(render_frame(scene, robot, &self.base_cam));
        self.wrist.push(w, proprio);
        self.base.push(b, proprio);
        stack_observation(&self.wrist, &self.base)
    }
}

fn task_phase(phase: Phase) -> TaskPhase {
    match phase {
        Phase::Grasped => TaskPhase::Grasped,
        Phase::Lifted | Phase::Success => TaskPhase::Lifted,
        _ => TaskPhase::Approaching,
    }
}

fn unit_or_x(v: Vec3<f64>) -> Vec3<f64> {
    v.normalized().unwrap_or(Vec3::unit_x())
}

struct RewardContext {
    q_dot_prev: [f64; 12],
    a_prev: [f64; 8],
}

fn step_reward(
    scene: &SceneState,
    robot: &RobotState,
    before: &RobotState,
    status: &EpisodeStatus,
    action: &HighLevelAction,
    dt: f64,
    weights: &HighLevelWeights,
    ctx: &mut RewardContext,
) -> Result<f64> {
    let mut q_dot = [0.0; 12];
    for (i, q) in q_dot.iter_mut().enumerate() {
        *q = (robot.joint_proxy[i] - before.joint_proxy[i]) / dt;
    }
    let b = robot.base_pose.position;
    let o = scene.object_pose.position;
    let planar = Vec3::new(o.x - b.x, o.y - b.y, 0.0);
    let yaw = robot.yaw();
    let a = action.to_array();
    let input = HighLevelRewardInput {
        phase: task_phase(status.phase),
        dist_ee_obj: (grasp_centre(robot) - o).norm(),
        lift_height: scene.lift_height(),
        completed: status.phase == Phase::Success,
        q_dot_prev: ctx.q_dot_prev,
        q_dot,
        a_prev: ctx.a_prev,
        a,
        v_x_star: action.v_lin,
        d_obj: unit_or_x(planar),
        d_ee: unit_or_x(robot.ee_pose.rotation().column(0)),
        d_base: Vec3::new(yaw.cos(), yaw.sin(), 0.0),
        x_obj: planar.norm(),
        x_base: 0.0,
        h_c: b.z - scene.terrain.height_at(b.x, b.y),
        h_t: NOMINAL_BODY_HEIGHT,
        psi_c: yaw,
        psi_0: robot.yaw_ref,
    };
    ctx.q_dot_prev = q_dot;
    ctx.a_prev = a;
    Ok(high_level_reward_with(&input, weights)?.total)
}

/// Runs one episode with the scripted teacher. Deterministic in
/// `(config, options)`. `on_step` receives the observation and label of every
/// decision step when `options.observe` is set.
pub fn run_episode(
    config: &EpisodeConfig,
    catalog: &[ObjectSpec],
    options: &EpisodeOptions,
    on_step: Option<StepCallback<'_>>,
) -> Result<EpisodeLog> {
    run_inner(config, catalog, options, on_step).map_err(|e| match e {
        Error::Episode { .. } => e,
        other => Error::Episode {
            level: config.level,
            seed: config.seed,
            source: Box::new(other),
        },
    })
}

fn run_inner(
    config: &EpisodeConfig,
    catalog: &[ObjectSpec],
    options: &EpisodeOptions,
    mut on_step: Option<StepCallback<'_>>,
) -> Result<EpisodeLog> {
    config.validate()?;
    let spec = catalog::find(catalog, &config.object_id)?;
    let teacher = Teacher::new(spec, options.teacher, options.mode, options.gfm_weights(), &options.bank)?;
    let traj = trajectory_for(config)?;
    let mut scene = reset_episode(config, catalog)?;
    let mut robot = RobotState::spawn(&scene.terrain, 0.0, 0.0, 0.0);
    let mut status = EpisodeStatus::default();
    let mut observer = options.observe.then(|| Observer::new(options));
    let mut last_action = HighLevelAction::zero();
    let mut ctx = RewardContext {
        q_dot_prev: [0.0; 12],
        a_prev: [0.0; 8],
    };
    let mut log = EpisodeLog {
        config: config.clone(),
        mode: options.mode,
        category: spec.category.as_str().to_string(),
        split: spec.split.as_str().to_string(),
        steps: Vec::new(),
        close_events: Vec::new(),
        outcome: status,
        decision_steps: 0,
    };
    let dt = config.physics_dt;

    for k in 1.. {
        if k > config.timeout_steps {
            status = check_status(&scene, &robot, &status, config, k);
            break;
        }
        let action = teacher.act(&scene, &robot)?;
        if let Some(obs) = observer.as_mut() {
            let proprio = proprio_vector(&robot, &scene.terrain, &last_action);
            let observation = obs.observe(&scene, &robot, proprio)?;
            if let Some(cb) = on_step.as_mut() {
                cb(&StepSample {
                    step: k,
                    scene: &scene,
                    robot: &robot,
                    observation,
                    proprio,
                    action,
                })?;
            }
        }
        let before = robot.clone();
        robot.gripper = if action.gripper_close { GripperState::Closed } else { GripperState::Open };
        let command = accumulate_command(&robot, &action);
        for _ in 0..config.substeps() {
            robot = execute_command(&robot, &command, &scene.terrain, dt)?;
            scene = step_scene(&scene, &traj, dt, &robot.ee_pose)?;
            let next = check_status(&scene, &robot, &status, config, k);
            if next.attempt_count > status.attempt_count {
                let success = next.phase == Phase::Grasped;
                if success {
                    scene.attach_to_gripper(&robot.ee_pose);
                } else {
                    robot.gripper = GripperState::Open;
                    if let Some(d) = fumble_direction(&scene, &robot) {
                        scene.shove(d, config.grasp.shove_distance);
                    }
                }
                log.close_events.push(CloseEvent { step: k, success });
            }
            status = next;
            if status.phase.is_terminal() {
                break;
            }
        }
        let reward = step_reward(&scene, &robot, &before, &status, &action, config.decision_dt, &options.reward_weights, &mut ctx)?;
        log.decision_steps = k;
        if options.record_steps {
            log.steps.push(StepRecord {
                step: k,
                time: scene.time,
                platform: vec6_encode(&scene.platform_pose),
                object: vec6_encode(&scene.object_pose),
                base: vec6_encode(&robot.base_pose),
                ee: vec6_encode(&robot.ee_pose),
                gripper: robot.gripper,
                action: action.to_array(),
                gripper_close: action.gripper_close,
                reward,
                phase: status.phase,
            });
        }
        last_action = action;
        if status.phase.is_terminal() {
            break;
        }
    }
    log.outcome = status;
    Ok(log)
}

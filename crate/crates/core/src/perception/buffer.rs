use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::nn::student::{HISTORY, OBS_CHANNELS, PROPRIO_DIM};
use crate::nn::Tensor;
use crate::robot::{GripperState, HighLevelAction, RobotState};
use crate::scene::terrain::TerrainField;
use crate::se3::vec6_encode;

use super::camera::{IMAGE_HEIGHT, IMAGE_WIDTH};
use super::render::Frame;

pub const LATENCY_STEPS: usize = 4;
/// Depths beyond this are clipped before normalization.
pub const DEPTH_CLIP: f32 = 5.0;

/// Fixed delay line. Until it has seen `delay + 1` items it keeps returning
/// the first one.
#[derive(Debug, Clone)]
pub struct LatencyBuffer<T> {
    delay: usize,
    queue: VecDeque<T>,
}

impl<T: Clone> LatencyBuffer<T> {
    pub fn new(delay: usize) -> Self {
        LatencyBuffer {
            delay,
            queue: VecDeque::with_capacity(delay + 1),
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn push_and_fetch(&mut self, item: T) -> T {
        self.queue.push_back(item);
        if self.queue.len() > self.delay + 1 {
            self.queue.pop_front();
        }
        self.queue.front().cloned().expect("queue holds the item just pushed")
    }
}

impl<T: Clone> Default for LatencyBuffer<T> {
    fn default() -> Self {
        Self::new(LATENCY_STEPS)
    }
}

/// Last `HISTORY` frames of one view plus the proprioceptive snapshot taken
/// with the newest frame.
#[derive(Debug, Clone, Default)]
pub struct ObsHistory {
    frames: VecDeque<Frame>,
    pub proprio: Option<[f32; PROPRIO_DIM]>,
}

impl ObsHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: Frame, proprio: [f32; PROPRIO_DIM]) {
        self.frames.push_back(frame);
        if self.frames.len() > HISTORY {
            self.frames.pop_front();
        }
        self.proprio = Some(proprio);
    }

    pub fn is_warm(&self) -> bool {
        !self.frames.is_empty()
    }

    /// Oldest first; missing early slots repeat the oldest frame held.
    pub fn frames(&self) -> Result<Vec<&Frame>> {
        let oldest = self.frames.front().ok_or(Error::NotReady("no frame pushed yet"))?;
        let pad = HISTORY - self.frames.len();
        Ok(std::iter::repeat_n(oldest, pad).chain(self.frames.iter()).collect())
    }
}

/// Channel order: wrist mask t-2, t-1, t; wrist depth x3; base mask x3; base
/// depth x3. Masks are 0/1; depth is clipped to 5 m and divided by 5.
pub fn stack_observation(hist_wrist: &ObsHistory, hist_base: &ObsHistory) -> Result<Tensor> {
    let plane = IMAGE_HEIGHT * IMAGE_WIDTH;
    let mut data = vec![0.0f32; OBS_CHANNELS * plane];
    for (stream, hist) in [hist_wrist, hist_base].into_iter().enumerate() {
        for (t, frame) in hist.frames()?.into_iter().enumerate() {
            if frame.width != IMAGE_WIDTH || frame.height != IMAGE_HEIGHT {
                return Err(Error::Shape {
                    op: "stack_observation",
                    left: vec![IMAGE_HEIGHT, IMAGE_WIDTH],
                    right: vec![frame.height, frame.width],
                });
            }
            let mask_c = stream * 2 * HISTORY + t;
            let depth_c = mask_c + HISTORY;
            for i in 0..plane {
                data[mask_c * plane + i] = if frame.mask(i) { 1.0 } else { 0.0 };
                data[depth_c * plane + i] = frame.depth[i].clamp(0.0, DEPTH_CLIP) / DEPTH_CLIP;
            }
        }
    }
    Tensor::new(vec![OBS_CHANNELS, IMAGE_HEIGHT, IMAGE_WIDTH], data)
}

/// Layout: base linear and angular velocity in the base frame (6), body
/// height above ground (1), wrapped yaw drift (1), end-effector pose and
/// target as 6-vectors in the base frame (12), end-effector velocity in the
/// base frame (3), gripper closed flag (1), previous action (8).
pub fn proprio_vector(robot: &RobotState, terrain: &TerrainField, last_action: &HighLevelAction) -> [f32; PROPRIO_DIM] {
    let base = robot.base_frame();
    let to_base = base.rotation().transpose();
    let mut v = Vec::with_capacity(PROPRIO_DIM);
    v.extend(to_base.mul_vec(robot.base_twist.linear).to_array());
    v.extend(to_base.mul_vec(robot.base_twist.angular).to_array());
    let p = robot.base_pose.position;
    v.push(p.z - terrain.height_at(p.x, p.y));
    v.push(robot.yaw_drift());
    v.extend(vec6_encode(&robot.ee_local()));
    v.extend(vec6_encode(&robot.ee_target));
    v.extend(to_base.mul_vec(robot.ee_velocity).to_array());
    v.push(if robot.gripper == GripperState::Closed { 1.0 } else { 0.0 });
    v.extend(last_action.to_array());
    debug_assert_eq!(v.len(), PROPRIO_DIM);
    let mut out = [0.0f32; PROPRIO_DIM];
    for (o, x) in out.iter_mut().zip(v) {
        *o = x as f32;
    }
    out
}

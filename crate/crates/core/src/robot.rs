//! Idealized whole-body executor: unicycle base, lagged end-effector
//! tracking in the base frame, binary gripper and a synthetic gait signal.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::wrap_angle;
use crate::scene::terrain::TerrainField;
use crate::se3::{Mat3, Pose6, Twist, Vec3};

pub const NOMINAL_BODY_HEIGHT: f64 = 0.55;
pub const BASE_HEIGHT_TAU: f64 = 0.2;
pub const EE_TAU: f64 = 0.15;
pub const EE_MAX_SPEED: f64 = 1.0;
pub const WORKSPACE_RADIUS: f64 = 0.8;
pub const WORKSPACE_CENTER_HEIGHT: f64 = 0.3;

pub const MAX_DP: f64 = 0.05;
pub const MAX_DR: f64 = 0.2;
pub const MAX_V_LIN: f64 = 0.8;
pub const MAX_OMEGA: f64 = 1.0;

/// Leg joint angles (hip, thigh, calf) x 4 at rest.
pub const Q_DEFAULT: [f64; 12] = [0.0, 0.8, -1.5, 0.0, 0.8, -1.5, 0.0, 0.8, -1.5, 0.0, 0.8, -1.5];
const STRIDE: f64 = 0.4;
const TROT_OFFSETS: [f64; 4] = [0.0, PI, PI, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// World pose; roll and pitch stay zero.
    pub base_pose: Pose6<f64>,
    pub base_twist: Twist<f64>,
    /// End-effector target in the yaw-only base frame.
    pub ee_target: Pose6<f64>,
    pub ee_pose: Pose6<f64>,
    pub ee_velocity: Vec3<f64>,
    pub gripper: GripperState,
    pub yaw_ref: f64,
    pub joint_proxy: [f64; 12],
    /// Path length used to phase the gait signal.
    pub distance: f64,
}

impl RobotState {
    /// Standing at `(x, y)` with heading `yaw`, arm at its rest target.
    pub fn spawn(terrain: &TerrainField, x: f64, y: f64, yaw: f64) -> Self {
        let base_pose = Pose6::from_xyz_yaw(x, y, terrain.height_at(x, y) + NOMINAL_BODY_HEIGHT, yaw);
        let ee_target = rest_target();
        Self {
            base_pose,
            base_twist: Twist::zero(),
            ee_target,
            ee_pose: base_pose.compose(&ee_target),
            ee_velocity: Vec3::zero(),
            gripper: GripperState::Open,
            yaw_ref: base_pose.orientation.z,
            joint_proxy: Q_DEFAULT,
            distance: 0.0,
        }
    }

    pub fn yaw(&self) -> f64 {
        self.base_pose.orientation.z
    }

    pub fn yaw_drift(&self) -> f64 {
        wrap_angle(self.yaw() - self.yaw_ref)
    }

    /// World pose of the frame `ee_target` is expressed in.
    pub fn base_frame(&self) -> Pose6<f64> {
        let p = self.base_pose.position;
        Pose6::from_xyz_yaw(p.x, p.y, p.z, self.yaw())
    }

    pub fn ee_target_world(&self) -> Pose6<f64> {
        self.base_frame().compose(&self.ee_target)
    }

    /// Current end-effector pose in the base frame.
    pub fn ee_local(&self) -> Pose6<f64> {
        self.base_frame().inverse().compose(&self.ee_pose)
    }
}

pub fn rest_target() -> Pose6<f64> {
    Pose6::from_translation(Vec3::new(0.35, 0.0, 0.25))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighLevelAction {
    pub dp: Vec3<f64>,
    pub dr: Vec3<f64>,
    pub v_lin: f64,
    pub omega_yaw: f64,
    pub gripper_close: bool,
}

impl HighLevelAction {
    pub fn new(dp: Vec3<f64>, dr: Vec3<f64>, v_lin: f64, omega_yaw: f64, gripper_close: bool) -> Self {
        Self {
            dp,
            dr,
            v_lin,
            omega_yaw,
            gripper_close,
        }
        .clamped()
    }

    pub fn zero() -> Self {
        Self::new(Vec3::zero(), Vec3::zero(), 0.0, 0.0, false)
    }

    /// Non-finite components become zero, the rest are clipped to the action limits.
    pub fn clamped(self) -> Self {
        let fin = |v: f64| if v.is_finite() { v } else { 0.0 };
        let dp = self.dp.map(fin).clamp_norm(MAX_DP);
        let dr = self.dr.map(|v| fin(v).clamp(-MAX_DR, MAX_DR));
        Self {
            dp,
            dr,
            v_lin: fin(self.v_lin).clamp(-MAX_V_LIN, MAX_V_LIN),
            omega_yaw: fin(self.omega_yaw).clamp(-MAX_OMEGA, MAX_OMEGA),
            gripper_close: self.gripper_close,
        }
    }

    /// `[dp, dr, v_lin, omega_yaw]`, the regression target layout.
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.dp.x,
            self.dp.y,
            self.dp.z,
            self.dr.x,
            self.dr.y,
            self.dr.z,
            self.v_lin,
            self.omega_yaw,
        ]
    }

    pub fn from_array(a: &[f64; 8], gripper_close: bool) -> Self {
        Self::new(
            Vec3::new(a[0], a[1], a[2]),
            Vec3::new(a[3], a[4], a[5]),
            a[6],
            a[7],
            gripper_close,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandVector {
    pub p_hat: Vec3<f64>,
    pub r_hat: Vec3<f64>,
    pub v_lin: f64,
    pub omega_yaw: f64,
}

impl CommandVector {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.p_hat.x,
            self.p_hat.y,
            self.p_hat.z,
            self.r_hat.x,
            self.r_hat.y,
            self.r_hat.z,
            self.v_lin,
            self.omega_yaw,
        ]
    }

    pub fn target(&self) -> Pose6<f64> {
        Pose6::new(self.p_hat, self.r_hat)
    }
}

/// Projects a base-frame point onto the workspace ball.
pub fn clamp_to_workspace(p: Vec3<f64>) -> Vec3<f64> {
    let c = Vec3::new(0.0, 0.0, WORKSPACE_CENTER_HEIGHT);
    c + (p - c).clamp_norm(WORKSPACE_RADIUS)
}

pub fn in_workspace(p: Vec3<f64>, slack: f64) -> bool {
    (p - Vec3::new(0.0, 0.0, WORKSPACE_CENTER_HEIGHT)).norm() <= WORKSPACE_RADIUS + slack
}

pub fn accumulate_command(robot: &RobotState, a: &HighLevelAction) -> CommandVector {
    let a = a.clamped();
    CommandVector {
        p_hat: clamp_to_workspace(robot.ee_target.position + a.dp),
        r_hat: (robot.ee_target.orientation + a.dr).map(wrap_angle),
        v_lin: a.v_lin,
        omega_yaw: a.omega_yaw,
    }
}

fn lag_fraction(dt: f64, tau: f64) -> f64 {
    1.0 - (-dt / tau).exp()
}

fn quat(r: &Mat3<f64>) -> UnitQuaternion<f64> {
    let m = &r.m;
    let mat = Matrix3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    );
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(mat))
}

fn mat(q: &UnitQuaternion<f64>) -> Mat3<f64> {
    let r = q.to_rotation_matrix();
    let m = r.matrix();
    let mut out = Mat3::identity();
    for (i, row) in out.m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

/// Orientation `fraction` of the way from `from` to `to` along the geodesic.
pub fn slerp_orientation(from: &Pose6<f64>, to: &Pose6<f64>, fraction: f64) -> Vec3<f64> {
    let (qa, qb) = (quat(&from.rotation()), quat(&to.rotation()));
    let q = qa.try_slerp(&qb, fraction, 1e-12).unwrap_or(if fraction < 0.5 { qa } else { qb });
    Pose6::from_rotation(Vec3::zero(), &mat(&q)).orientation
}

pub fn gait(distance: f64) -> [f64; 12] {
    let phase = TAU * distance / STRIDE;
    let mut q = Q_DEFAULT;
    for (leg, off) in TROT_OFFSETS.iter().enumerate() {
        let s = (phase + off).sin();
        q[3 * leg] += 0.05 * s;
        q[3 * leg + 1] += 0.25 * s;
        q[3 * leg + 2] -= 0.35 * s.max(0.0);
    }
    q
}

pub fn execute_command(
    robot: &RobotState,
    u: &CommandVector,
    terrain: &TerrainField,
    dt: f64,
) -> Result<RobotState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let (v, w) = (u.v_lin, u.omega_yaw);
    let p0 = robot.base_pose.position;
    let yaw0 = robot.yaw();
    // Exact unicycle integration over the step.
    let (dx, dy) = if w.abs() > 1e-12 {
        (
            v / w * ((yaw0 + w * dt).sin() - yaw0.sin()),
            -v / w * ((yaw0 + w * dt).cos() - yaw0.cos()),
        )
    } else {
        (v * dt * yaw0.cos(), v * dt * yaw0.sin())
    };
    let (x, y) = (p0.x + dx, p0.y + dy);
    let z_goal = terrain.height_at(x, y) + NOMINAL_BODY_HEIGHT;
    let z = p0.z + (z_goal - p0.z) * lag_fraction(dt, BASE_HEIGHT_TAU);
    let base_pose = Pose6::from_xyz_yaw(x, y, z, yaw0 + w * dt);

    let ee_target = u.target();
    let local = robot.ee_local();
    let mut step = (ee_target.position - local.position) * lag_fraction(dt, EE_TAU);
    step = step.clamp_norm(EE_MAX_SPEED * dt);
    let local_new = Pose6::new(
        local.position + step,
        slerp_orientation(&local, &ee_target, lag_fraction(dt, EE_TAU)),
    );
    let base_frame = Pose6::from_xyz_yaw(x, y, z, base_pose.orientation.z);
    let ee_pose = base_frame.compose(&local_new);

    let distance = robot.distance + (v.abs() + 0.3 * w.abs()) * dt;
    Ok(RobotState {
        base_pose,
        base_twist: Twist {
            linear: Vec3::new(dx / dt, dy / dt, (z - p0.z) / dt),
            angular: Vec3::new(0.0, 0.0, w),
        },
        ee_target,
        ee_pose,
        ee_velocity: (ee_pose.position - robot.ee_pose.position) * (1.0 / dt),
        gripper: robot.gripper,
        yaw_ref: robot.yaw_ref,
        joint_proxy: gait(distance),
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn flat() -> TerrainField {
        TerrainField::flat(0.0, 20.0, 0.25).unwrap()
    }

    fn hold(robot: &RobotState, v: f64, w: f64) -> CommandVector {
        CommandVector {
            p_hat: robot.ee_target.position,
            r_hat: robot.ee_target.orientation,
            v_lin: v,
            omega_yaw: w,
        }
    }

    #[test]
    fn zero_action_keeps_target() {
        let t = flat();
        let r = RobotState::spawn(&t, 0.0, 0.0, 0.0);
        let u = accumulate_command(&r, &HighLevelAction::zero());
        assert_eq!(u.target(), r.ee_target);
        assert_eq!((u.v_lin, u.omega_yaw), (0.0, 0.0));
    }

    #[test]
    fn action_limits_clamp() {
        let a = HighLevelAction::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, -1.0, 0.1), 3.0, -2.0, false);
        assert!((a.dp.norm() - MAX_DP).abs() < 1e-15);
        assert_eq!(a.dr, Vec3::new(0.2, -0.2, 0.1));
        assert_eq!((a.v_lin, a.omega_yaw), (0.8, -1.0));
    }

    #[test]
    fn target_outside_workspace_is_projected() {
        let t = flat();
        let mut r = RobotState::spawn(&t, 0.0, 0.0, 0.0);
        r.ee_target = Pose6::from_translation(Vec3::new(0.79, 0.0, 0.3));
        let u = accumulate_command(&r, &HighLevelAction::new(Vec3::new(0.05, 0.0, 0.0), Vec3::zero(), 0.0, 0.0, false));
        assert!((u.p_hat - Vec3::new(0.8, 0.0, 0.3)).norm() < 1e-12);
    }

    #[test]
    fn orientation_wraps() {
        let t = flat();
        let mut r = RobotState::spawn(&t, 0.0, 0.0, 0.0);
        r.ee_target.orientation = Vec3::new(0.0, 0.0, 3.0 * PI - 0.1);
        let u = accumulate_command(&r, &HighLevelAction::new(Vec3::zero(), Vec3::new(0.0, 0.0, 0.1), 0.0, 0.0, false));
        assert!((u.r_hat.z - PI).abs() < 1e-12);
    }

    #[test]
    fn unicycle_straight_and_turn() {
        let t = flat();
        let mut r = RobotState::spawn(&t, 0.0, 0.0, 0.0);
        let u = hold(&r, 0.5, 0.0);
        for _ in 0..50 {
            r = execute_command(&r, &u, &t, 0.02).unwrap();
        }
        assert!((r.base_pose.position.x - 0.5).abs() < 1e-9);
        assert!(r.base_pose.position.y.abs() < 1e-12);

        let mut r = RobotState::spawn(&t, 0.0, 0.0, 0.0);
        let u = hold(&r, 0.0, FRAC_PI_2);
        for _ in 0..50 {
            r = execute_command(&r, &u, &t, 0.02).unwrap();
        }
        assert!((r.yaw() - FRAC_PI_2).abs() < 1e-9);
        assert!(r.base_pose.position.norm_xy() < 1e-12);
    }

    #[test]
    fn ee_settles_on_reachable_target() {
        let t = flat();
        let mut r = RobotState::spawn(&t, 0.0, 0.0, 0.3);
        let u = CommandVector {
            p_hat: Vec3::new(0.5, 0.2, 0.1),
            r_hat: Vec3::new(0.3, -0.2, 0.5),
            v_lin: 0.0,
            omega_yaw: 0.0,
        };
        for _ in 0..100 {
            r = execute_command(&r, &u, &t, 0.02).unwrap();
        }
        let (dp, da) = crate::se3::pose_error(&r.ee_pose, &r.ee_target_world());
        assert!(dp < 1e-3 && da < 1e-3, "{dp} {da}");
    }

    #[test]
    fn half_steps_match_full_step() {
        let t = flat();
        let mut r = RobotState::spawn(&t, 0.2, -0.1, 0.4);
        r.base_pose.position.z += 0.05;
        let u = CommandVector {
            p_hat: Vec3::new(0.4, -0.1, 0.2),
            r_hat: Vec3::new(0.1, 0.2, -0.3),
            v_lin: 0.4,
            omega_yaw: 0.3,
        };
        let one = execute_command(&r, &u, &t, 0.02).unwrap();
        let half = execute_command(&r, &u, &t, 0.01).unwrap();
        let two = execute_command(&half, &u, &t, 0.01).unwrap();
        assert!(one.base_pose.position.max_abs_diff(two.base_pose.position) < 1e-6);
        assert!((one.yaw() - two.yaw()).abs() < 1e-9);
        let (dp, da) = crate::se3::pose_error(&one.ee_pose, &two.ee_pose);
        assert!(dp < 1e-6 && da < 1e-6, "{dp} {da}");
    }

    #[test]
    fn gait_is_default_at_rest() {
        let g = gait(0.0);
        assert!(g.iter().zip(Q_DEFAULT).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_ne!(gait(0.1), Q_DEFAULT);
        assert_eq!(RobotState::spawn(&flat(), 0.0, 0.0, 0.0).joint_proxy, Q_DEFAULT);
    }
}

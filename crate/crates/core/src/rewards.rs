//! Reward formulas for the high-level (grasping) and low-level (locomotion)
//! policies, each returned as a per-term breakdown.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};
use crate::se3::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardTerm<T> {
    pub name: &'static str,
    pub raw: T,
    pub weight: T,
    pub weighted: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown<T> {
    pub terms: Vec<RewardTerm<T>>,
    pub total: T,
}

impl<T: Real> RewardBreakdown<T> {
    fn from_terms(rows: Vec<(&'static str, T, f64)>) -> Self {
        let mut total = T::zero();
        let terms = rows
            .into_iter()
            .map(|(name, raw, w)| {
                let weight = T::lit(w);
                let weighted = raw * weight;
                total = total + weighted;
                RewardTerm {
                    name,
                    raw,
                    weight,
                    weighted,
                }
            })
            .collect();
        Self { terms, total }
    }

    pub fn get(&self, name: &str) -> Option<&RewardTerm<T>> {
        self.terms.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskPhase {
    Approaching,
    Grasped,
    Lifted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelRewardInput<T> {
    pub phase: TaskPhase,
    pub dist_ee_obj: T,
    pub lift_height: T,
    pub completed: bool,
    pub q_dot_prev: [T; 12],
    pub q_dot: [T; 12],
    pub a_prev: [T; 8],
    pub a: [T; 8],
    pub v_x_star: T,
    /// Unit directions.
    pub d_obj: Vec3<T>,
    pub d_ee: Vec3<T>,
    pub d_base: Vec3<T>,
    /// Planar base-to-object distance.
    pub x_obj: T,
    pub x_base: T,
    pub h_c: T,
    pub h_t: T,
    pub psi_c: T,
    pub psi_0: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighLevelWeights {
    pub approach: f64,
    pub lift: f64,
    pub completion: f64,
    pub acc: f64,
    pub cmd: f64,
    pub action: f64,
    pub ee_orn: f64,
    pub base_orn: f64,
    pub base_approach: f64,
    pub base_h: f64,
    pub yaw: f64,
    /// Planar base-to-object distance the base approach term rewards.
    pub standoff: f64,
}

impl Default for HighLevelWeights {
    fn default() -> Self {
        Self {
            approach: 0.5,
            lift: 0.8,
            completion: 3.5,
            acc: -0.001,
            cmd: 0.05,
            action: -0.001,
            ee_orn: 0.01,
            base_orn: 0.25,
            base_approach: 0.01,
            base_h: 0.5,
            yaw: -0.4,
            standoff: 0.6,
        }
    }
}

/// Object lift at which the lift term saturates, m.
pub const LIFT_TARGET: f64 = 0.15;

/// `-tanh(|dpsi|)` beyond `pi/3` of drift, else 0. The difference is wrapped first.
pub fn yaw_penalty<T: Real>(psi_c: T, psi_0: T) -> T {
    let d = wrap_angle(psi_c - psi_0).abs();
    if d > T::FRAC_PI_3() {
        -d.tanh()
    } else {
        T::zero()
    }
}

fn l2<T: Real>(v: impl IntoIterator<Item = T>) -> T {
    v.into_iter().fold(T::zero(), |s, x| s + x * x).sqrt()
}

fn diff_norm<T: Real>(a: &[T], b: &[T]) -> T {
    l2(a.iter().zip(b).map(|(x, y)| *x - *y))
}

fn check_unit<T: Real>(name: &str, v: Vec3<T>) -> Result<()> {
    if (v.norm() - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::invalid(format!("{name} must be a unit vector")));
    }
    Ok(())
}

fn all_finite<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl<T: Real> HighLevelRewardInput<T> {
    fn validate(&self) -> Result<()> {
        let scalars = [
            self.dist_ee_obj,
            self.lift_height,
            self.v_x_star,
            self.x_obj,
            self.x_base,
            self.h_c,
            self.h_t,
            self.psi_c,
            self.psi_0,
        ];
        let dirs = [self.d_obj, self.d_ee, self.d_base];
        if !(all_finite(&scalars)
            && all_finite(&self.q_dot_prev)
            && all_finite(&self.q_dot)
            && all_finite(&self.a_prev)
            && all_finite(&self.a)
            && dirs.iter().all(|d| d.is_finite()))
        {
            return Err(Error::invalid("reward input contains non-finite values"));
        }
        check_unit("d_obj", self.d_obj)?;
        check_unit("d_ee", self.d_ee)?;
        check_unit("d_base", self.d_base)
    }
}

pub fn high_level_reward<T: Real>(input: &HighLevelRewardInput<T>) -> Result<RewardBreakdown<T>> {
    high_level_reward_with(input, &HighLevelWeights::default())
}

/// Term order: approach, lift, completion, then the assistant terms.
pub fn high_level_reward_with<T: Real>(
    input: &HighLevelRewardInput<T>,
    w: &HighLevelWeights,
) -> Result<RewardBreakdown<T>> {
    input.validate()?;
    let one = T::one();
    let zero = T::zero();
    let active = if input.completed {
        2
    } else {
        match input.phase {
            TaskPhase::Approaching => 0,
            TaskPhase::Grasped | TaskPhase::Lifted => 1,
        }
    };
    let approach = one / (one + T::lit(10.0) * input.dist_ee_obj.max(zero));
    let target = T::lit(LIFT_TARGET);
    let lift = T::lit(0.2) + T::lit(0.8) * input.lift_height.max(zero).min(target) / target;
    let pick = |i: usize, v: T| if i == active { v } else { zero };

    let vx = input.v_x_star.abs();
    let rows = vec![
        ("approach", pick(0, approach), w.approach),
        ("lift", pick(1, lift), w.lift),
        ("completion", pick(2, one), w.completion),
        ("acc", one - (-diff_norm(&input.q_dot_prev, &input.q_dot)).exp(), w.acc),
        ("cmd", -vx + T::lit(0.25) * (-vx).exp(), w.cmd),
        ("action", one - (-diff_norm(&input.a_prev, &input.a)).exp(), w.action),
        ("ee_orn", input.d_obj.dot(input.d_ee).max(-one).min(one), w.ee_orn),
        ("base_orn", input.d_obj.dot(input.d_base).max(-one).min(one), w.base_orn),
        (
            "base_approach",
            one + (T::lit(-10.0) * (input.x_obj - input.x_base - T::lit(w.standoff)).abs()).tanh(),
            w.base_approach,
        ),
        ("base_h", (-(input.h_c - input.h_t).abs()).exp(), w.base_h),
        // The negative weight carries the sign, so the raw value is the penalty magnitude.
        ("yaw", -yaw_penalty(input.psi_c, input.psi_0), w.yaw),
    ];
    Ok(RewardBreakdown::from_terms(rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelState<T> {
    pub q: [T; 12],
    pub q_dot: [T; 12],
    pub q_ddot: [T; 12],
    pub q_star: [T; 12],
    pub tau: [T; 12],
    pub v_b: Vec3<T>,
    pub omega_b: Vec3<T>,
    pub v_x_star: T,
    pub v_yaw_star: T,
    pub n_collision: u32,
    pub f_foot: [T; 4],
    pub v_z_foot: [T; 4],
    pub t_air: [T; 4],
    pub h_b: T,
    pub h_b_target: T,
    pub q_default: [T; 12],
    pub contact_cmd: [T; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowLevelWeights {
    pub lin_vel: f64,
    pub yaw_vel: f64,
    pub ang_vel_xy: f64,
    pub torque: f64,
    pub action_rate: f64,
    pub collision: f64,
    pub air_time: f64,
    pub default_pos: f64,
    pub lin_vel_z: f64,
    pub base_height: f64,
    pub swing_force: f64,
    pub stance_vel: f64,
    pub sigma_cf: f64,
    pub sigma_cv: f64,
}

impl Default for LowLevelWeights {
    fn default() -> Self {
        Self {
            lin_vel: 1.0,
            yaw_vel: 0.5,
            ang_vel_xy: 0.05,
            torque: 0.00002,
            action_rate: 0.25,
            collision: 0.001,
            air_time: 2.0,
            default_pos: 1.0,
            lin_vel_z: -1.5,
            base_height: -5.0,
            swing_force: -0.2,
            stance_vel: -0.2,
            sigma_cf: 100.0,
            sigma_cv: 0.05,
        }
    }
}

pub const DEFAULT_SIGMA_TRACK: f64 = 0.25;

/// Tracking kernel `exp(-|x|^2 / sigma)`.
pub fn phi<T: Real>(sq_norm: T, sigma: T) -> T {
    (-sq_norm / sigma).exp()
}

pub fn low_level_reward<T: Real>(s: &LowLevelState<T>, sigma_track: T) -> Result<RewardBreakdown<T>> {
    low_level_reward_with(s, sigma_track, &LowLevelWeights::default())
}

pub fn low_level_reward_with<T: Real>(
    s: &LowLevelState<T>,
    sigma_track: T,
    w: &LowLevelWeights,
) -> Result<RewardBreakdown<T>> {
    if !(sigma_track > T::zero()) {
        return Err(Error::invalid("sigma_track must be positive"));
    }
    let arrays12 = [&s.q, &s.q_dot, &s.q_ddot, &s.q_star, &s.tau, &s.q_default];
    let arrays4 = [&s.f_foot, &s.v_z_foot, &s.t_air, &s.contact_cmd];
    let scalars = [s.v_x_star, s.v_yaw_star, s.h_b, s.h_b_target];
    if !(arrays12.iter().all(|a| all_finite(&a[..]))
        && arrays4.iter().all(|a| all_finite(&a[..]))
        && all_finite(&scalars)
        && s.v_b.is_finite()
        && s.omega_b.is_finite())
    {
        return Err(Error::invalid("low-level state contains non-finite values"));
    }
    if s.t_air.iter().any(|t| *t < T::zero()) {
        return Err(Error::invalid("t_air must be non-negative"));
    }
    let one = T::one();
    let sq = |v: &[T]| v.iter().fold(T::zero(), |a, x| a + *x * *x);
    let (ex, ey) = (s.v_x_star - s.v_b.x, -s.v_b.y);
    let e_yaw = s.v_yaw_star - s.omega_b.z;
    let (scf, scv) = (T::lit(w.sigma_cf), T::lit(w.sigma_cv));
    let mut swing = T::zero();
    let mut stance = T::zero();
    let mut air = T::zero();
    for i in 0..4 {
        let c = s.contact_cmd[i];
        swing = swing + (one - c) * (one - (-(s.f_foot[i] * s.f_foot[i]) / scf).exp());
        stance = stance + c * (one - (-(s.v_z_foot[i] * s.v_z_foot[i]) / scv).exp());
        air = air + (s.t_air[i] - T::lit(0.5));
    }
    let q_err = diff_norm(&s.q, &s.q_default);
    let rows = vec![
        ("lin_vel", phi(ex * ex + ey * ey, sigma_track), w.lin_vel),
        ("yaw_vel", phi(e_yaw * e_yaw, sigma_track), w.yaw_vel),
        ("ang_vel_xy", -(s.omega_b.x * s.omega_b.x + s.omega_b.y * s.omega_b.y), w.ang_vel_xy),
        ("torque", -sq(&s.tau), w.torque),
        ("action_rate", -sq(&s.q_star), w.action_rate),
        ("collision", -T::lit(s.n_collision as f64), w.collision),
        ("air_time", air, w.air_time),
        ("default_pos", (T::lit(-0.05) * q_err).exp(), w.default_pos),
        ("lin_vel_z", s.v_b.z * s.v_b.z, w.lin_vel_z),
        ("base_height", (s.h_b - s.h_b_target).abs(), w.base_height),
        ("swing_force", swing, w.swing_force),
        ("stance_vel", stance, w.stance_vel),
    ];
    Ok(RewardBreakdown::from_terms(rows))
}

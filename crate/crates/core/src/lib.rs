//! Desk-scale simulator and benchmark for a legged manipulator catching and
//! lifting objects off a moving platform.
//!
//! The pose algebra, reward formulas and kinematics helpers are generic over
//! [`Real`]; the simulator itself runs in `f64` and the network in `f32`.

pub mod config;
pub mod error;
pub mod grasp;
pub mod harness;
pub mod kinematics;
pub mod nn;
pub mod perception;
pub mod rewards;
pub mod robot;
pub mod scalar;
pub mod scene;
pub mod se3;

pub use error::{Error, Result};
pub use scalar::{wrap_angle, Real};

/// Pose with `f64` components, the simulator's working precision.
pub type Pose = se3::Pose6<f64>;
pub type Point = se3::Vec3<f64>;
pub type Velocity = se3::Twist<f64>;

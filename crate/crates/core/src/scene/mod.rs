//! Terrain, moving platform, object catalog and the episode state machine.

pub mod catalog;
pub mod state;
pub mod status;
pub mod terrain;
pub mod trajectory;

pub use catalog::{default_catalog, load_catalog, Category, ObjectSpec, Shape, Split};
pub use state::{reset_episode, step_scene, Attachment, EpisodeConfig, SceneState};
pub use status::{check_status, evaluate_grasp, EpisodeStatus, GraspCheck, GraspVerdict, Phase};
pub use terrain::{sample_terrain, TerrainField};
pub use trajectory::{make_trajectory, MotionMode, PlatformTrajectory, ZPolicy};

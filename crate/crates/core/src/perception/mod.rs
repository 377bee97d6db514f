//! Cameras, ray-cast rendering and the observation buffers.

pub mod buffer;
pub mod camera;
pub mod pgm;
pub mod render;

pub use buffer::{proprio_vector, stack_observation, LatencyBuffer, ObsHistory, LATENCY_STEPS};
pub use camera::{CameraModel, Mount};
pub use pgm::write_frame_pgm;
pub use render::{render_frame, Frame, Surface};

//! Grasp candidates, the per-object memory bank and attention-based fusion.

pub mod candidates;
pub mod feature;
pub mod gfm;
pub mod memory;

pub use candidates::{generate_candidates, grasp_score, GraspCandidate};
pub use feature::{object_feature, ObjectFeature, FEATURE_DIM};
pub use gfm::{
    centroid_grasp, gfm_forward, select_argmax, world_grasps, Alignment, GfmOutput, GfmWeights, EMBED_DIM,
};
pub use memory::{build_memory, export_bank, import_bank, load_bank, save_bank, GraspMemoryBank, DEFAULT_K};

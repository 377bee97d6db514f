//! Top-K grasp memory kept in the object frame.
//!
//! Export format (TOML):
//!
//! ```toml
//! object_id = "mug"
//! k = 30
//!
//! [[grasp]]
//! pose = [px, py, pz, rx, ry, rz]   # object frame, intrinsic XYZ Euler
//! score = 0.06
//! width = 0.08
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{vec6_decode, vec6_encode};

use super::candidates::GraspCandidate;

pub const DEFAULT_K: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspMemoryBank {
    pub object_id: String,
    pub k: usize,
    /// Descending score.
    pub candidates: Vec<GraspCandidate>,
}

impl GraspMemoryBank {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Keeps the `k` best candidates; equal scores keep their input order.
pub fn build_memory(object_id: &str, candidates: &[GraspCandidate], k: usize) -> Result<GraspMemoryBank> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    sorted.truncate(k);
    Ok(GraspMemoryBank {
        object_id: object_id.to_string(),
        k,
        candidates: sorted,
    })
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    object_id: String,
    k: usize,
    #[serde(default)]
    grasp: Vec<BankEntry>,
}

#[derive(Serialize, Deserialize)]
struct BankEntry {
    pose: [f64; 6],
    score: f64,
    width: f64,
}

pub fn export_bank(bank: &GraspMemoryBank) -> Result<String> {
    let file = BankFile {
        object_id: bank.object_id.clone(),
        k: bank.k,
        grasp: bank
            .candidates
            .iter()
            .map(|c| BankEntry {
                pose: vec6_encode(&c.pose),
                score: c.score,
                width: c.width,
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))
}

pub fn import_bank(text: &str) -> Result<GraspMemoryBank> {
    let file: BankFile = toml::from_str(text).map_err(|e| Error::Config(format!("grasp bank: {e}")))?;
    let candidates = file
        .grasp
        .iter()
        .map(|g| {
            Ok(GraspCandidate {
                pose: vec6_decode(&g.pose)?,
                score: g.score,
                width: g.width,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if candidates.len() > file.k || candidates.windows(2).any(|w| w[0].score < w[1].score) {
        return Err(Error::Config("grasp bank must hold at most K candidates in descending score".into()));
    }
    Ok(GraspMemoryBank {
        object_id: file.object_id,
        k: file.k,
        candidates,
    })
}

pub fn save_bank(bank: &GraspMemoryBank, path: &Path) -> Result<()> {
    std::fs::write(path, export_bank(bank)?).map_err(|e| Error::io(path, e))
}

pub fn load_bank(path: &Path) -> Result<GraspMemoryBank> {
    import_bank(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

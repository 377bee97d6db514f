//! Append-only distillation dataset.
//!
//! Layout, little-endian:
//!
//! ```text
//! header: b"DQDS" | version u32 | channels u32 | height u32 | width u32 | proprio u32 | action u32
//! record: episode u64 | step u32 | obs f32 x (C*H*W) | proprio f32 x P | action f32 x A | gripper u8
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::scene::catalog::ObjectSpec;
use crate::scene::state::EpisodeConfig;
use crate::nn::student::{ACTION_DIM, IMAGE_HEIGHT, IMAGE_WIDTH, OBS_CHANNELS, PROPRIO_DIM};
use crate::nn::Tensor;

use super::episode::{run_episode, EpisodeLog, EpisodeOptions, StepSample};

pub const MAGIC: &[u8; 4] = b"DQDS";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 4 + 6 * 4;
pub const OBS_LEN: usize = OBS_CHANNELS * IMAGE_HEIGHT * IMAGE_WIDTH;
pub const RECORD_BYTES: u64 = 8 + 4 + 4 * (OBS_LEN + PROPRIO_DIM + ACTION_DIM) as u64 + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DistillRecord {
    pub episode: u64,
    pub step: u32,
    /// `[12, 54, 96]`.
    pub observation: Tensor,
    pub proprio: [f32; PROPRIO_DIM],
    /// `[dp, dr, v_lin, omega_yaw]`.
    pub action: [f32; ACTION_DIM],
    pub gripper_close: bool,
}

fn header_fields() -> [u32; 6] {
    [
        VERSION,
        OBS_CHANNELS as u32,
        IMAGE_HEIGHT as u32,
        IMAGE_WIDTH as u32,
        PROPRIO_DIM as u32,
        ACTION_DIM as u32,
    ]
}

fn read_header(r: &mut impl Read, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::invalid(format!("{} is not a distillation dataset", path.display())));
    }
    for (i, want) in header_fields().iter().enumerate() {
        let got = r.read_u32::<LittleEndian>().map_err(io)?;
        if got != *want {
            return Err(Error::invalid(format!(
                "{}: header field {i} is {got}, expected {want}",
                path.display()
            )));
        }
    }
    Ok(())
}

pub struct DatasetWriter {
    path: PathBuf,
    out: BufWriter<File>,
    written: u64,
}

impl DatasetWriter {
    /// Opens `path` for appending, writing the header if the file is new or
    /// empty and checking it otherwise.
    pub fn open(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io)?;
        let len = file.metadata().map_err(io)?.len();
        if len == 0 {
            let mut w = BufWriter::new(&mut file);
            w.write_all(MAGIC).map_err(io)?;
            for v in header_fields() {
                w.write_u32::<LittleEndian>(v).map_err(io)?;
            }
            w.flush().map_err(io)?;
        } else {
            file.seek(SeekFrom::Start(0)).map_err(io)?;
            read_header(&mut file, path)?;
            if !(len - HEADER_BYTES).is_multiple_of(RECORD_BYTES) {
                return Err(Error::invalid(format!("{}: truncated record", path.display())));
            }
        }
        Ok(DatasetWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            written: 0,
        })
    }

    pub fn append(&mut self, rec: &DistillRecord) -> Result<()> {
        if rec.observation.shape() != [OBS_CHANNELS, IMAGE_HEIGHT, IMAGE_WIDTH] {
            return Err(Error::Shape {
                op: "dataset append",
                left: vec![OBS_CHANNELS, IMAGE_HEIGHT, IMAGE_WIDTH],
                right: rec.observation.shape().to_vec(),
            });
        }
        let path = self.path.clone();
        let io = |e| Error::io(&path, e);
        let w = &mut self.out;
        w.write_u64::<LittleEndian>(rec.episode).map_err(io)?;
        w.write_u32::<LittleEndian>(rec.step).map_err(io)?;
        for v in rec.observation.data().iter().chain(&rec.proprio).chain(&rec.action) {
            w.write_f32::<LittleEndian>(*v).map_err(io)?;
        }
        w.write_u8(rec.gripper_close as u8).map_err(io)?;
        self.written += 1;
        Ok(())
    }

    /// Records appended through this writer.
    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.written)
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<DistillRecord>> {
    let io = |e| Error::io(path, e);
    let file = File::open(path).map_err(io)?;
    let len = file.metadata().map_err(io)?.len();
    let mut r = BufReader::new(file);
    read_header(&mut r, path)?;
    let body = len.saturating_sub(HEADER_BYTES);
    if len < HEADER_BYTES || body % RECORD_BYTES != 0 {
        return Err(Error::invalid(format!("{}: truncated record", path.display())));
    }
    let mut out = Vec::with_capacity((body / RECORD_BYTES) as usize);
    for _ in 0..body / RECORD_BYTES {
        let episode = r.read_u64::<LittleEndian>().map_err(io)?;
        let step = r.read_u32::<LittleEndian>().map_err(io)?;
        let mut obs = vec![0.0f32; OBS_LEN];
        r.read_f32_into::<LittleEndian>(&mut obs).map_err(io)?;
        let mut proprio = [0.0f32; PROPRIO_DIM];
        r.read_f32_into::<LittleEndian>(&mut proprio).map_err(io)?;
        let mut action = [0.0f32; ACTION_DIM];
        r.read_f32_into::<LittleEndian>(&mut action).map_err(io)?;
        let gripper_close = r.read_u8().map_err(io)? != 0;
        out.push(DistillRecord {
            episode,
            step,
            observation: Tensor::new(vec![OBS_CHANNELS, IMAGE_HEIGHT, IMAGE_WIDTH], obs)?,
            proprio,
            action,
            gripper_close,
        });
    }
    Ok(out)
}

/// Runs one observed episode and appends a record per decision step, labelled
/// with the teacher's action. Returns the log and the number of records.
pub fn record_distillation(
    config: &EpisodeConfig,
    catalog: &[ObjectSpec],
    options: &EpisodeOptions,
    episode_id: u64,
    writer: &mut DatasetWriter,
) -> Result<(EpisodeLog, u64)> {
    let opts = EpisodeOptions {
        observe: true,
        ..options.clone()
    };
    let mut n = 0u64;
    let mut sink = |s: &StepSample<'_>| {
        let a = s.action.to_array();
        writer.append(&DistillRecord {
            episode: episode_id,
            step: s.step,
            observation: s.observation.clone(),
            proprio: s.proprio,
            action: a.map(|v| v as f32),
            gripper_close: s.action.gripper_close,
        })?;
        n += 1;
        Ok(())
    };
    let log = run_episode(config, catalog, &opts, Some(&mut sink))?;
    Ok((log, n))
}

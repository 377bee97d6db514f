//! Binary PGM (P5) output. Samples wider than 8 bits are big-endian.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::render::Frame;

fn write_pgm(path: &Path, w: usize, h: usize, maxval: u16, samples: &[u8]) -> Result<()> {
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    out.extend_from_slice(samples);
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

/// Mask as 8-bit 0/255 and depth as 16-bit millimetres.
pub fn write_frame_pgm(frame: &Frame, mask_path: &Path, depth_path: &Path) -> Result<()> {
    let n = frame.width * frame.height;
    let mask: Vec<u8> = (0..n).map(|i| if frame.mask(i) { 255 } else { 0 }).collect();
    write_pgm(mask_path, frame.width, frame.height, 255, &mask)?;
    let depth: Vec<u8> = frame
        .depth
        .iter()
        .flat_map(|d| ((*d as f64 * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16).to_be_bytes())
        .collect();
    write_pgm(depth_path, frame.width, frame.height, u16::MAX, &depth)
}

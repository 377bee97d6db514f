use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Peak-to-trough terrain variation.
pub const MAX_TERRAIN_HEIGHT: f64 = 0.1;

const TERRAIN_STREAM: u64 = 0x7465_7272_6169_6e00;

/// Height grid on a regular XY lattice, queried by bilinear interpolation.
/// Queries outside the lattice clamp to the border.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainField {
    heights: Vec<f64>,
    /// Lowest and highest node, cached for ray casting.
    band: [f64; 2],
    inv_cell: f64,
    nx: usize,
    ny: usize,
    cell_size: f64,
    origin: [f64; 2],
}

impl TerrainField {
    /// Constant-height field, mostly useful for tests.
    pub fn flat(height: f64, extent: f64, cell_size: f64) -> Result<Self> {
        let (nx, origin) = lattice(extent, cell_size)?;
        Ok(Self::from_heights(vec![height; nx * nx], nx, cell_size, origin))
    }

    /// Square lattice of `n` x `n` nodes.
    fn from_heights(heights: Vec<f64>, n: usize, cell_size: f64, origin: [f64; 2]) -> Self {
        let (lo, hi) = heights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)));
        Self {
            heights,
            band: [lo, hi],
            inv_cell: 1.0 / cell_size,
            nx: n,
            ny: n,
            cell_size,
            origin,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// World XY of node `(0, 0)`.
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn nodes(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn node_height(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.nx + ix]
    }

    pub fn node_position(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + ix as f64 * self.cell_size,
            self.origin[1] + iy as f64 * self.cell_size,
        ]
    }

    /// Corner heights `[h00, h10, h01, h11]` of cell `(ix, iy)`.
    pub(crate) fn cell(&self, ix: usize, iy: usize) -> [f64; 4] {
        let i = iy * self.nx + ix;
        let (r0, r1) = (&self.heights[i..i + 2], &self.heights[i + self.nx..i + self.nx + 2]);
        [r0[0], r0[1], r1[0], r1[1]]
    }

    pub(crate) fn inv_cell(&self) -> f64 {
        self.inv_cell
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn min_max(&self) -> (f64, f64) {
        (self.band[0], self.band[1])
    }

    /// Cell index and fractional offsets of a query point, clamped to the lattice.
    pub(crate) fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let inv = self.inv_cell;
        // max/min rather than clamp: a NaN query lands on the border instead of propagating.
        let gx = ((x - self.origin[0]) * inv).max(0.0).min((self.nx - 1) as f64);
        let gy = ((y - self.origin[1]) * inv).max(0.0).min((self.ny - 1) as f64);
        // Both are non-negative, so truncation is floor.
        let ix = (gx as usize).min(self.nx - 2);
        let iy = (gy as usize).min(self.ny - 2);
        (ix, iy, gx - ix as f64, gy - iy as f64)
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let (ix, iy, fx, fy) = self.locate(x, y);
        let i = iy * self.nx + ix;
        let (r0, r1) = (&self.heights[i..i + 2], &self.heights[i + self.nx..i + self.nx + 2]);
        let bottom = r0[0] + (r0[1] - r0[0]) * fx;
        let top = r1[0] + (r1[1] - r1[0]) * fx;
        bottom + (top - bottom) * fy
    }
}

fn lattice(extent: f64, cell_size: f64) -> Result<(usize, [f64; 2])> {
    if !(extent > 0.0 && cell_size > 0.0 && extent.is_finite() && cell_size.is_finite()) {
        return Err(Error::invalid(format!(
            "terrain extent ({extent}) and cell size ({cell_size}) must be positive"
        )));
    }
    let cells = (extent / cell_size).ceil().max(1.0) as usize;
    let half = cells as f64 * cell_size / 2.0;
    Ok((cells + 1, [-half, -half]))
}

/// Square field of side `extent` centred on the origin: uniform heights in
/// `[0, 0.1]` smoothed by one 3x3 box filter.
pub fn sample_terrain(seed: u64, extent: f64, cell_size: f64) -> Result<TerrainField> {
    let (n, origin) = lattice(extent, cell_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TERRAIN_STREAM);
    let raw: Vec<f64> = (0..n * n)
        .map(|_| rng.random_range(0.0..=MAX_TERRAIN_HEIGHT))
        .collect();
    let mut heights = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let mut sum = 0.0;
            let mut count = 0.0;
            for jy in iy.saturating_sub(1)..=(iy + 1).min(n - 1) {
                for jx in ix.saturating_sub(1)..=(ix + 1).min(n - 1) {
                    sum += raw[jy * n + jx];
                    count += 1.0;
                }
            }
            heights[iy * n + ix] = (sum / count).clamp(0.0, MAX_TERRAIN_HEIGHT);
        }
    }
    Ok(TerrainField::from_heights(heights, n, cell_size, origin))
}

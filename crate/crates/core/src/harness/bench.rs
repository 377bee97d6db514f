//! Seeded benchmark sweeps. Episode `i` of level `l` always gets the same
//! seed and object, so the output is independent of how many workers run.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::catalog::{ObjectSpec, Split};
use crate::scene::state::EpisodeConfig;

use super::episode::{run_episode, EpisodeLog, EpisodeOptions};
use super::metrics::{compute_metrics, MetricsReport};

/// Decision steps per level in a default sweep.
pub const DEFAULT_STEP_BUDGET: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitFilter {
    Seen,
    Unseen,
    Both,
}

impl SplitFilter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitFilter::Seen => "seen",
            SplitFilter::Unseen => "unseen",
            SplitFilter::Both => "both",
        }
    }

    pub fn admits(&self, split: Split) -> bool {
        match self {
            SplitFilter::Seen => split == Split::Seen,
            SplitFilter::Unseen => split == Split::Unseen,
            SplitFilter::Both => true,
        }
    }
}

impl std::str::FromStr for SplitFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(SplitFilter::Seen),
            "unseen" => Ok(SplitFilter::Unseen),
            "both" => Ok(SplitFilter::Both),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Episodes(u64),
    /// Run episodes until their decision steps reach this total.
    Steps(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub levels: Vec<u8>,
    pub budget: Budget,
    pub split: SplitFilter,
    pub seed: u64,
    pub options: EpisodeOptions,
    /// Overrides for every episode config (timeouts, tolerances).
    pub episode: EpisodeConfig,
}

impl BenchSpec {
    pub fn new(levels: Vec<u8>, budget: Budget, split: SplitFilter, seed: u64) -> Self {
        BenchSpec {
            levels,
            budget,
            split,
            seed,
            options: EpisodeOptions::default(),
            episode: EpisodeConfig::new(1, "", 0),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of episode `index` at `level` in a sweep seeded with `seed`.
pub fn episode_seed(seed: u64, level: u8, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ ((level as u64) << 56)) ^ index)
}

/// The object an episode with `seed` uses. `objects` must be non-empty.
pub fn object_for_seed<'a>(objects: &[&'a ObjectSpec], seed: u64) -> &'a ObjectSpec {
    objects[(splitmix64(seed) % objects.len() as u64) as usize]
}

/// Config of episode `index`; the object is drawn from the admitted split.
pub fn episode_config(spec: &BenchSpec, objects: &[&ObjectSpec], level: u8, index: u64) -> EpisodeConfig {
    let seed = episode_seed(spec.seed, level, index);
    let object = object_for_seed(objects, seed);
    EpisodeConfig {
        level,
        object_id: object.id.clone(),
        seed,
        ..spec.episode.clone()
    }
}

fn run_batch(
    spec: &BenchSpec,
    catalog: &[ObjectSpec],
    objects: &[&ObjectSpec],
    level: u8,
    range: std::ops::Range<u64>,
) -> Result<Vec<EpisodeLog>> {
    range
        .into_par_iter()
        .map(|i| run_episode(&episode_config(spec, objects, level, i), catalog, &spec.options, None))
        .collect()
}

/// Runs the sweep and returns logs sorted by level then episode index.
pub fn run_sweep(spec: &BenchSpec, catalog: &[ObjectSpec]) -> Result<Vec<EpisodeLog>> {
    if spec.levels.is_empty() {
        return Err(Error::invalid("at least one level is required"));
    }
    let objects: Vec<&ObjectSpec> = catalog.iter().filter(|o| spec.split.admits(o.split)).collect();
    if objects.is_empty() {
        return Err(Error::invalid(format!("no objects in split {}", spec.split.as_str())));
    }
    let mut levels = spec.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut logs = Vec::new();
    for level in levels {
        match spec.budget {
            Budget::Episodes(n) => logs.extend(run_batch(spec, catalog, &objects, level, 0..n)?),
            Budget::Steps(budget) => {
                // Parallel batches, consumed in index order until the budget is met.
                let batch = (2 * rayon::current_num_threads()).max(4) as u64;
                let mut used = 0u64;
                let mut next = 0u64;
                'level: while used < budget {
                    for log in run_batch(spec, catalog, &objects, level, next..next + batch)? {
                        used += log.decision_steps as u64;
                        logs.push(log);
                        if used >= budget {
                            break 'level;
                        }
                    }
                    next += batch;
                }
            }
        }
    }
    Ok(logs)
}

pub fn run_benchmark(spec: &BenchSpec, catalog: &[ObjectSpec]) -> Result<(MetricsReport, Vec<EpisodeLog>)> {
    let logs = run_sweep(spec, catalog)?;
    Ok((compute_metrics(&logs)?, logs))
}

pub const CSV_HEADER: [&str; 9] = ["level", "split", "category", "n_episodes", "gsr", "ossr", "ossr_alt", "tsc", "seed"];

/// One row per level and category; undefined `ossr_alt`/`tsc` cells are empty.
pub fn write_csv(report: &MetricsReport, split: SplitFilter, seed: u64, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            r.level.to_string(),
            split.as_str().to_string(),
            r.category.clone(),
            r.n_episodes.to_string(),
            format!("{:.4}", r.gsr),
            format!("{:.4}", r.ossr),
            opt(r.ossr_alt),
            opt(r.tsc),
            seed.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv: {e}")))
}

pub fn csv_string(report: &MetricsReport, split: SplitFilter, seed: u64) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(report, split, seed, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::invalid(e.to_string()))
}

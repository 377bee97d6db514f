//! Success metrics. GSR counts successful episodes; OSSR counts successes
//! whose first close already held the object, over all episodes, so it never
//! exceeds GSR. `ossr_alt` uses successful episodes as the denominator
//! instead. TSC is the mean success step over successful episodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::episode::EpisodeLog;

/// Category label of the per-level aggregate row.
pub const ALL: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub level: u8,
    pub category: String,
    pub n_episodes: usize,
    pub n_successes: usize,
    pub n_one_shot: usize,
    /// Percent.
    pub gsr: f64,
    pub ossr: f64,
    pub ossr_alt: Option<f64>,
    /// Mean decision steps to success; `None` without successes.
    pub tsc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Sorted by level, then category with the aggregate row first.
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn level(&self, level: u8) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.level == level && r.category == ALL)
    }
}

#[derive(Default)]
struct Tally {
    n: usize,
    successes: usize,
    one_shot: usize,
    step_sum: f64,
}

impl Tally {
    fn add(&mut self, log: &EpisodeLog) {
        self.n += 1;
        if log.succeeded() {
            self.successes += 1;
            self.step_sum += log.outcome.success_step.unwrap_or(log.decision_steps) as f64;
        }
        if log.one_shot() {
            self.one_shot += 1;
        }
    }

    fn row(&self, level: u8, category: &str) -> MetricsRow {
        let pct = |a: usize, b: usize| 100.0 * a as f64 / b as f64;
        MetricsRow {
            level,
            category: category.to_string(),
            n_episodes: self.n,
            n_successes: self.successes,
            n_one_shot: self.one_shot,
            gsr: pct(self.successes, self.n),
            ossr: pct(self.one_shot, self.n),
            ossr_alt: (self.successes > 0).then(|| pct(self.one_shot, self.successes)),
            tsc: (self.successes > 0).then(|| self.step_sum / self.successes as f64),
        }
    }
}

pub fn compute_metrics(logs: &[EpisodeLog]) -> Result<MetricsReport> {
    if logs.is_empty() {
        return Err(Error::invalid("no episode logs to aggregate"));
    }
    let mut by_level: BTreeMap<u8, Tally> = BTreeMap::new();
    let mut by_category: BTreeMap<(u8, String), Tally> = BTreeMap::new();
    for log in logs {
        by_level.entry(log.config.level).or_default().add(log);
        by_category
            .entry((log.config.level, log.category.clone()))
            .or_default()
            .add(log);
    }
    let mut rows = Vec::new();
    for (level, tally) in &by_level {
        rows.push(tally.row(*level, ALL));
        for ((_, category), t) in by_category.range((*level, String::new())..(*level + 1, String::new())) {
            rows.push(t.row(*level, category));
        }
    }
    Ok(MetricsReport { rows })
}

//! Run configuration.
//!
//! A TOML file overrides any subset of the defaults; missing keys keep them.
//! The path comes from `--config` or, failing that, the `QUADGRASP_CONFIG`
//! environment variable.
//!
//! ```toml
//! catalog = "objects.toml"
//!
//! [episode]
//! timeout_steps = 200
//!
//! [episode.grasp]
//! pos_tol = 0.02
//!
//! [options]
//! mode = "centroid"
//! bearing_gain = 1500.0
//!
//! [options.teacher]
//! standoff = 0.55
//!
//! [options.reward_weights]
//! completion = 5.0
//!
//! [bench]
//! levels = [1, 4]
//! steps = 5000
//! split = "seen"
//! seed = 7
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::bench::{BenchSpec, Budget, SplitFilter, DEFAULT_STEP_BUDGET};
use crate::harness::episode::EpisodeOptions;
use crate::scene::catalog::{default_catalog, load_catalog, ObjectSpec};
use crate::scene::state::{EpisodeConfig, DECISION_DT, PHYSICS_DT, TIMEOUT_STEPS};
use crate::scene::status::GraspCheck;

pub const CONFIG_ENV: &str = "QUADGRASP_CONFIG";

/// The per-episode settings that are not drawn per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeDefaults {
    pub physics_dt: f64,
    pub decision_dt: f64,
    pub timeout_steps: u32,
    pub grasp: GraspCheck,
}

impl Default for EpisodeDefaults {
    fn default() -> Self {
        EpisodeDefaults {
            physics_dt: PHYSICS_DT,
            decision_dt: DECISION_DT,
            timeout_steps: TIMEOUT_STEPS,
            grasp: GraspCheck::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchDefaults {
    pub levels: Vec<u8>,
    /// Episodes per level; when set it replaces the step budget.
    pub episodes: Option<u64>,
    /// Decision steps per level.
    pub steps: u64,
    pub split: SplitFilter,
    pub seed: u64,
}

impl Default for BenchDefaults {
    fn default() -> Self {
        BenchDefaults {
            levels: vec![1, 2, 3, 4],
            episodes: None,
            steps: DEFAULT_STEP_BUDGET,
            split: SplitFilter::Both,
            seed: 0,
        }
    }
}

impl BenchDefaults {
    pub fn budget(&self) -> Budget {
        match self.episodes {
            Some(n) => Budget::Episodes(n),
            None => Budget::Steps(self.steps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Object catalog file; the built-in catalog when absent.
    pub catalog: Option<PathBuf>,
    pub episode: EpisodeDefaults,
    pub options: EpisodeOptions,
    pub bench: BenchDefaults,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        // A relative catalog path is relative to the config file.
        if let (Some(cat), Some(dir)) = (cfg.catalog.as_mut(), path.parent()) {
            if cat.is_relative() {
                *cat = dir.join(&*cat);
            }
        }
        Ok(cfg)
    }

    /// `explicit` wins over the environment; defaults when neither is set.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.options.teacher.validate()?;
        self.options.wrist_camera.validate()?;
        self.options.base_camera.validate()?;
        if self.options.bank.k == 0 || self.options.bank.candidates == 0 {
            return Err(Error::Config("bank sizes must be positive".into()));
        }
        if !(self.options.bearing_gain.is_finite() && self.options.height_bias.is_finite()) {
            return Err(Error::Config("GFM gains must be finite".into()));
        }
        self.episode_config(1, "", 0).validate()?;
        if let Some(&l) = self.bench.levels.iter().find(|l| !(1..=4).contains(*l)) {
            return Err(Error::Config(format!("bench level {l} outside 1..=4")));
        }
        Ok(())
    }

    pub fn catalog(&self) -> Result<Vec<ObjectSpec>> {
        match &self.catalog {
            Some(p) => load_catalog(p),
            None => Ok(default_catalog()),
        }
    }

    pub fn episode_config(&self, level: u8, object_id: &str, seed: u64) -> EpisodeConfig {
        let e = &self.episode;
        EpisodeConfig {
            physics_dt: e.physics_dt,
            decision_dt: e.decision_dt,
            timeout_steps: e.timeout_steps,
            grasp: e.grasp,
            ..EpisodeConfig::new(level, object_id, seed)
        }
    }

    /// Benchmark spec from the `[bench]` section.
    pub fn bench_spec(&self) -> BenchSpec {
        let b = &self.bench;
        BenchSpec {
            options: self.options.clone(),
            episode: self.episode_config(1, "", 0),
            ..BenchSpec::new(b.levels.clone(), b.budget(), b.split, b.seed)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

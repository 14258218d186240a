//! Declarative experiment file (TOML). Every table and key is optional;
//! command-line flags override file values.
//!
//! ```toml
//! [grid]
//! size = 32
//! obstacle_density = 0.15
//! goal_count = 32
//! view_radius = 2
//! max_episode_steps = 3600
//!
//! [encoder]
//! kind = "stacked_window"   # identity | random_projection | stacked_window
//! window = 8
//!
//! [record]
//! demos = 100
//! seed = 7
//! noise_eps = 0.1
//! hold_steps = 120
//!
//! [controller]
//! warmup = 0
//! max_steps = 100
//! div_threshold = "auto:0.95"   # or a number
//!
//! [suite]
//! seeds = 20
//! episodes = 10
//! success_k = 100
//! ```

use std::path::Path;

use anyhow::{bail, Context};
use sbc_core::eval::{ControllerPlan, DEFAULT_EPISODES_PER_SEED, DEFAULT_SEEDS, DEFAULT_SUCCESS_K};
use sbc_core::{EncoderConfig, GridConfig};
use serde::Deserialize;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub encoder: EncoderConfig,
    pub record: RecordConfig,
    pub controller: ControllerPlan,
    pub suite: SuiteConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordConfig {
    pub demos: usize,
    pub seed: u64,
    pub noise_eps: f64,
    pub hold_steps: usize,
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self {
            demos: 100,
            seed: 7,
            noise_eps: 0.1,
            hold_steps: 120,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// Seeds `0..seeds`.
    pub seeds: usize,
    pub episodes: usize,
    pub success_k: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seeds: DEFAULT_SEEDS,
            episodes: DEFAULT_EPISODES_PER_SEED,
            success_k: DEFAULT_SUCCESS_K,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let config = match path {
            None => Self::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
        };
        config.check()?;
        Ok(config)
    }

    /// Cross-module consistency, before anything runs.
    pub fn check(&self) -> anyhow::Result<()> {
        self.grid.validate()?;
        self.encoder.output_dim(self.grid.observation_len())?;
        if self.suite.seeds == 0 || self.suite.episodes == 0 || self.suite.success_k == 0 {
            bail!("suite seeds, episodes and success_k must be positive");
        }
        if self.controller.max_steps == 0 {
            bail!("controller max_steps must be positive");
        }
        Ok(())
    }
}

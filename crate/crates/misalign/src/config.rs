//! TOML experiment files.
//!
//! ```toml
//! output_dir = "results"
//!
//! [run]
//! epochs = 200
//! eval_every = 5
//! run_seed = 0
//! regime_tol = 0.1
//!
//! [run.csbm]      # n_nodes, n_communities, p_in, p_out, signal_strength,
//!                 # feature_dim, feature_noise_sigma, seed
//! [run.task]      # beta, r_star, split_fractions, split_seed
//! [run.model]     # n_layers, n_heads, d_model, d_ff, lambda_dist_init,
//!                 # param_seed, learning_rate
//! [run.controller]  # kind, lambda_init, target_gap, gain, update_every,
//!                   # lambda_bounds, warmup_epochs
//!
//! [sweep]
//! betas = [0.0, 0.25, 0.5, 0.75, 1.0]
//! lambdas = [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0]
//! seeds = 5
//! ```
//!
//! Every section and key is optional; missing values take their defaults.
//! Unknown keys are rejected. Nested seed fields are overwritten by values
//! derived from the run seed.

use std::path::{Path, PathBuf};

use misalign_core::RunConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub betas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Seeds `0..seeds`.
    pub seeds: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            lambdas: vec![-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0],
            seeds: 5,
        }
    }
}

impl SweepGrid {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() || self.lambdas.is_empty() || self.seeds == 0 {
            return Err(HarnessError::Usage("sweep grid must have at least one beta, lambda and seed".into()));
        }
        if !self.betas.iter().chain(&self.lambdas).all(|x| x.is_finite()) {
            return Err(HarnessError::Usage("sweep grid values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: Option<PathBuf>,
    pub run: RunConfig,
    pub sweep: SweepGrid,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| HarnessError::Config { path: path.into(), message: e.to_string() })?;
        cfg.run.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

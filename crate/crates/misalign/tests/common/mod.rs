#![allow(dead_code)]

use misalign_core::{CsbmParams, ModelConfig, RunConfig, TaskSpec};

/// A run small enough for many repetitions per test.
pub fn tiny_config() -> RunConfig {
    RunConfig {
        csbm: CsbmParams { n_nodes: 70, p_in: 0.15, p_out: 0.03, feature_dim: 4, ..Default::default() },
        task: TaskSpec { r_star: 2, ..Default::default() },
        model: ModelConfig { d_model: 8, d_ff: 16, ..Default::default() },
        epochs: 12,
        eval_every: 4,
        ..Default::default()
    }
}

//! Model checkpoint text format.
//!
//! ```text
//! misalign-checkpoint 1
//! n_layers <L>
//! n_heads <H>
//! d_model <d>
//! d_ff <f>
//! lambda_dist_init <x>
//! param_seed <s>
//! learning_rate <x>
//! feature_dim <d_in>
//! lambda_dist <x>
//! step <t>
//! tensor <group> <name> <dim_1> .. <dim_k>
//! <values, row-major, one line>
//! ...
//! ```
//!
//! `group` is `param`, `adam_m` or `adam_v`; each group lists every tensor
//! in canonical parameter order.

use std::fmt::Write as _;

use misalign_core::model::{ModelConfig, Params};
use misalign_core::ModelState;

use super::Lines;
use crate::error::Result;

const MAGIC: &str = "misalign-checkpoint 1";
const GROUPS: [&str; 3] = ["param", "adam_m", "adam_v"];

pub fn write_checkpoint(state: &ModelState) -> String {
    let c = &state.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "n_layers {}", c.n_layers);
    let _ = writeln!(out, "n_heads {}", c.n_heads);
    let _ = writeln!(out, "d_model {}", c.d_model);
    let _ = writeln!(out, "d_ff {}", c.d_ff);
    let _ = writeln!(out, "lambda_dist_init {}", c.lambda_dist_init);
    let _ = writeln!(out, "param_seed {}", c.param_seed);
    let _ = writeln!(out, "learning_rate {}", c.learning_rate);
    let _ = writeln!(out, "feature_dim {}", state.feature_dim());
    let _ = writeln!(out, "lambda_dist {}", state.lambda_dist);
    let _ = writeln!(out, "step {}", state.moments.step);
    for (group, params) in GROUPS.iter().zip([&state.params, &state.moments.first, &state.moments.second]) {
        for t in params.tensors() {
            let _ = write!(out, "tensor {group} {}", t.name);
            for d in &t.shape {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            let mut first = true;
            for x in &t.data {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{x}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn read_checkpoint(text: &str) -> Result<ModelState> {
    let mut lines = Lines::new("checkpoint", text);
    if lines.expect_fields()?.join(" ") != MAGIC {
        return Err(lines.error(format!("expected `{MAGIC}` header")));
    }
    let config = ModelConfig {
        n_layers: lines.keyed("n_layers")?,
        n_heads: lines.keyed("n_heads")?,
        d_model: lines.keyed("d_model")?,
        d_ff: lines.keyed("d_ff")?,
        lambda_dist_init: lines.keyed("lambda_dist_init")?,
        param_seed: lines.keyed("param_seed")?,
        learning_rate: lines.keyed("learning_rate")?,
    };
    let feature_dim: usize = lines.keyed("feature_dim")?;
    let lambda_dist: f64 = lines.keyed("lambda_dist")?;
    let step: u64 = lines.keyed("step")?;

    let mut state = ModelState::new(config, feature_dim)?;
    let mut groups: [Params; 3] = [state.params.zeros_like(), state.params.zeros_like(), state.params.zeros_like()];
    for (group, params) in GROUPS.iter().zip(groups.iter_mut()) {
        for t in params.tensors_mut() {
            let header = lines.expect_fields()?;
            let expect: Vec<String> = ["tensor", group, &t.name]
                .iter()
                .map(|s| s.to_string())
                .chain(t.shape.iter().map(|d| d.to_string()))
                .collect();
            if header != expect {
                return Err(lines.error(format!("expected `{}`", expect.join(" "))));
            }
            let values = lines.expect_fields()?;
            if values.len() != t.data.len() {
                return Err(lines.error(format!("{} needs {} values, found {}", t.name, t.data.len(), values.len())));
            }
            for (slot, v) in t.data.iter_mut().zip(values) {
                *slot = lines.parse(v)?;
            }
        }
    }
    if lines.next_fields().is_some() {
        return Err(lines.error("trailing content"));
    }
    let [params, first, second] = groups;
    state.moments.first = first;
    state.moments.second = second;
    state.moments.step = step;
    let moments = state.moments;
    Ok(ModelState::from_parts(state.config, params, moments, lambda_dist)?)
}

//! One seeded training run: sample a graph, label it, train the biased
//! transformer full-batch under a lambda policy, and record accuracies and
//! distance mismatch along the way.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::control::{controller_step, ControllerConfig, ControllerKind, ControllerState};
use crate::diagnostics::{
    attention_profile, attention_profiles_per_layer, bucket_sizes, pooled_attention_mass, self_attention_mass,
    shell_corrected, task_profile, DistanceProfile, MismatchReport, DEFAULT_REGIME_TOL,
};
use crate::error::{Error, Result};
use crate::graphgen::{all_pairs_spd, sample_csbm, CsbmParams, DistanceMatrix, Graph};
use crate::model::{evaluate, forward, loss_and_grads, train_step, ForwardPass, ModelConfig, ModelState};
use crate::rng::{derive_seed, Stream};
use crate::task::{make_labels, LabeledTask, Split, TaskSpec};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct RunConfig {
    pub csbm: CsbmParams,
    pub task: TaskSpec,
    pub model: ModelConfig,
    pub controller: ControllerConfig,
    pub epochs: usize,
    pub eval_every: usize,
    /// Derives the graph, split and parameter seeds; the nested seed fields
    /// are overwritten by `run_one`.
    pub run_seed: u64,
    pub regime_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            csbm: CsbmParams::default(),
            task: TaskSpec::default(),
            model: ModelConfig::default(),
            controller: ControllerConfig::default(),
            epochs: 200,
            eval_every: 5,
            run_seed: 0,
            regime_tol: DEFAULT_REGIME_TOL,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParams("epochs must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParams("eval_every must be at least 1".into()));
        }
        if !(self.regime_tol > 0.0) {
            return Err(Error::InvalidParams("regime_tol must be positive".into()));
        }
        self.csbm.validate()?;
        self.task.validate()?;
        self.model.validate()?;
        self.controller.validate()
    }

    /// Copy with the nested seeds replaced by ones derived from `run_seed`.
    pub fn seeded(&self) -> Self {
        let mut cfg = self.clone();
        cfg.csbm.seed = derive_seed(self.run_seed, Stream::Graph);
        cfg.task.split_seed = derive_seed(self.run_seed, Stream::Split);
        cfg.model.param_seed = derive_seed(self.run_seed, Stream::Params);
        cfg.model.lambda_dist_init = self.controller.lambda_init;
        cfg
    }
}

/// Metrics at one evaluation epoch. Epoch `e` is measured before that
/// epoch's update; the final record (epoch = `epochs`) is after training.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub train_loss: f64,
    pub lambda: f64,
    pub mismatch: MismatchReport,
    pub self_attention: f64,
}

/// One controller update.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecord {
    pub epoch: usize,
    /// Lambda in effect when the gap was measured.
    pub lambda: f64,
    pub measured_gap: f64,
    pub target_gap: f64,
    pub next_lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub beta: f64,
    pub run_seed: u64,
    pub policy: ControllerKind,
    pub trajectory: Vec<EvalRecord>,
    pub control: Vec<ControlRecord>,
    pub task_profile: DistanceProfile,
    /// Pooled attention mass per distance bucket after training, before
    /// shell correction.
    pub final_raw_attention: Vec<f64>,
    pub bucket_sizes: Vec<f64>,
    pub final_attention_profile: DistanceProfile,
    pub final_layer_profiles: Vec<DistanceProfile>,
}

impl RunResult {
    pub fn final_record(&self) -> &EvalRecord {
        self.trajectory.last().expect("a run records at least its final epoch")
    }

    pub fn final_test_accuracy(&self) -> f64 {
        self.final_record().test_accuracy
    }

    pub fn final_val_accuracy(&self) -> f64 {
        self.final_record().val_accuracy
    }

    pub fn final_lambda(&self) -> f64 {
        self.final_record().lambda
    }

    pub fn final_gap(&self) -> f64 {
        self.final_record().mismatch.gap
    }

    pub fn final_w1(&self) -> f64 {
        self.final_record().mismatch.w1
    }
}

/// Everything a run produced, for callers that persist the graph or model.
pub struct RunArtifacts {
    pub config: RunConfig,
    pub graph: Graph,
    pub distances: DistanceMatrix,
    pub task: LabeledTask,
    pub state: ModelState,
    pub result: RunResult,
}

/// Runs one configuration. Errors carry the run seed.
pub fn run_one(cfg: &RunConfig) -> Result<RunResult> {
    run_with_artifacts(cfg).map(|a| a.result)
}

pub fn run_with_artifacts(cfg: &RunConfig) -> Result<RunArtifacts> {
    run_inner(cfg).map_err(|e| match e {
        e @ Error::Run { .. } => e,
        e => Error::Run { seed: cfg.run_seed, source: Box::new(e) },
    })
}

fn run_inner(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let cfg = cfg.seeded();
    let graph = sample_csbm(&cfg.csbm)?;
    let dm = all_pairs_spd(&graph);
    let task = make_labels(&graph, &dm, &cfg.task)?;
    let task_prof = task_profile(&dm, &cfg.task);
    let mut state = ModelState::new(cfg.model.clone(), graph.feature_dim())?;
    let ctl_cfg = &cfg.controller;
    let mut ctl = ControllerState::new(ctl_cfg);

    let mut trajectory = Vec::new();
    let mut control = Vec::new();
    let measure = |fwd: &ForwardPass| -> Result<(MismatchReport, f64)> {
        let profile = attention_profile(fwd.attention(), &dm)?;
        Ok((MismatchReport::compare(&task_prof, &profile, cfg.regime_tol), self_attention_mass(fwd.attention())))
    };

    for epoch in 0..cfg.epochs {
        state.lambda_dist = ctl.lambda;
        let fwd = forward(&graph, &dm, &state)?;
        let (loss, grads) = loss_and_grads(&fwd, &task, Split::Train, &state)?;
        let record = epoch % cfg.eval_every == 0;
        let due = ctl.is_due(ctl_cfg, epoch);
        if record || due {
            let (mismatch, self_attention) = measure(&fwd)?;
            if record {
                trajectory.push(eval_record(epoch, &fwd, &task, loss, state.lambda_dist, mismatch, self_attention)?);
            }
            if due {
                let next = controller_step(ctl_cfg, &ctl, epoch, mismatch.gap)?;
                control.push(ControlRecord {
                    epoch,
                    lambda: ctl.lambda,
                    measured_gap: mismatch.gap,
                    target_gap: ctl_cfg.effective_target(),
                    next_lambda: next.lambda,
                });
                ctl = next;
            }
        }
        train_step(&mut state, &grads)?;
    }

    state.lambda_dist = ctl.lambda;
    let fwd = forward(&graph, &dm, &state)?;
    let (loss, _) = loss_and_grads(&fwd, &task, Split::Train, &state)?;
    let (mismatch, self_attention) = measure(&fwd)?;
    trajectory.push(eval_record(cfg.epochs, &fwd, &task, loss, state.lambda_dist, mismatch, self_attention)?);

    let raw = pooled_attention_mass(fwd.attention(), &dm)?;
    let result = RunResult {
        beta: cfg.task.beta,
        run_seed: cfg.run_seed,
        policy: ctl_cfg.kind,
        trajectory,
        control,
        task_profile: task_prof.clone(),
        final_attention_profile: shell_corrected(&raw, &dm)?,
        final_raw_attention: raw,
        bucket_sizes: bucket_sizes(&dm),
        final_layer_profiles: attention_profiles_per_layer(fwd.attention(), &dm)?,
    };
    Ok(RunArtifacts { config: cfg, graph, distances: dm, task, state, result })
}

fn eval_record(
    epoch: usize,
    fwd: &ForwardPass,
    task: &LabeledTask,
    train_loss: f64,
    lambda: f64,
    mismatch: MismatchReport,
    self_attention: f64,
) -> Result<EvalRecord> {
    Ok(EvalRecord {
        epoch,
        train_accuracy: evaluate(fwd.logits(), task, Split::Train)?,
        val_accuracy: evaluate(fwd.logits(), task, Split::Val)?,
        test_accuracy: evaluate(fwd.logits(), task, Split::Test)?,
        train_loss,
        lambda,
        mismatch,
        self_attention,
    })
}

//! Policies for the distance-bias strength during training.
//!
//! `Fixed` never moves lambda. `ZeroGap` and `TargetGap` apply a clipped
//! proportional law `lambda <- clip(lambda - gain * (gap - target))` every
//! `update_every` epochs after warmup. A gap above target means the model
//! attends more locally than wanted, so lambda goes down.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum ControllerKind {
    Fixed,
    ZeroGap,
    TargetGap,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Fixed => "fixed",
            ControllerKind::ZeroGap => "zero_gap",
            ControllerKind::TargetGap => "target_gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub lambda_init: f64,
    /// Ignored by `Fixed`; forced to zero by `ZeroGap`.
    pub target_gap: f64,
    pub gain: f64,
    pub update_every: usize,
    pub lambda_bounds: [f64; 2],
    pub warmup_epochs: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Fixed,
            lambda_init: 0.0,
            target_gap: 0.0,
            gain: 0.25,
            update_every: 5,
            lambda_bounds: [-1.0, 3.0],
            warmup_epochs: 20,
        }
    }
}

impl ControllerConfig {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            kind: ControllerKind::Fixed,
            lambda_init: lambda,
            lambda_bounds: [lambda.min(-1.0), lambda.max(3.0)],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.into()));
        let [lo, hi] = self.lambda_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("lambda_bounds must be finite with min <= max");
        }
        if !(lo <= self.lambda_init && self.lambda_init <= hi) {
            return bad("lambda_init must lie within lambda_bounds");
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return bad("gain must be positive");
        }
        if self.update_every == 0 {
            return bad("update_every must be at least 1");
        }
        if !self.target_gap.is_finite() {
            return bad("target_gap must be finite");
        }
        Ok(())
    }

    /// Gap the policy steers toward.
    pub fn effective_target(&self) -> f64 {
        match self.kind {
            ControllerKind::ZeroGap => 0.0,
            _ => self.target_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub lambda: f64,
    pub last_update_epoch: Option<usize>,
    /// `(epoch, measured gap)` for every update.
    pub gap_history: Vec<(usize, f64)>,
}

impl ControllerState {
    pub fn new(cfg: &ControllerConfig) -> Self {
        Self { lambda: cfg.lambda_init, last_update_epoch: None, gap_history: Vec::new() }
    }

    /// Whether `controller_step` at `epoch` would move lambda.
    pub fn is_due(&self, cfg: &ControllerConfig, epoch: usize) -> bool {
        cfg.kind != ControllerKind::Fixed
            && epoch >= cfg.warmup_epochs
            && self.last_update_epoch.is_none_or(|last| epoch - last >= cfg.update_every)
    }
}

/// Applies one measurement. Lambda stays in bounds at every step.
pub fn controller_step(
    cfg: &ControllerConfig,
    st: &ControllerState,
    epoch: usize,
    measured_gap: f64,
) -> Result<ControllerState> {
    if !measured_gap.is_finite() {
        return Err(Error::NonFiniteGap { epoch });
    }
    let mut next = st.clone();
    if st.is_due(cfg, epoch) {
        let [lo, hi] = cfg.lambda_bounds;
        let error = measured_gap - cfg.effective_target();
        next.lambda = (st.lambda - cfg.gain * error).clamp(lo, hi);
        next.last_update_epoch = Some(epoch);
        next.gap_history.push((epoch, measured_gap));
    }
    Ok(next)
}

/// Runs the controller against a synthetic plant `lambda -> gap`, stepping
/// once per update slot, and returns the lambda trajectory (initial value
/// first).
pub fn closed_loop_trajectory(
    plant: impl Fn(f64) -> f64,
    cfg: &ControllerConfig,
    iterations: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut st = ControllerState::new(cfg);
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(st.lambda);
    for k in 0..iterations {
        let epoch = cfg.warmup_epochs + k * cfg.update_every;
        st = controller_step(cfg, &st, epoch, plant(st.lambda))?;
        out.push(st.lambda);
    }
    Ok(out)
}

/// Final lambda after `iterations` closed-loop updates.
pub fn closed_loop_convergence_check(
    plant: impl Fn(f64) -> f64,
    cfg: &ControllerConfig,
    iterations: usize,
) -> Result<f64> {
    Ok(*closed_loop_trajectory(plant, cfg, iterations)?.last().expect("trajectory is nonempty"))
}

/// Final metrics of one fixed-lambda run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FixedRunSummary {
    pub beta: f64,
    pub lambda: f64,
    pub seed: u64,
    pub final_val_accuracy: f64,
    pub final_test_accuracy: f64,
    pub final_gap: f64,
    pub final_w1: f64,
}

/// Validation-selected lambda for one beta, with seed-averaged metrics of
/// that lambda.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BestFixed {
    pub beta: f64,
    pub lambda_star: f64,
    pub mean_val_accuracy: f64,
    pub mean_test_accuracy: f64,
    /// Oracle target for the target-gap controller.
    pub mean_final_gap: f64,
    pub n_seeds: usize,
}

const TIE_EPS: f64 = 1e-12;

/// Per beta, the lambda with the highest seed-mean validation accuracy.
/// Ties go to the smallest `|lambda|`, then the smallest lambda.
pub fn select_best_fixed(rows: &[FixedRunSummary], betas: &[f64]) -> Result<Vec<BestFixed>> {
    betas
        .iter()
        .map(|&beta| {
            let mut at_beta: Vec<&FixedRunSummary> = rows.iter().filter(|r| r.beta == beta).collect();
            if at_beta.is_empty() {
                return Err(Error::MissingBeta { beta });
            }
            at_beta.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.seed.cmp(&b.seed)));
            let mut best: Option<BestFixed> = None;
            for group in at_beta.chunk_by(|a, b| a.lambda == b.lambda) {
                let count = group.len() as f64;
                let mean = |f: fn(&FixedRunSummary) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / count;
                let cand = BestFixed {
                    beta,
                    lambda_star: group[0].lambda,
                    mean_val_accuracy: mean(|r| r.final_val_accuracy),
                    mean_test_accuracy: mean(|r| r.final_test_accuracy),
                    mean_final_gap: mean(|r| r.final_gap),
                    n_seeds: group.len(),
                };
                let better = match &best {
                    None => true,
                    Some(cur) => {
                        let diff = cand.mean_val_accuracy - cur.mean_val_accuracy;
                        if diff.abs() > TIE_EPS {
                            diff > 0.0
                        } else {
                            let (a, b) = (cand.lambda_star.abs(), cur.lambda_star.abs());
                            a < b || (a == b && cand.lambda_star < cur.lambda_star)
                        }
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
            Ok(best.expect("group is nonempty"))
        })
        .collect()
}

/// Target gap per beta: the seed-mean final gap of the validation-selected
/// fixed lambda.
pub fn oracle_targets_from_sweep(rows: &[FixedRunSummary], betas: &[f64]) -> Result<Vec<(f64, f64)>> {
    Ok(select_best_fixed(rows, betas)?.into_iter().map(|b| (b.beta, b.mean_final_gap)).collect())
}

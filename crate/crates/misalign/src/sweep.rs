//! Seeded sweeps over (beta, policy, lambda, seed) cells on a worker pool.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::Instant;

use misalign_core::control::BestFixed;
use misalign_core::{run_one, ControllerConfig, ControllerKind, RunConfig, RunResult};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// One unit of work. `lambda` is the fixed value for `Fixed` and the initial
/// value for the controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub beta: f64,
    pub policy: ControllerKind,
    pub lambda: f64,
    pub target_gap: f64,
    pub seed: u64,
}

impl Job {
    pub fn fixed(beta: f64, lambda: f64, seed: u64) -> Self {
        Self { beta, policy: ControllerKind::Fixed, lambda, target_gap: 0.0, seed }
    }

    /// Applies this cell to a base config. Controller gain, cadence and
    /// bounds come from the base.
    pub fn config(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.task.beta = self.beta;
        cfg.run_seed = self.seed;
        cfg.controller = ControllerConfig {
            kind: self.policy,
            lambda_init: self.lambda,
            target_gap: self.target_gap,
            ..base.controller.clone()
        };
        cfg
    }
}

pub fn grid_jobs(betas: &[f64], lambdas: &[f64], seeds: &[u64]) -> Vec<Job> {
    let mut jobs = Vec::with_capacity(betas.len() * lambdas.len() * seeds.len());
    for &beta in betas {
        for &lambda in lambdas {
            for &seed in seeds {
                jobs.push(Job::fixed(beta, lambda, seed));
            }
        }
    }
    jobs
}

/// Zero-gap and target-gap runs per selected beta, both starting from
/// `lambda_init`; the target is the selection's mean final gap.
pub fn controller_jobs(selections: &[BestFixed], lambda_init: f64, seeds: &[u64]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for sel in selections {
        for (policy, target_gap) in [(ControllerKind::ZeroGap, 0.0), (ControllerKind::TargetGap, sel.mean_final_gap)] {
            for &seed in seeds {
                jobs.push(Job { beta: sel.beta, policy, lambda: lambda_init, target_gap, seed });
            }
        }
    }
    jobs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
}

/// Final metrics of one cell. Metric columns are empty for failed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub policy: ControllerKind,
    pub lambda: f64,
    pub seed: u64,
    pub target_gap: f64,
    pub status: RowStatus,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub final_lambda: Option<f64>,
    pub mu_task: Option<f64>,
    pub mu_a: Option<f64>,
    pub gap: Option<f64>,
    pub w1: Option<f64>,
    pub regime: Option<String>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn from_result(job: &Job, res: &RunResult) -> Self {
        let last = res.final_record();
        Self {
            beta: job.beta,
            policy: job.policy,
            lambda: job.lambda,
            seed: job.seed,
            target_gap: job.target_gap,
            status: RowStatus::Ok,
            train_accuracy: Some(last.train_accuracy),
            val_accuracy: Some(last.val_accuracy),
            test_accuracy: Some(last.test_accuracy),
            final_lambda: Some(last.lambda),
            mu_task: Some(last.mismatch.mu_task),
            mu_a: Some(last.mismatch.mu_a),
            gap: Some(last.mismatch.gap),
            w1: Some(last.mismatch.w1),
            regime: Some(last.mismatch.regime.name().to_string()),
            error: None,
        }
    }

    pub fn failed(job: &Job, message: String) -> Self {
        Self {
            beta: job.beta,
            policy: job.policy,
            lambda: job.lambda,
            seed: job.seed,
            target_gap: job.target_gap,
            status: RowStatus::Failed,
            train_accuracy: None,
            val_accuracy: None,
            test_accuracy: None,
            final_lambda: None,
            mu_task: None,
            mu_a: None,
            gap: None,
            w1: None,
            regime: None,
            error: Some(message),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.beta
            .total_cmp(&other.beta)
            .then(policy_rank(self.policy).cmp(&policy_rank(other.policy)))
            .then(self.lambda.total_cmp(&other.lambda))
            .then(self.seed.cmp(&other.seed))
    }

    pub fn key_label(&self) -> String {
        format!("beta={} policy={} lambda={} seed={}", self.beta, self.policy.name(), self.lambda, self.seed)
    }
}

fn policy_rank(p: ControllerKind) -> u8 {
    match p {
        ControllerKind::Fixed => 0,
        ControllerKind::ZeroGap => 1,
        ControllerKind::TargetGap => 2,
    }
}

/// Rows sorted by (beta, policy, lambda, seed) with distinct keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn new(mut rows: Vec<SweepRow>) -> Result<Self> {
        rows.sort_by(SweepRow::key_cmp);
        let dups: Vec<String> = rows
            .windows(2)
            .filter(|w| w[0].key_cmp(&w[1]) == Ordering::Equal)
            .map(|w| w[0].key_label())
            .collect();
        if !dups.is_empty() {
            return Err(HarnessError::Usage(format!("duplicate sweep keys: {}", dups.join(", "))));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn merge(&self, other: &SweepTable) -> Result<Self> {
        Self::new(self.rows.iter().chain(&other.rows).cloned().collect())
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| !r.is_ok())
    }

    /// Distinct betas, ascending.
    pub fn betas(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.rows.iter().map(|r| r.beta).collect();
        b.dedup();
        b
    }

    /// Distinct lambdas of fixed rows, ascending.
    pub fn fixed_lambdas(&self) -> Vec<f64> {
        let mut l: Vec<f64> =
            self.rows.iter().filter(|r| r.policy == ControllerKind::Fixed).map(|r| r.lambda).collect();
        l.sort_by(f64::total_cmp);
        l.dedup();
        l
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Successful rows matching beta, policy and (if given) lambda.
    pub fn select<'a>(
        &'a self,
        beta: f64,
        policy: ControllerKind,
        lambda: Option<f64>,
    ) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.is_ok() && r.beta == beta && r.policy == policy && lambda.is_none_or(|l| r.lambda == l))
    }

    /// Mean of a metric over the matching successful rows, with the count.
    pub fn mean(
        &self,
        beta: f64,
        policy: ControllerKind,
        lambda: Option<f64>,
        metric: fn(&SweepRow) -> Option<f64>,
    ) -> Option<(f64, usize)> {
        let values: Vec<f64> = self.select(beta, policy, lambda).filter_map(metric).collect();
        (!values.is_empty()).then(|| (values.iter().sum::<f64>() / values.len() as f64, values.len()))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush().map_err(|e| HarnessError::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
        Self::new(rows)
    }
}

/// Wall time of one cell, kept apart from the deterministic table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub beta: f64,
    pub policy: ControllerKind,
    pub lambda: f64,
    pub seed: u64,
    pub wall_time_secs: f64,
}

pub struct SweepRun {
    pub table: SweepTable,
    pub timings: Vec<Timing>,
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs every job, `threads` at a time. A failed or panicking run becomes a
/// failed row; the other rows are unaffected.
pub fn run_jobs(base: &RunConfig, jobs: &[Job], threads: usize) -> Result<SweepRun> {
    base.validate()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<(SweepRow, f64)>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = threads.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, AtomicOrdering::Relaxed);
                let Some(job) = jobs.get(idx) else { break };
                let cfg = job.config(base);
                let start = Instant::now();
                let row = match catch_unwind(AssertUnwindSafe(|| run_one(&cfg))) {
                    Ok(Ok(res)) => SweepRow::from_result(job, &res),
                    Ok(Err(e)) => SweepRow::failed(job, e.to_string()),
                    Err(_) => SweepRow::failed(job, "run panicked".into()),
                };
                let secs = start.elapsed().as_secs_f64();
                log::debug!("{} done in {secs:.2}s", row.key_label());
                slots.lock().expect("no worker panics while holding the lock")[idx] = Some((row, secs));
            });
        }
    });
    let mut rows = Vec::with_capacity(jobs.len());
    let mut timings = Vec::with_capacity(jobs.len());
    for slot in slots.into_inner().expect("workers joined") {
        let (row, secs) = slot.expect("every job ran");
        timings.push(Timing { beta: row.beta, policy: row.policy, lambda: row.lambda, seed: row.seed, wall_time_secs: secs });
        rows.push(row);
    }
    Ok(SweepRun { table: SweepTable::new(rows)?, timings })
}

pub fn run_sweep(base: &RunConfig, betas: &[f64], lambdas: &[f64], seeds: &[u64], threads: usize) -> Result<SweepRun> {
    if betas.is_empty() || lambdas.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Usage("sweep grid must be nonempty".into()));
    }
    run_jobs(base, &grid_jobs(betas, lambdas, seeds), threads)
}

pub fn run_controllers(base: &RunConfig, selections: &[BestFixed], seeds: &[u64], threads: usize) -> Result<SweepRun> {
    run_jobs(base, &controller_jobs(selections, base.controller.lambda_init, seeds), threads)
}

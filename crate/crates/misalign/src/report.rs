//! CSV and JSON outputs: per-run trajectories and the four summary panels.

use std::fs;
use std::path::{Path, PathBuf};

use misalign_core::control::BestFixed;
use misalign_core::{ControllerKind, MismatchReport, RunConfig, RunResult};
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::sweep::{SweepRow, SweepTable};

pub const MISMATCH_HEADER: [&str; 7] = ["epoch", "lambda", "mu_task", "mu_A", "gap", "w1", "regime"];
pub const CONTROL_HEADER: [&str; 4] = ["epoch", "lambda", "measured_gap", "target_gap"];
/// Betas shown in the W1 panel when present in the table.
pub const W1_PANEL_BETAS: [f64; 3] = [0.0, 0.5, 1.0];

pub fn mismatch_row(epoch: usize, lambda: f64, m: &MismatchReport) -> [String; 7] {
    [
        epoch.to_string(),
        lambda.to_string(),
        m.mu_task.to_string(),
        m.mu_a.to_string(),
        m.gap.to_string(),
        m.w1.to_string(),
        m.regime.name().to_string(),
    ]
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Per-eval-epoch trajectory: the mismatch columns followed by accuracies.
pub fn trajectory_csv(res: &RunResult) -> String {
    let mut header = MISMATCH_HEADER.to_vec();
    header.extend(["train_accuracy", "val_accuracy", "test_accuracy", "train_loss", "self_attention"]);
    csv_string(
        &header,
        res.trajectory.iter().map(|r| {
            let mut row = mismatch_row(r.epoch, r.lambda, &r.mismatch).to_vec();
            row.extend(
                [r.train_accuracy, r.val_accuracy, r.test_accuracy, r.train_loss, r.self_attention].map(|x| x.to_string()),
            );
            row
        }),
    )
}

pub fn control_csv(res: &RunResult) -> String {
    csv_string(
        &CONTROL_HEADER,
        res.control.iter().map(|c| {
            vec![c.epoch.to_string(), c.lambda.to_string(), c.measured_gap.to_string(), c.target_gap.to_string()]
        }),
    )
}

/// Final per-distance data: task profile, shell-corrected attention profile,
/// raw pooled attention mass, mean bucket size, then one column per layer.
pub fn profiles_csv(res: &RunResult) -> String {
    let mut header = vec!["r".to_string(), "task".into(), "attention".into(), "raw_mass".into(), "bucket_size".into()];
    header.extend((0..res.final_layer_profiles.len()).map(|l| format!("layer_{l}")));
    let len = res
        .task_profile
        .mass()
        .len()
        .max(res.final_attention_profile.mass().len())
        .max(res.final_raw_attention.len())
        .max(res.bucket_sizes.len());
    let at = |v: &[f64], r: usize| v.get(r).copied().unwrap_or(0.0).to_string();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(
        &header_refs,
        (0..len).map(|r| {
            let mut row = vec![
                r.to_string(),
                at(res.task_profile.mass(), r),
                at(res.final_attention_profile.mass(), r),
                at(&res.final_raw_attention, r),
                at(&res.bucket_sizes, r),
            ];
            row.extend(res.final_layer_profiles.iter().map(|p| at(p.mass(), r)));
            row
        }),
    )
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn controller_betas(controllers: &SweepTable) -> bool {
    controllers.rows().iter().any(|r| r.policy != ControllerKind::Fixed)
}

fn final_lambda(r: &SweepRow) -> Option<f64> {
    r.final_lambda
}

fn test_accuracy(r: &SweepRow) -> Option<f64> {
    r.test_accuracy
}

/// Panel (a): validation-selected lambda, and the seed-mean final lambda of
/// each controller, per beta.
pub fn panel_a(table: &SweepTable, selections: &[BestFixed]) -> String {
    let with_ctl = controller_betas(table);
    let mut header = vec!["beta", "best_fixed_lambda"];
    if with_ctl {
        header.extend(["zero_gap_final_lambda", "target_gap_final_lambda"]);
    }
    csv_string(
        &header,
        selections.iter().map(|s| {
            let mut row = vec![s.beta.to_string(), s.lambda_star.to_string()];
            if with_ctl {
                for kind in [ControllerKind::ZeroGap, ControllerKind::TargetGap] {
                    row.push(opt(table.mean(s.beta, kind, None, final_lambda).map(|m| m.0)));
                }
            }
            row
        }),
    )
}

/// Panel (b): seed-mean test accuracy per policy and beta. Neutral is the
/// fixed lambda = 0 cell.
pub fn panel_b(table: &SweepTable, selections: &[BestFixed]) -> String {
    let with_ctl = controller_betas(table);
    let mut header = vec!["beta", "neutral", "best_fixed"];
    if with_ctl {
        header.extend(["zero_gap", "target_gap"]);
    }
    csv_string(
        &header,
        selections.iter().map(|s| {
            let mut row = vec![
                s.beta.to_string(),
                opt(table.mean(s.beta, ControllerKind::Fixed, Some(0.0), test_accuracy).map(|m| m.0)),
                s.mean_test_accuracy.to_string(),
            ];
            if with_ctl {
                for kind in [ControllerKind::ZeroGap, ControllerKind::TargetGap] {
                    row.push(opt(table.mean(s.beta, kind, None, test_accuracy).map(|m| m.0)));
                }
            }
            row
        }),
    )
}

fn per_lambda_panel(table: &SweepTable, betas: &[f64], column: &str, metric: fn(&SweepRow) -> Option<f64>) -> String {
    let lambdas = table.fixed_lambdas();
    let mut rows = Vec::new();
    for &beta in betas {
        for &lambda in &lambdas {
            if let Some((mean, n)) = table.mean(beta, ControllerKind::Fixed, Some(lambda), metric) {
                rows.push(vec![beta.to_string(), lambda.to_string(), mean.to_string(), n.to_string()]);
            }
        }
    }
    csv_string(&["beta", "lambda", column, "n_seeds"], rows)
}

/// Panel (c): seed-mean final gap per (beta, lambda).
pub fn panel_c(table: &SweepTable) -> String {
    per_lambda_panel(table, &table.betas(), "mean_gap", |r| r.gap)
}

/// Panel (d): seed-mean final W1 per lambda for the representative betas.
pub fn panel_d(table: &SweepTable) -> String {
    let betas: Vec<f64> = table.betas().into_iter().filter(|b| W1_PANEL_BETAS.contains(b)).collect();
    per_lambda_panel(table, &betas, "mean_w1", |r| r.w1)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    base_config: Option<&'a RunConfig>,
    betas: Vec<f64>,
    fixed_lambdas: Vec<f64>,
    seeds: Vec<u64>,
    policies: Vec<&'static str>,
    rows: usize,
    failed: Vec<String>,
    selections: &'a [BestFixed],
    files: Vec<&'static str>,
}

pub const PANEL_FILES: [&str; 4] = ["panel_a_lambda.csv", "panel_b_accuracy.csv", "panel_c_gap.csv", "panel_d_w1.csv"];

/// Writes the four panel CSVs and `manifest.json` into `out`. The table may
/// hold fixed rows only or fixed and controller rows together.
pub fn emit_reports(
    out: &Path,
    table: &SweepTable,
    selections: &[BestFixed],
    base_config: Option<&RunConfig>,
) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let contents = [panel_a(table, selections), panel_b(table, selections), panel_c(table), panel_d(table)];
    let mut written = Vec::new();
    for (name, body) in PANEL_FILES.iter().zip(&contents) {
        let path = out.join(name);
        write_file(&path, body)?;
        written.push(path);
    }
    let mut policies: Vec<&'static str> = Vec::new();
    for r in table.rows() {
        if !policies.contains(&r.policy.name()) {
            policies.push(r.policy.name());
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        base_config,
        betas: table.betas(),
        fixed_lambdas: table.fixed_lambdas(),
        seeds: table.seeds(),
        policies,
        rows: table.len(),
        failed: table.failures().map(SweepRow::key_label).collect(),
        selections,
        files: PANEL_FILES.to_vec(),
    };
    let path = out.join("manifest.json");
    write_file(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    written.push(path);
    Ok(written)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a RunConfig,
    n_nodes: usize,
    n_edges: usize,
    n_valid: usize,
    diameter: u32,
    final_train_accuracy: f64,
    final_val_accuracy: f64,
    final_test_accuracy: f64,
    final_lambda: f64,
    final_mu_task: f64,
    final_mu_a: f64,
    final_gap: f64,
    final_w1: f64,
    final_regime: &'static str,
}

pub const RUN_FILES: [&str; 7] =
    ["result.json", "trajectory.csv", "control.csv", "profiles.csv", "graph.txt", "checkpoint.txt", "timing.json"];

/// Writes everything one run produced into `out`. All files except
/// `timing.json` are a pure function of the config.
pub fn write_run(out: &Path, art: &misalign_core::experiment::RunArtifacts, wall_time_secs: f64) -> Result<()> {
    ensure_dir(out)?;
    let res = &art.result;
    let last = res.final_record();
    let summary = RunSummary {
        config: &art.config,
        n_nodes: art.graph.n(),
        n_edges: art.graph.n_edges(),
        n_valid: art.task.n_valid(),
        diameter: art.distances.diameter(),
        final_train_accuracy: last.train_accuracy,
        final_val_accuracy: last.val_accuracy,
        final_test_accuracy: last.test_accuracy,
        final_lambda: last.lambda,
        final_mu_task: last.mismatch.mu_task,
        final_mu_a: last.mismatch.mu_a,
        final_gap: last.mismatch.gap,
        final_w1: last.mismatch.w1,
        final_regime: last.mismatch.regime.name(),
    };
    let bodies = [
        serde_json::to_string_pretty(&summary)? + "\n",
        trajectory_csv(res),
        control_csv(res),
        profiles_csv(res),
        crate::formats::graph::write_graph(&art.graph, Some(&art.task)),
        crate::formats::checkpoint::write_checkpoint(&art.state),
        serde_json::to_string_pretty(&serde_json::json!({ "wall_time_secs": wall_time_secs }))? + "\n",
    ];
    for (name, body) in RUN_FILES.iter().zip(&bodies) {
        write_file(&out.join(name), body)?;
    }
    Ok(())
}

use misalign::selection::{missing_cells, read_selections, select, write_selections};
use misalign::sweep::{controller_jobs, grid_jobs, RowStatus};
use misalign::{run_jobs, run_sweep, Job, SweepRow, SweepTable};
use misalign_core::{run_one, ControllerConfig, ControllerKind};

mod common;

#[test]
fn single_cell_matches_run_one() {
    let base = common::tiny_config();
    let run = run_sweep(&base, &[0.5], &[1.0], &[4], 1).unwrap();
    assert_eq!(run.table.len(), 1);
    let job = Job::fixed(0.5, 1.0, 4);
    let direct = run_one(&job.config(&base)).unwrap();
    assert_eq!(run.table.rows()[0], SweepRow::from_result(&job, &direct));
    assert_eq!(run.timings.len(), 1);
}

#[test]
fn grid_counts_and_distinct_keys() {
    let jobs = grid_jobs(&[0.0, 0.25, 0.5, 0.75, 1.0], &[-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0], &[0, 1, 2]);
    assert_eq!(jobs.len(), 105);
    let rows: Vec<SweepRow> = jobs.iter().map(|j| SweepRow::failed(j, "not run".into())).collect();
    assert_eq!(SweepTable::new(rows).unwrap().len(), 105);
}

#[test]
fn duplicate_keys_rejected() {
    let job = Job::fixed(0.5, 1.0, 0);
    let rows = vec![SweepRow::failed(&job, "a".into()), SweepRow::failed(&job, "b".into())];
    assert_eq!(SweepTable::new(rows).unwrap_err().kind(), "usage");
}

#[test]
fn worker_count_does_not_change_the_table() {
    let base = common::tiny_config();
    let one = run_sweep(&base, &[0.0, 1.0], &[-1.0, 2.0], &[0, 1], 1).unwrap();
    let three = run_sweep(&base, &[0.0, 1.0], &[-1.0, 2.0], &[0, 1], 3).unwrap();
    assert_eq!(one.table, three.table);
    assert_eq!(one.table.to_csv_string(), three.table.to_csv_string());
}

#[test]
fn failures_are_isolated() {
    let mut base = common::tiny_config();
    // Dense graphs have no nodes at distance 2, so the task is degenerate.
    base.csbm.p_in = 1.0;
    base.csbm.p_out = 1.0;
    let mut jobs = grid_jobs(&[1.0], &[0.0], &[0]);
    let run = run_jobs(&base, &jobs, 2).unwrap();
    assert_eq!(run.table.rows()[0].status, RowStatus::Failed);
    assert!(run.table.rows()[0].error.as_deref().unwrap().contains("seed 0"));

    let good = common::tiny_config();
    jobs = grid_jobs(&[1.0], &[0.0, 1.0], &[0, 1]);
    let mut rows = run_jobs(&good, &jobs, 2).unwrap().table.rows().to_vec();
    let broken = run_jobs(&base, &[jobs[1]], 1).unwrap().table.rows()[0].clone();
    let replaced = rows.iter().position(|r| r.lambda == jobs[1].lambda && r.seed == jobs[1].seed).unwrap();
    let untouched = rows.clone();
    rows[replaced] = broken;
    let table = SweepTable::new(rows).unwrap();
    assert_eq!(table.failures().count(), 1);
    for (a, b) in table.rows().iter().zip(&untouched) {
        if a.is_ok() {
            assert_eq!(a, b);
        }
    }
    assert_eq!(missing_cells(&table), vec!["beta=1 lambda=0 seed=1 (failed)".to_string()]);
    match select(&table) {
        Err(misalign::HarnessError::MissingCells(cells)) => assert_eq!(cells.len(), 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn csv_round_trip_preserves_rows() {
    let base = common::tiny_config();
    let mut rows = run_sweep(&base, &[0.25], &[0.5, -1.0], &[2], 1).unwrap().table.rows().to_vec();
    rows.push(SweepRow::failed(&Job::fixed(0.25, 3.0, 2), "boom, with \"quotes\"".into()));
    let table = SweepTable::new(rows).unwrap();
    let text = table.to_csv_string();
    assert!(text.starts_with(
        "beta,policy,lambda,seed,target_gap,status,train_accuracy,val_accuracy,test_accuracy,final_lambda,mu_task,mu_a,gap,w1,regime,error\n"
    ));
    assert_eq!(SweepTable::read_csv(text.as_bytes()).unwrap(), table);
}

fn synthetic(beta: f64, lambda: f64, seed: u64, val: f64, gap: f64) -> SweepRow {
    let mut r = SweepRow::failed(&Job::fixed(beta, lambda, seed), String::new());
    r.status = RowStatus::Ok;
    r.error = None;
    r.train_accuracy = Some(val);
    r.val_accuracy = Some(val);
    r.test_accuracy = Some(val - 0.05);
    r.final_lambda = Some(lambda);
    r.mu_task = Some(1.0);
    r.mu_a = Some(1.0 - gap);
    r.gap = Some(gap);
    r.w1 = Some(gap.abs());
    r.regime = Some("ALIGNED".into());
    r
}

#[test]
fn selection_recovers_planted_optima() {
    let mut rows = Vec::new();
    for (beta, best) in [(0.0, -0.5), (1.0, 2.0)] {
        for lambda in [-1.0, -0.5, 0.0, 2.0] {
            for seed in 0..3 {
                let val = if lambda == best { 0.9 } else { 0.6 + 0.01 * seed as f64 };
                rows.push(synthetic(beta, lambda, seed, val, lambda * 0.1 + seed as f64 * 0.01));
            }
        }
    }
    let sel = select(&SweepTable::new(rows).unwrap()).unwrap();
    assert_eq!(sel.iter().map(|s| (s.beta, s.lambda_star)).collect::<Vec<_>>(), [(0.0, -0.5), (1.0, 2.0)]);
    assert!((sel[1].mean_final_gap - 0.21).abs() < 1e-12);
    assert_eq!(sel[0].n_seeds, 3);

    let mut buf = Vec::new();
    write_selections(&sel, &mut buf).unwrap();
    assert!(buf.starts_with(b"beta,lambda_star,mean_val_accuracy,mean_test_accuracy,mean_final_gap,n_seeds\n"));
    assert_eq!(read_selections(buf.as_slice()).unwrap(), sel);
}

#[test]
fn selection_ties_go_to_smallest_magnitude() {
    let rows = [-1.0, -0.5, 0.5, 1.0].iter().map(|&l| synthetic(0.5, l, 0, 0.7, l)).collect();
    let sel = select(&SweepTable::new(rows).unwrap()).unwrap();
    assert_eq!(sel[0].lambda_star, -0.5);
}

#[test]
fn missing_cells_are_named() {
    let rows = vec![synthetic(0.0, 0.0, 0, 0.7, 0.0), synthetic(0.0, 1.0, 0, 0.7, 0.0), synthetic(0.0, 1.0, 1, 0.7, 0.0)];
    match select(&SweepTable::new(rows).unwrap()) {
        Err(misalign::HarnessError::MissingCells(cells)) => assert_eq!(cells, ["beta=0 lambda=0 seed=1"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn controller_jobs_use_the_oracle_gap() {
    let rows = vec![synthetic(0.5, 1.0, 0, 0.8, 0.3), synthetic(0.5, 0.0, 0, 0.7, 0.1)];
    let sel = select(&SweepTable::new(rows).unwrap()).unwrap();
    let jobs = controller_jobs(&sel, 0.0, &[0, 1]);
    assert_eq!(jobs.len(), 4);
    assert!(jobs.iter().all(|j| j.beta == 0.5 && j.lambda == 0.0));
    let targets: Vec<(ControllerKind, f64)> = jobs.iter().map(|j| (j.policy, j.target_gap)).collect();
    assert_eq!(
        targets,
        [
            (ControllerKind::ZeroGap, 0.0),
            (ControllerKind::ZeroGap, 0.0),
            (ControllerKind::TargetGap, 0.3),
            (ControllerKind::TargetGap, 0.3)
        ]
    );
    let cfg = jobs[2].config(&common::tiny_config());
    assert_eq!(cfg.controller.kind, ControllerKind::TargetGap);
    assert_eq!(cfg.controller.target_gap, 0.3);
    assert_eq!(cfg.controller.gain, ControllerConfig::default().gain);
}

//! Acceptance criteria, one line per criterion.
//!
//! Runs the default study (5 betas x 7 lambdas x 5 seeds of fixed-lambda
//! runs, then zero-gap and target-gap runs for every beta) plus the
//! property suites, prints `criterion N: PASS|FAIL` lines and exits nonzero
//! if any criterion fails. Tables are also written under the cargo target
//! temp dir for inspection.

use std::fmt::Write as _;
use std::process::ExitCode;
use std::time::Instant;

use misalign::selection::select;
use misalign::sweep::default_threads;
use misalign::{run_controllers, run_sweep, SweepGrid, SweepRow, SweepTable};
use misalign_core::control::{closed_loop_trajectory, BestFixed};
use misalign_core::diagnostics::{attention_profile, task_profile, wasserstein1};
use misalign_core::experiment::run_with_artifacts;
use misalign_core::graphgen::{all_pairs_spd, sample_csbm};
use misalign_core::model::{forward, loss_and_grads};
use misalign_core::rng::rng_from_seed;
use misalign_core::{
    oracles, run_one, AttentionRecord, ControllerConfig, ControllerKind, CsbmParams, DistanceProfile, LabeledTask,
    ModelConfig, ModelState, RunConfig, Split,
};
use rand::Rng;

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, pass: bool, detail: impl Into<String>) -> Outcome {
    let o = Outcome { id, pass, detail: detail.into() };
    println!("criterion {:>2}: {} | {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o
}

struct Study {
    fixed: SweepTable,
    controllers: SweepTable,
    selections: Vec<BestFixed>,
}

impl Study {
    fn mean(&self, beta: f64, kind: ControllerKind, lambda: Option<f64>, metric: fn(&SweepRow) -> Option<f64>) -> f64 {
        let table = if kind == ControllerKind::Fixed { &self.fixed } else { &self.controllers };
        table.mean(beta, kind, lambda, metric).expect("study covers every cell").0
    }

    fn best(&self, beta: f64) -> &BestFixed {
        self.selections.iter().find(|s| s.beta == beta).expect("selected")
    }
}

fn run_study(grid: &SweepGrid, threads: usize) -> Study {
    let base = RunConfig::default();
    let seeds = grid.seed_list();
    let start = Instant::now();
    let fixed = run_sweep(&base, &grid.betas, &grid.lambdas, &seeds, threads).expect("sweep runs").table;
    println!("fixed sweep: {} runs in {:.0}s", fixed.len(), start.elapsed().as_secs_f64());
    assert_eq!(fixed.failures().count(), 0, "sweep rows failed");
    let selections = select(&fixed).expect("complete table");
    let start = Instant::now();
    let controllers = run_controllers(&base, &selections, &seeds, threads).expect("controllers run").table;
    println!("controller runs: {} in {:.0}s", controllers.len(), start.elapsed().as_secs_f64());
    assert_eq!(controllers.failures().count(), 0, "controller rows failed");

    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("temp dir");
    std::fs::write(dir.join("sweep.csv"), fixed.to_csv_string()).expect("write");
    std::fs::write(dir.join("controllers.csv"), controllers.to_csv_string()).expect("write");
    println!("tables written to {}", dir.display());
    Study { fixed, controllers, selections }
}

fn test_acc(r: &SweepRow) -> Option<f64> {
    r.test_accuracy
}

fn print_summary(study: &Study, grid: &SweepGrid) {
    println!("beta   lambda*  neutral  best   zero_gap  target_gap  (mean test accuracy)");
    for &beta in &grid.betas {
        let b = study.best(beta);
        println!(
            "{beta:<6} {:<8} {:.3}    {:.3}  {:.3}     {:.3}",
            b.lambda_star,
            study.mean(beta, ControllerKind::Fixed, Some(0.0), test_acc),
            b.mean_test_accuracy,
            study.mean(beta, ControllerKind::ZeroGap, None, test_acc),
            study.mean(beta, ControllerKind::TargetGap, None, test_acc),
        );
    }
    println!("beta   lambda  val    test   gap     w1");
    for &beta in &grid.betas {
        for &lambda in &grid.lambdas {
            let m = |f: fn(&SweepRow) -> Option<f64>| study.mean(beta, ControllerKind::Fixed, Some(lambda), f);
            println!(
                "{beta:<6} {lambda:<7} {:.3}  {:.3}  {:+.3}  {:.3}",
                m(|r| r.val_accuracy),
                m(test_acc),
                m(|r| r.gap),
                m(|r| r.w1)
            );
        }
    }
}

fn criterion_1(study: &Study, grid: &SweepGrid) -> Outcome {
    let stars: Vec<f64> = grid.betas.iter().map(|&b| study.best(b).lambda_star).collect();
    let monotone = stars.windows(2).all(|w| w[1] >= w[0]);
    let spread = stars.last().unwrap() - stars[0];
    outcome(
        1,
        monotone && spread >= 1.0,
        format!("lambda* by beta {stars:?}; non-decreasing {monotone}; lambda*(1) - lambda*(0) = {spread} (need >= 1)"),
    )
}

fn criterion_2(study: &Study) -> Outcome {
    let slack = 0.02;
    let mut pass = true;
    let mut detail = String::new();
    for beta in [0.5, 0.75, 1.0] {
        let best = study.best(beta).mean_test_accuracy;
        let target = study.mean(beta, ControllerKind::TargetGap, None, test_acc);
        let zero = study.mean(beta, ControllerKind::ZeroGap, None, test_acc);
        let neutral = study.mean(beta, ControllerKind::Fixed, Some(0.0), test_acc);
        let ok = best + slack >= target && target + slack >= zero && zero + slack >= neutral;
        pass &= ok;
        let _ = write!(
            detail,
            "beta {beta}: best {best:.3} target {target:.3} zero {zero:.3} neutral {neutral:.3} {}; ",
            if ok { "ok" } else { "violated" }
        );
    }
    outcome(2, pass, detail.trim_end_matches("; "))
}

fn criterion_3(study: &Study, grid: &SweepGrid) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for &beta in &grid.betas {
        let regret = study.best(beta).mean_test_accuracy - study.mean(beta, ControllerKind::TargetGap, None, test_acc);
        worst = worst.max(regret.abs());
        let _ = write!(detail, "beta {beta}: {regret:+.3}; ");
    }
    outcome(3, worst <= 0.05, format!("best_fixed - target_gap {}max |regret| {worst:.3} (need <= 0.05)", detail))
}

fn criterion_4(study: &Study) -> Outcome {
    let regret = |beta| study.best(beta).mean_test_accuracy - study.mean(beta, ControllerKind::Fixed, Some(0.0), test_acc);
    let (r1, r0) = (regret(1.0), regret(0.0));
    outcome(
        4,
        r1 - r0 >= 0.05,
        format!("neutral regret beta=1 {r1:.3}, beta=0 {r0:.3}, difference {:.3} (need >= 0.05)", r1 - r0),
    )
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn criterion_5(study: &Study, grid: &SweepGrid) -> Outcome {
    let gap = |beta, lambda| study.mean(beta, ControllerKind::Fixed, Some(lambda), |r| r.gap);
    let gaps: Vec<f64> = grid.lambdas.iter().map(|&l| gap(1.0, l)).collect();
    let rho = spearman(&grid.lambdas, &gaps);
    let (at_neg, at_two, far_at_three) = (gap(1.0, -1.0), gap(1.0, 2.0), gap(0.0, 3.0));
    // "Small" positive: below one hop.
    let pass = at_neg < 0.0 && rho >= 0.9 && at_two > 0.0 && at_two < 1.0 && far_at_three > 0.0;
    outcome(
        5,
        pass,
        format!(
            "beta=1 gap at lambda=-1 {at_neg:+.3}, at lambda=2 {at_two:+.3}, Spearman {rho:.3}; beta=0 gap at lambda=3 {far_at_three:+.3}"
        ),
    )
}

fn criterion_6(study: &Study, grid: &SweepGrid) -> Outcome {
    let argmin = |beta| {
        let w: Vec<f64> = grid.lambdas.iter().map(|&l| study.mean(beta, ControllerKind::Fixed, Some(l), |r| r.w1)).collect();
        let k = (0..w.len()).min_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        (grid.lambdas[k], w[k])
    };
    let ((l1, w1), (l0, w0)) = (argmin(1.0), argmin(0.0));
    outcome(6, l1 > l0, format!("argmin W1: beta=1 at lambda {l1} (W1 {w1:.3}), beta=0 at lambda {l0} (W1 {w0:.3})"))
}

fn all_train_task(g: &misalign_core::Graph) -> LabeledTask {
    let n = g.n();
    let labels = g.z().iter().map(|&z| Some(u8::from(z > 0.0))).collect();
    LabeledTask::from_parts(1.0, 2, labels, vec![Some(0.0); n], vec![Some(0.0); n], [(0..n).collect(), vec![], vec![]])
        .expect("valid task")
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..3u64 {
        let g = sample_csbm(&CsbmParams { n_nodes: 12, p_in: 0.3, p_out: 0.05, feature_dim: 4, seed, ..Default::default() })
            .unwrap();
        let dm = all_pairs_spd(&g);
        let task = all_train_task(&g);
        let cfg = ModelConfig { d_model: 8, d_ff: 16, param_seed: 100 + seed, ..Default::default() };
        let mut state = ModelState::new(cfg, 4).unwrap();
        state.lambda_dist = 0.5 + seed as f64 * 0.4;
        let fwd = forward(&g, &dm, &state).unwrap();
        let analytic = loss_and_grads(&fwd, &task, Split::Train, &state).unwrap().1.to_flat();
        let numeric = oracles::finite_diff_grads(
            |x| {
                let mut s = state.clone();
                s.params.set_flat(x).unwrap();
                let f = forward(&g, &dm, &s).unwrap();
                loss_and_grads(&f, &task, Split::Train, &s).unwrap().0
            },
            &state.params.to_flat(),
            1e-4,
        );
        for (a, f) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - f).abs() / a.abs().max(f.abs()).max(1e-6));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        7,
        worst < 1e-3 && secs < 60.0,
        format!("max relative error {worst:.2e} over 3 seeds (need < 1e-3), {secs:.1}s (need < 60s)"),
    )
}

fn random_profile(rng: &mut impl Rng) -> DistanceProfile {
    let len = rng.random_range(1..=8);
    let w: Vec<f64> = (0..len).map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() }).collect();
    if w.iter().all(|&x| x == 0.0) {
        return DistanceProfile::point(len - 1);
    }
    DistanceProfile::from_weights(w).unwrap()
}

fn criterion_8() -> Outcome {
    let mut rng = rng_from_seed(8);
    let mut spd_ok = 0;
    for k in 0..50u64 {
        let n = rng.random_range(1..=50);
        let p = rng.random_range(0.0..0.3);
        let g = sample_csbm(&CsbmParams { n_nodes: n.max(2), p_in: p, p_out: p / 3.0, feature_dim: 1, seed: k, ..Default::default() })
            .unwrap();
        spd_ok += usize::from(all_pairs_spd(&g) == oracles::floyd_warshall(&g));
    }

    let mut w1_err: f64 = 0.0;
    for _ in 0..100 {
        let (p, q) = (random_profile(&mut rng), random_profile(&mut rng));
        w1_err = w1_err.max((wasserstein1(&p, &q) - oracles::w1_lp(p.mass(), q.mass())).abs());
    }

    let mut prof_err: f64 = 0.0;
    for k in 0..20u64 {
        let n = rng.random_range(2..=40);
        let g = sample_csbm(&CsbmParams { n_nodes: n, p_in: 0.2, p_out: 0.02, feature_dim: 1, seed: 500 + k, ..Default::default() })
            .unwrap();
        let dm = all_pairs_spd(&g);
        let (layers, heads) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let matrices: Vec<Vec<f64>> = (0..layers * heads)
            .map(|_| {
                let mut m: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
                for row in m.chunks_mut(n) {
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|x| *x /= s);
                }
                m
            })
            .collect();
        let rec = AttentionRecord::new(n, layers, heads, matrices).unwrap();
        let fast = attention_profile(&rec, &dm).unwrap();
        let brute = oracles::attention_profile_brute(rec.matrices(), &dm);
        prof_err = if fast.mass().len() == brute.len() {
            fast.mass().iter().zip(&brute).fold(prof_err, |e, (a, b)| e.max((a - b).abs()))
        } else {
            f64::INFINITY
        };
    }
    outcome(
        8,
        spd_ok == 50 && w1_err <= 1e-9 && prof_err <= 1e-9,
        format!("BFS = Floyd-Warshall on {spd_ok}/50 graphs; W1 vs LP max error {w1_err:.1e}; attention profile vs brute force max error {prof_err:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let mut row_err: f64 = 0.0;
    let mut profile_err: f64 = 0.0;
    let base = RunConfig::default();
    let g = sample_csbm(&base.csbm).unwrap();
    let dm = all_pairs_spd(&g);
    for (k, lambda) in [-1.0, 0.0, 1.0, 3.0].into_iter().enumerate() {
        let mut state = ModelState::new(ModelConfig { param_seed: k as u64, ..Default::default() }, g.feature_dim()).unwrap();
        state.lambda_dist = lambda;
        let fwd = forward(&g, &dm, &state).unwrap();
        for m in fwd.attention().matrices() {
            for row in m.chunks(g.n()) {
                row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
        let p = attention_profile(fwd.attention(), &dm).unwrap();
        profile_err = profile_err.max((p.mass().iter().sum::<f64>() - 1.0).abs());
        for beta in [0.0, 0.5, 1.0] {
            let t = task_profile(&dm, &misalign_core::TaskSpec { beta, ..Default::default() });
            profile_err = profile_err.max((t.mass().iter().sum::<f64>() - 1.0).abs());
        }
    }

    let cfg = RunConfig { controller: ControllerConfig { kind: ControllerKind::TargetGap, target_gap: 0.3, ..Default::default() }, run_seed: 11, ..base.clone() };
    let a = run_with_artifacts(&cfg).unwrap();
    let b = run_with_artifacts(&cfg).unwrap();
    for res in [&a.result, &b.result] {
        for p in std::iter::once(&res.task_profile).chain([&res.final_attention_profile]).chain(&res.final_layer_profiles) {
            profile_err = profile_err.max((p.mass().iter().sum::<f64>() - 1.0).abs());
        }
    }
    let dump = |art: &misalign_core::experiment::RunArtifacts| {
        let dir = tempfile::tempdir().unwrap();
        misalign::report::write_run(dir.path(), art, 0.0).unwrap();
        misalign::report::RUN_FILES.iter().filter(|f| **f != "timing.json").map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect::<Vec<_>>()
    };
    let repeat_identical = format!("{:?}", a.result) == format!("{:?}", b.result) && dump(&a) == dump(&b);

    let small = RunConfig { epochs: 40, ..base };
    let grid = |threads| {
        run_sweep(&small, &[0.0, 1.0], &[-1.0, 1.0], &[0, 1, 2], threads).unwrap().table.to_csv_string()
    };
    let threads_identical = grid(1) == grid(4);
    outcome(
        9,
        row_err <= 1e-6 && profile_err <= 1e-9 && repeat_identical && threads_identical,
        format!("attention row error {row_err:.1e}; profile sum error {profile_err:.1e}; repeat run identical {repeat_identical}; 1 vs 4 workers identical {threads_identical}"),
    )
}

fn criterion_10() -> Outcome {
    // Gap rises with lambda: a more local model has smaller mu_A.
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for product in [0.1, 0.5, 1.0] {
        for (slope, target, lambda_init) in [(1.0, 0.0, 0.0), (0.5, 0.4, -1.0), (2.0, -0.3, 3.0)] {
            let cfg = ControllerConfig {
                kind: ControllerKind::TargetGap,
                target_gap: target,
                gain: product / slope,
                lambda_init,
                warmup_epochs: 0,
                update_every: 1,
                ..Default::default()
            };
            let plant = |l: f64| slope * (l - 0.8);
            let traj = closed_loop_trajectory(plant, &cfg, 200).unwrap();
            let err = (plant(*traj.last().unwrap()) - target).abs();
            worst = worst.max(err);
        }
        details.push(format!("kappa*slope {product}"));
    }

    let tiny = RunConfig {
        csbm: CsbmParams { n_nodes: 80, p_in: 0.15, p_out: 0.03, feature_dim: 4, ..Default::default() },
        task: misalign_core::TaskSpec { r_star: 2, ..Default::default() },
        model: ModelConfig { d_model: 8, d_ff: 16, ..Default::default() },
        epochs: 30,
        eval_every: 1,
        ..Default::default()
    };
    let fixed = run_one(&RunConfig { controller: ControllerConfig::fixed(1.3), ..tiny.clone() }).unwrap();
    let fixed_constant = fixed.trajectory.iter().all(|r| r.lambda.to_bits() == 1.3f64.to_bits()) && fixed.control.is_empty();

    let ctl = |kind, target_gap| ControllerConfig { kind, target_gap, lambda_init: 0.5, warmup_epochs: 3, update_every: 2, ..Default::default() };
    let zero = run_one(&RunConfig { controller: ctl(ControllerKind::ZeroGap, 0.7), ..tiny.clone() }).unwrap();
    let target = run_one(&RunConfig { controller: ctl(ControllerKind::TargetGap, 0.0), ..tiny }).unwrap();
    let same = format!("{:?}{:?}", zero.trajectory, zero.control) == format!("{:?}{:?}", target.trajectory, target.control);
    let moved = zero.control.iter().any(|c| c.next_lambda != 0.5);
    outcome(
        10,
        worst < 1e-6 && fixed_constant && same && moved,
        format!(
            "affine plant worst |gap - g*| {worst:.1e} after 200 updates for {}; fixed lambda bit-constant {fixed_constant}; zero-gap = target-gap(0) bit-exact {same}",
            details.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let threads = default_threads();
    println!("acceptance suite on {threads} worker thread(s)");
    let mut outcomes = vec![criterion_7(), criterion_8(), criterion_9(), criterion_10()];

    let grid = SweepGrid::default();
    let study = run_study(&grid, threads);
    print_summary(&study, &grid);
    outcomes.extend([
        criterion_1(&study, &grid),
        criterion_2(&study),
        criterion_3(&study, &grid),
        criterion_4(&study),
        criterion_5(&study, &grid),
        criterion_6(&study, &grid),
    ]);

    outcomes.sort_by_key(|o| o.id);
    println!("\nsummary");
    for o in &outcomes {
        println!("criterion {:>2}: {}", o.id, if o.pass { "PASS" } else { "FAIL" });
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

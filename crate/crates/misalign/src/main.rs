use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use misalign::report::{self, emit_reports};
use misalign::selection::{read_selections, select, write_selections};
use misalign::sweep::{default_threads, Timing};
use misalign::{run_controllers, run_sweep, ExperimentConfig, HarnessError, Job, Result, SweepTable};
use misalign_core::experiment::run_with_artifacts;
use misalign_core::ControllerKind;

#[derive(Parser)]
#[command(name = "misalign", version, about = "Distance-misalignment experiments on CSBM graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Fixed,
    ZeroGap,
    TargetGap,
}

impl From<PolicyArg> for ControllerKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Fixed => ControllerKind::Fixed,
            PolicyArg::ZeroGap => ControllerKind::ZeroGap,
            PolicyArg::TargetGap => ControllerKind::TargetGap,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its trajectory, profiles, graph and checkpoint.
    Run {
        #[arg(long)]
        beta: Option<f64>,
        /// Fixed lambda, or the initial lambda for a controller.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        target_gap: Option<f64>,
    },
    /// Fixed-lambda grid over betas, lambdas and seeds.
    Sweep {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lambda: Option<Vec<f64>>,
        /// Number of seeds; runs use seeds 0..N.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Validation-selected lambda and oracle gap per beta.
    Select {
        #[arg(long)]
        table: PathBuf,
    },
    /// Zero-gap and target-gap runs for every beta in a selections file.
    Control {
        #[arg(long)]
        selections: PathBuf,
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Panel CSVs and manifest from a sweep table and optional controller table.
    Report {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        controllers: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", HarnessError::Usage(e.render().to_string().trim().to_string()).to_json());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| HarnessError::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| HarnessError::io(path, e))
}

fn write_timings(path: &Path, timings: &[Timing]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for t in timings {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_table(path: &Path, table: &SweepTable) -> Result<()> {
    table.write_csv(create(path)?)?;
    let failed = table.failures().count();
    if failed > 0 {
        log::warn!("{failed} of {} rows failed; see the error column of {}", table.len(), path.display());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut exp = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let out = cli.common.out.clone().or_else(|| exp.output_dir.clone()).unwrap_or_else(|| "results".into());
    let threads = cli.common.threads.unwrap_or_else(default_threads);
    if threads == 0 {
        return Err(HarnessError::Usage("--threads must be at least 1".into()));
    }
    report::ensure_dir(&out)?;

    match cli.command {
        Command::Run { beta, lambda, seed, policy, target_gap } => {
            let base = &exp.run;
            let job = Job {
                beta: beta.unwrap_or(base.task.beta),
                policy: policy.map_or(base.controller.kind, Into::into),
                lambda: lambda.unwrap_or(base.controller.lambda_init),
                target_gap: target_gap.unwrap_or(base.controller.target_gap),
                seed: seed.unwrap_or(base.run_seed),
            };
            let cfg = job.config(base);
            let start = Instant::now();
            let art = run_with_artifacts(&cfg)?;
            let secs = start.elapsed().as_secs_f64();
            report::write_run(&out, &art, secs)?;
            let r = art.result.final_record();
            log::info!(
                "test accuracy {:.4}, lambda {}, gap {:.4} ({}) in {secs:.1}s",
                r.test_accuracy,
                r.lambda,
                r.mismatch.gap,
                r.mismatch.regime.name()
            );
        }
        Command::Sweep { beta, lambda, seeds } => {
            if let Some(b) = beta {
                exp.sweep.betas = b;
            }
            if let Some(l) = lambda {
                exp.sweep.lambdas = l;
            }
            if let Some(s) = seeds {
                exp.sweep.seeds = s;
            }
            exp.sweep.validate()?;
            let g = &exp.sweep;
            log::info!("sweep: {} runs on {threads} threads", g.betas.len() * g.lambdas.len() * g.seeds as usize);
            let run = run_sweep(&exp.run, &g.betas, &g.lambdas, &g.seed_list(), threads)?;
            write_table(&out.join("sweep.csv"), &run.table)?;
            write_timings(&out.join("sweep_timings.csv"), &run.timings)?;
        }
        Command::Select { table } => {
            let table = SweepTable::read_csv(open(&table)?)?;
            let selections = select(&table)?;
            write_selections(&selections, create(&out.join("selections.csv"))?)?;
            write_selections(&selections, std::io::stdout().lock())?;
        }
        Command::Control { selections, seeds } => {
            let selections = read_selections(open(&selections)?)?;
            if let Some(s) = seeds {
                exp.sweep.seeds = s;
            }
            exp.sweep.validate()?;
            let run = run_controllers(&exp.run, &selections, &exp.sweep.seed_list(), threads)?;
            write_table(&out.join("controllers.csv"), &run.table)?;
            write_timings(&out.join("controller_timings.csv"), &run.timings)?;
        }
        Command::Report { table, controllers } => {
            let fixed = SweepTable::read_csv(open(&table)?)?;
            let selections = select(&fixed)?;
            let all = match controllers {
                Some(path) => fixed.merge(&SweepTable::read_csv(open(&path)?)?)?,
                None => fixed,
            };
            let base = cli.common.config.as_ref().map(|_| &exp.run);
            for path in emit_reports(&out, &all, &selections, base)? {
                log::info!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

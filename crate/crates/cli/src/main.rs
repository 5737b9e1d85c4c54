use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lcmtune::harness::{self, compare, report_optima_table, ExperimentConfig, Method, RunPaths, RunReport};
use lcmtune::rng::RngState;
use lcmtune::sampling::{constrained_sample, sample_tasks, ConstrainedOptions};
use lcmtune::spaces::numeric_context;
use lcmtune::Error;

/// Multitask and transfer-learning autotuner.
#[derive(Parser)]
#[command(name = "lcmtune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print sampled tasks (or input configurations) as JSON lines.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Sample input configurations for each configured task instead.
        #[arg(long)]
        inputs: bool,
    },
    /// Run a tuner end to end.
    Tune(TuneArgs),
    /// Evaluate a full grid for every task.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        cap: Option<u64>,
    },
    /// Compare two results files (ratios are A over B).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write comparison.json and comparison.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the best configuration per method and task.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
    /// Like `tune`, seeded with the matching records of the history file.
    WarmStart(TuneArgs),
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluations per task.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    pilot: Option<usize>,
    /// Number of training tasks.
    #[arg(long)]
    tasks: Option<usize>,
    /// Latent functions Q.
    #[arg(long = "latents", short = 'q')]
    latents: Option<usize>,
    /// TLA2 evaluations around the predicted optimum.
    #[arg(long)]
    split: Option<usize>,
    #[arg(long)]
    new_tasks: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides $LCMTUNE_HISTORY_DIR.
    #[arg(long)]
    history_dir: Option<PathBuf>,
    #[arg(long)]
    no_history: bool,
}

impl RunArgs {
    fn load(&self) -> lcmtune::Result<(ExperimentConfig, RunPaths)> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        let b = &mut cfg.budget;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = self.budget {
            b.per_task = v;
        }
        if self.pilot.is_some() {
            b.pilot = self.pilot;
        }
        if let Some(v) = self.tasks {
            b.tasks = v;
        }
        if self.latents.is_some() {
            b.latents = self.latents;
        }
        if self.split.is_some() {
            b.split = self.split;
        }
        if let Some(v) = self.new_tasks {
            b.new_tasks = v;
        }
        let paths = RunPaths {
            output_dir: self.out.clone(),
            history_dir: self.history_dir.clone(),
            no_history: self.no_history,
        };
        Ok((cfg, paths))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NumericalFailure(_) | Error::InsufficientData(_) | Error::RegressionFailure(_) | Error::SamplingExhausted { .. } => 3,
        Error::Objective { .. } => 4,
        _ => 2,
    }
}

fn tune(cfg: ExperimentConfig, paths: &RunPaths, warm: bool) -> lcmtune::Result<()> {
    cfg.validate()?;
    let outcome = harness::run(&cfg, paths, warm)?;
    print!("{}", report_optima_table(std::slice::from_ref(&outcome.report)));
    println!("evaluations: {}, objective time: {:.6e}", outcome.report.evaluations(), outcome.report.total_cost);
    for (i, a) in outcome.report.advice.iter().enumerate() {
        println!("after new task {i}: {a:?}");
    }
    println!("results: {}", outcome.results_path.display());
    if let Some(h) = outcome.history_path {
        println!("history: {}", h.display());
    }
    Ok(())
}

fn sample(config: &Path, count: usize, seed: Option<u64>, inputs: bool) -> lcmtune::Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let setup = cfg.setup()?;
    let state = RngState::new(seed.unwrap_or(cfg.seed));
    let mut out = std::io::stdout().lock();
    if !inputs {
        for t in sample_tasks(&setup.task_space, count, &state)? {
            writeln!(out, "{}", serde_json::to_string(&t)?)?;
        }
        return Ok(());
    }
    let tasks = if cfg.tasks.is_empty() { sample_tasks(&setup.task_space, cfg.budget.tasks, &state.derive(1))? } else { cfg.tasks.clone() };
    for (i, t) in tasks.iter().enumerate() {
        let ctx = numeric_context(&setup.task_space, t);
        for c in constrained_sample(&setup.input_space, &ctx, count, &state.derive(2).derive(i as u64), ConstrainedOptions::default())? {
            writeln!(out, "{}", serde_json::json!({ "task": t, "config": c }))?;
        }
    }
    Ok(())
}

fn main_inner(cli: Cli) -> lcmtune::Result<()> {
    match cli.command {
        Command::Sample { config, count, seed, inputs } => sample(&config, count, seed, inputs),
        Command::Tune(args) => {
            let (mut cfg, paths) = args.run.load()?;
            if let Some(m) = args.method {
                cfg.method = m;
            }
            tune(cfg, &paths, false)
        }
        Command::WarmStart(args) => {
            let (mut cfg, paths) = args.run.load()?;
            if let Some(m) = args.method {
                cfg.method = m;
            }
            tune(cfg, &paths, true)
        }
        Command::Grid { run, resolution, cap } => {
            let (mut cfg, paths) = run.load()?;
            cfg.method = Method::Grid;
            if let Some(r) = resolution {
                cfg.budget.grid_resolution = r;
            }
            if let Some(c) = cap {
                cfg.budget.grid_cap = c;
            }
            tune(cfg, &paths, false)
        }
        Command::Compare { a, b, out } => {
            let report = compare(&RunReport::load(&a)?, &RunReport::load(&b)?)?;
            print!("{}", report.table());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&report)? + "\n")?;
                std::fs::write(dir.join("comparison.csv"), report.plot_data().to_csv()?)?;
            }
            Ok(())
        }
        Command::Report { results } => {
            let reports = results.iter().map(|p| RunReport::load(p)).collect::<lcmtune::Result<Vec<_>>>()?;
            print!("{}", report_optima_table(&reports));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe (e.g. `| head`) is not a failure
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

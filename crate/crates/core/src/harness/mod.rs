//! Experiment plumbing: configuration, end-to-end runs, tuning history,
//! grid references and method comparisons.

mod compare;
mod config;
mod grid;
mod history;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::sampling::sample_tasks;
use crate::spaces::Configuration;
use crate::tuner::{
    ego_single, mla, random_search, restart_advice, tla1_fit, tla1_predict, tla2, Budget, FinalModel, Observation, Phase, Problem, RestartAdvice,
    RestartPolicy, TaskResult, TraceEntry, TunerOptions, TuningResult,
};
use crate::objectives::Evaluator;

pub use compare::{compare, report_optima_table, ComparisonReport, ComparisonRow, PlotData};
pub use config::{BudgetConfig, ExperimentConfig, Method, ObjectiveConfig, OutputConfig, Setup};
pub use grid::{grid_search, grid_size, grid_values};
pub use history::{records_for, HistoryHeader, HistoryRecord, HistoryWriter, TuningHistory, SCHEMA, SCHEMA_VERSION};

/// Overrides the default history directory.
pub const HISTORY_DIR_ENV: &str = "LCMTUNE_HISTORY_DIR";

pub const RESULTS_VERSION: u32 = 1;

/// Everything a run produced, minus timestamps, so reruns with the same
/// seeds serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub name: String,
    pub method: Method,
    pub seed: u64,
    pub objective: String,
    pub task_space_hash: String,
    pub input_space_hash: String,
    /// Tuning evaluations per reported task (0 for TLA1).
    pub budget: usize,
    /// Reported tasks: the held-out tasks for TLA1/TLA2, otherwise all.
    pub tasks: Vec<TaskResult>,
    /// Objective time over every run below, training runs included.
    pub total_cost: f64,
    pub runs: Vec<TuningResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub advice: Vec<RestartAdvice>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn evaluations(&self) -> usize {
        self.runs.iter().map(|r| r.trace.len()).sum()
    }
}

/// Prior observations of each task, refusing histories of other spaces.
pub fn warm_start(history: &TuningHistory, header: &HistoryHeader, tasks: &[Configuration]) -> Result<Vec<Vec<Observation>>> {
    history.header.check_compatible(header)?;
    Ok(tasks.iter().map(|t| history.observations(t)).collect())
}

fn task_seed(seed: u64, tag: u64, i: usize) -> u64 {
    RngState::new(seed).derive(tag).derive(i as u64).seed_value()
}

fn tuner_options(cfg: &ExperimentConfig, setup: &Setup, per_task: usize, pilot: Option<usize>, seed: u64) -> Result<TunerOptions> {
    let budget = match pilot {
        Some(p) => Budget::new(per_task, p.min(per_task))?,
        None => Budget::with_default_pilot(per_task, &setup.input_space)?,
    };
    let mut o = TunerOptions::new(budget, seed);
    o.latents = cfg.budget.latents;
    o.repetitions = cfg.budget.repetitions;
    Ok(o)
}

/// Mean objective time per evaluation over a run's trace.
fn mean_eval_cost(r: &TuningResult) -> f64 {
    let n = r.trace.len().max(1) as f64;
    r.total_cost / n
}

/// Rough seconds for one MLA refit on `points` observations: ten restarts of
/// a hundred likelihood evaluations, each a cubic factorization at 1 Gflop/s.
fn estimated_fit_cost(points: usize) -> f64 {
    let n = points as f64;
    10.0 * 100.0 * n * n * n / 3.0 * 1e-9
}

/// Run the configured method without touching the filesystem. `history`
/// seeds MLA and EGO with earlier observations and, when no tasks are
/// configured, supplies the training tasks.
pub fn execute(cfg: &ExperimentConfig, history: Option<&TuningHistory>) -> Result<RunReport> {
    cfg.validate()?;
    let setup = cfg.setup()?;
    let problem = Problem {
        task_space: &setup.task_space,
        input_space: &setup.input_space,
        objective: setup.objective.as_ref(),
    };
    let header = HistoryHeader::new(problem.objective.id(), problem.task_space, problem.input_space);
    let b = &cfg.budget;
    let master = RngState::new(cfg.seed);

    let tasks: Vec<Configuration> = if !cfg.tasks.is_empty() {
        cfg.tasks.clone()
    } else if let Some(h) = history.filter(|h| !h.tasks().is_empty()) {
        h.tasks().into_iter().take(b.tasks).collect()
    } else {
        sample_tasks(problem.task_space, b.tasks, &master.derive(100))?
    };
    for t in &tasks {
        let report = problem.task_space.check(t);
        if !report.valid {
            return Err(Error::config("tasks", format!("task {t} is invalid: {}", report.violations.join(", "))));
        }
    }
    let prior = match history {
        Some(h) => warm_start(h, &header, &tasks)?,
        None => vec![Vec::new(); tasks.len()],
    };

    let mut runs = Vec::new();
    let mut advice = Vec::new();
    let mut budget = b.per_task;
    match cfg.method {
        Method::Mla => {
            let opts = tuner_options(cfg, &setup, b.per_task, b.pilot, cfg.seed)?;
            runs.push(mla(&problem, &tasks, &prior, &opts)?.0);
        }
        Method::Ego => {
            for (i, t) in tasks.iter().enumerate() {
                let opts = tuner_options(cfg, &setup, b.per_task, b.pilot, task_seed(cfg.seed, 200, i))?;
                runs.push(ego_single(&problem, t, &prior[i], &opts)?.0);
            }
        }
        Method::Random => {
            for (i, t) in tasks.iter().enumerate() {
                runs.push(random_search(&problem, t, b.per_task, b.repetitions, task_seed(cfg.seed, 300, i))?);
            }
        }
        Method::Grid => {
            budget = 0;
            for (i, t) in tasks.iter().enumerate() {
                let r = grid_search(&problem, t, b.grid_resolution, b.grid_cap, b.repetitions, task_seed(cfg.seed, 400, i))?;
                budget = budget.max(r.trace.len());
                runs.push(r);
            }
        }
        Method::Tla1 | Method::Tla2 => {
            let train_opts = tuner_options(cfg, &setup, b.training_per_task.unwrap_or(b.per_task), b.pilot, cfg.seed)?;
            let (train, model) = mla(&problem, &tasks, &prior, &train_opts)?;
            let mut pairs: Vec<(Configuration, Configuration)> = train
                .tasks
                .iter()
                .filter_map(|t| t.best_config.clone().map(|c| (t.task.clone(), c)))
                .collect();
            let delta = tasks.len();
            let fit = crate::gp::FitOptions::default().with_seed(master.derive(500));
            let refit = |pairs: &[(Configuration, Configuration)]| {
                let (ts, os): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
                tla1_fit(problem.task_space, problem.input_space, &ts, &os, &fit)
            };
            let mut predictor = refit(&pairs)?;
            let new_tasks = if cfg.new_tasks.is_empty() {
                sample_tasks(problem.task_space, b.new_tasks, &master.derive(101))?
            } else {
                cfg.new_tasks.clone()
            };
            let train_mean_cost = mean_eval_cost(&train);
            runs.push(train);
            if cfg.method == Method::Tla1 {
                budget = 0;
                // one verification run per prediction, reported but not part of the tuning budget
                let mut evaluator = Evaluator::new(problem.objective, b.repetitions, master.derive(600));
                for (i, t) in new_tasks.iter().enumerate() {
                    let p = tla1_predict(&predictor, t)?;
                    let ctx = crate::spaces::numeric_context(problem.task_space, t);
                    let rec = evaluator.evaluate(i, &ctx, &p.config);
                    let failed = rec.measurement.failed();
                    let value = rec.measurement.value;
                    let cost = rec.measurement.cost();
                    runs.push(TuningResult {
                        method: "tla1".into(),
                        tasks: vec![TaskResult {
                            task: t.clone(),
                            best_config: Some(p.config.clone()),
                            best_value: if failed { f64::INFINITY } else { value },
                            evaluations: 0,
                            prior: 0,
                            cost,
                        }],
                        trace: vec![TraceEntry {
                            task_index: 0,
                            phase: Phase::Predicted,
                            config: p.config,
                            incumbent: value,
                            measurement: rec.measurement,
                        }],
                        total_cost: cost,
                    });
                }
            } else {
                let mut base = match model {
                    FinalModel::Lcm(m) => m,
                    _ => return Err(Error::InsufficientData("the training run produced no model".into())),
                };
                let split = b.split.unwrap_or((b.per_task / 2).max(1));
                for (i, t) in new_tasks.iter().enumerate() {
                    let opts = tuner_options(cfg, &setup, b.per_task, Some(split), task_seed(cfg.seed, 700, i))?;
                    let outcome = tla2(&problem, &base, &predictor, t, &opts)?;
                    if let Some(pair) = outcome.optimum() {
                        pairs.push(pair);
                        predictor = refit(&pairs)?;
                    }
                    if let Some(m) = outcome.model {
                        base = m;
                    }
                    let ratio = estimated_fit_cost(base.index().total()) / train_mean_cost.max(f64::MIN_POSITIVE);
                    advice.push(restart_advice(&RestartPolicy::default(), delta, i + 1, ratio));
                    runs.push(outcome.result);
                }
            }
        }
    }

    let reported: Vec<TaskResult> = match cfg.method {
        Method::Mla => runs[0].tasks.clone(),
        Method::Tla1 | Method::Tla2 => runs[1..].iter().flat_map(|r| r.tasks.clone()).collect(),
        _ => runs.iter().flat_map(|r| r.tasks.clone()).collect(),
    };
    Ok(RunReport {
        version: RESULTS_VERSION,
        name: cfg.name.clone(),
        method: cfg.method,
        seed: cfg.seed,
        objective: header.objective.clone(),
        task_space_hash: header.task_space_hash.clone(),
        input_space_hash: header.input_space_hash.clone(),
        budget,
        total_cost: runs.iter().map(|r| r.total_cost).sum(),
        tasks: reported,
        runs,
        advice,
    })
}

/// Where a run writes.
#[derive(Clone, Debug, Default)]
pub struct RunPaths {
    /// Results directory; falls back to the config, then `runs/<name>`.
    pub output_dir: Option<PathBuf>,
    /// History directory; falls back to `$LCMTUNE_HISTORY_DIR`, then `history`.
    pub history_dir: Option<PathBuf>,
    /// Skip the history file entirely.
    pub no_history: bool,
}

impl RunPaths {
    pub fn output_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| Path::new("runs").join(&cfg.name))
    }

    pub fn history_dir(&self) -> PathBuf {
        self.history_dir
            .clone()
            .or_else(|| std::env::var_os(HISTORY_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("history"))
    }

    pub fn history_file(&self, cfg: &ExperimentConfig) -> PathBuf {
        match &cfg.output.history {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => self.history_dir().join(p),
            None => self.history_dir().join(format!("{}.jsonl", cfg.name)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub results_path: PathBuf,
    pub history_path: Option<PathBuf>,
}

/// [`execute`], then write `results.json` and `optima.txt` and append every
/// evaluation to the history file. With `warm`, earlier records from the
/// history file seed the run.
pub fn run(cfg: &ExperimentConfig, paths: &RunPaths, warm: bool) -> Result<RunOutcome> {
    let history_path = paths.history_file(cfg);
    let history = if warm && history_path.exists() { Some(TuningHistory::load(&history_path)?) } else { None };
    let report = execute(cfg, history.as_ref())?;
    let dir = paths.output_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let results_path = dir.join("results.json");
    std::fs::write(&results_path, report.to_json()?)?;
    std::fs::write(dir.join("optima.txt"), report_optima_table(std::slice::from_ref(&report)))?;
    let history_path = if paths.no_history {
        None
    } else {
        let setup = cfg.setup()?;
        let header = HistoryHeader::new(setup.objective.id(), &setup.task_space, &setup.input_space);
        let mut w = HistoryWriter::open(&history_path, &header)?;
        for r in &report.runs {
            w.append(&records_for(r, &cfg.name, cfg.seed))?;
        }
        Some(history_path)
    };
    Ok(RunOutcome {
        report,
        results_path,
        history_path,
    })
}

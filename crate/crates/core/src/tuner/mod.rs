//! Tuning algorithms: multitask (MLA), single-task EGO, random search, and
//! the two transfer procedures for tasks that were not part of training.

mod acquisition;
mod sequential;
mod transfer;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{FitOptions, GpModel};
use crate::lcm::LcmModel;
use crate::objectives::{finite_or_null, Evaluator, Measurement, Objective};
use crate::rng::RngState;
use crate::sampling::{self, config_key, ConstrainedOptions};
use crate::spaces::{numeric_context, Configuration, ParameterSpace};

pub use acquisition::{expected_improvement, optimize_acquisition, Acquisition, PsoConfig};
pub use sequential::{ego_single, mla, FinalModel};
pub use transfer::{restart_advice, tla1_fit, tla1_predict, tla2, OptimumPredictor, RestartAdvice, RestartPolicy, Tla1Prediction, Tla2Outcome};

/// Anything that predicts `(mean, variance)` of task `task` at an encoded point.
pub trait Surrogate {
    fn predict(&self, task: usize, x: &[f64]) -> Result<(f64, f64)>;
}

impl Surrogate for GpModel<f64> {
    fn predict(&self, _task: usize, x: &[f64]) -> Result<(f64, f64)> {
        GpModel::predict(self, x)
    }
}

impl Surrogate for LcmModel<f64> {
    fn predict(&self, task: usize, x: &[f64]) -> Result<(f64, f64)> {
        LcmModel::predict(self, task, x)
    }
}

/// The pieces every tuner works on.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub task_space: &'a ParameterSpace,
    pub input_space: &'a ParameterSpace,
    pub objective: &'a dyn Objective,
}

/// Per-task evaluation budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Total evaluations per task, counting prior observations.
    pub per_task: usize,
    /// Pilot (space-filling) evaluations per task.
    pub pilot: usize,
}

impl Budget {
    pub fn new(per_task: usize, pilot: usize) -> Result<Self> {
        if per_task == 0 {
            return Err(Error::config("budget", "the per-task budget must be at least 1"));
        }
        if pilot == 0 || pilot > per_task {
            return Err(Error::config("pilot", format!("pilot size {pilot} must lie in [1, {per_task}]")));
        }
        Ok(Budget { per_task, pilot })
    }

    /// Pilot of `3 × effective dimension`, capped at the budget.
    pub fn with_default_pilot(per_task: usize, space: &ParameterSpace) -> Result<Self> {
        Budget::new(per_task, (3 * space.encoded_dim()).clamp(1, per_task.max(1)))
    }
}

#[derive(Clone, Debug)]
pub struct TunerOptions {
    pub budget: Budget,
    /// Latent functions; `None` uses `min(δ, 3)`.
    pub latents: Option<usize>,
    /// Options for the first fit; `fit.restarts` random starts.
    pub fit: FitOptions,
    /// Random restarts added to the warm start on every later refit.
    pub refit_restarts: usize,
    pub pso: PsoConfig,
    pub repetitions: usize,
    /// Model `ln y` instead of `y`; `None` follows [`Objective::positive`].
    pub log_transform: Option<bool>,
    pub seed: u64,
}

impl TunerOptions {
    pub fn new(budget: Budget, seed: u64) -> Self {
        TunerOptions {
            budget,
            latents: None,
            fit: FitOptions::default(),
            refit_restarts: 2,
            pso: PsoConfig::default(),
            repetitions: 3,
            log_transform: None,
            seed,
        }
    }

    pub(crate) fn log_for(&self, objective: &dyn Objective) -> bool {
        self.log_transform.unwrap_or_else(|| objective.positive())
    }
}

/// Where a trace entry came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Pilot,
    Model,
    /// No feasible acquisition candidate; sampled instead.
    Fallback,
    Random,
    Predicted,
    Centered,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub task_index: usize,
    pub phase: Phase,
    pub config: Configuration,
    #[serde(flatten)]
    pub measurement: Measurement,
    /// Best value on this task after this evaluation.
    #[serde(with = "finite_or_null")]
    pub incumbent: f64,
}

/// An observation carried into a run from an earlier one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: Configuration,
    #[serde(flatten)]
    pub measurement: Measurement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: Configuration,
    pub best_config: Option<Configuration>,
    #[serde(with = "finite_or_null")]
    pub best_value: f64,
    /// New evaluations in this run.
    pub evaluations: usize,
    /// Observations inherited from earlier runs.
    pub prior: usize,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub method: String,
    pub tasks: Vec<TaskResult>,
    pub trace: Vec<TraceEntry>,
    pub total_cost: f64,
}

impl TuningResult {
    pub fn best_values(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.best_value).collect()
    }

    /// Trace entries of one task, in evaluation order.
    pub fn task_trace(&self, task: usize) -> impl Iterator<Item = &TraceEntry> {
        self.trace.iter().filter(move |e| e.task_index == task)
    }
}

// rng stream tags below the master seed
pub(crate) const TAG_PILOT: u64 = 1;
pub(crate) const TAG_FIT: u64 = 2;
pub(crate) const TAG_PSO: u64 = 3;
pub(crate) const TAG_EVAL: u64 = 4;
pub(crate) const TAG_FALLBACK: u64 = 5;
pub(crate) const TAG_RANDOM: u64 = 6;
pub(crate) const TAG_CENTERED: u64 = 7;
pub(crate) const TAG_EXTEND: u64 = 8;
pub(crate) const TAG_REPAIR: u64 = 9;

/// Book-keeping for one task during a run.
pub(crate) struct TaskState {
    pub task: Configuration,
    pub context: Configuration,
    pub point: Vec<f64>,
    pub observed: Vec<(Configuration, Measurement)>,
    pub keys: HashSet<Vec<u64>>,
    pub prior: usize,
    pub evaluations: usize,
    pub cost: f64,
}

impl TaskState {
    pub fn new(problem: &Problem, task: &Configuration, prior: &[Observation]) -> Result<Self> {
        let mut s = TaskState {
            task: task.clone(),
            context: numeric_context(problem.task_space, task),
            point: problem.task_space.encode(task)?,
            observed: Vec::new(),
            keys: HashSet::new(),
            prior: prior.len(),
            evaluations: 0,
            cost: 0.0,
        };
        for o in prior {
            s.keys.insert(config_key(&o.config));
            s.observed.push((o.config.clone(), o.measurement.clone()));
        }
        Ok(s)
    }

    pub fn count(&self) -> usize {
        self.observed.len()
    }

    pub fn best(&self) -> Option<(&Configuration, f64)> {
        self.observed
            .iter()
            .filter(|(_, m)| !m.failed())
            .fold(None, |acc: Option<(&Configuration, f64)>, (c, m)| match acc {
                Some((_, b)) if b <= m.value => acc,
                _ => Some((c, m.value)),
            })
    }

    pub fn best_value(&self) -> f64 {
        self.best().map_or(f64::INFINITY, |(_, v)| v)
    }

    /// Successful observations as encoded inputs and (possibly log) targets.
    pub fn training(&self, space: &ParameterSpace, log: bool) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, m) in self.observed.iter().filter(|(_, m)| !m.failed()) {
            let v = if log { m.value.ln() } else { m.value };
            if !v.is_finite() {
                continue;
            }
            x.push(space.encode(&free_part(space, c))?);
            y.push(v);
        }
        Ok((x, y))
    }

    pub fn record(
        &mut self,
        evaluator: &mut Evaluator,
        task_index: usize,
        config: Configuration,
        phase: Phase,
        trace: &mut Vec<TraceEntry>,
    ) -> Result<()> {
        let rec = evaluator.evaluate(task_index, &self.context, &config);
        if let Some(e) = &rec.measurement.error {
            if rec.measurement.repetitions.is_empty() && is_fatal(e) {
                return Err(Error::Objective {
                    objective: evaluator.objective().id().to_string(),
                    message: e.clone(),
                });
            }
        }
        self.keys.insert(config_key(&config));
        self.evaluations += 1;
        self.cost += rec.measurement.cost();
        self.observed.push((config.clone(), rec.measurement.clone()));
        trace.push(TraceEntry {
            task_index,
            phase,
            config,
            measurement: rec.measurement,
            incumbent: self.best_value(),
        });
        Ok(())
    }

    pub fn result(&self) -> TaskResult {
        let best = self.best();
        TaskResult {
            task: self.task.clone(),
            best_config: best.map(|(c, _)| c.clone()),
            best_value: best.map_or(f64::INFINITY, |(_, v)| v),
            evaluations: self.evaluations,
            prior: self.prior,
            cost: self.cost,
        }
    }
}

/// Adapter failures that make further evaluation pointless.
fn is_fatal(message: &str) -> bool {
    message.contains("spawn failed")
}

/// The free (non-derived) dimensions of a configuration.
pub(crate) fn free_part(space: &ParameterSpace, c: &Configuration) -> Configuration {
    c.iter().filter(|(k, _)| !space.is_derived(k)).collect()
}

pub(crate) fn finish(method: &str, states: &[TaskState], trace: Vec<TraceEntry>) -> TuningResult {
    let tasks: Vec<TaskResult> = states.iter().map(TaskState::result).collect();
    let total_cost = tasks.iter().map(|t| t.cost).sum();
    TuningResult {
        method: method.to_string(),
        tasks,
        trace,
        total_cost,
    }
}

/// Evaluate `budget` distinct valid configurations drawn by constrained LHS.
pub fn random_search(problem: &Problem, task: &Configuration, budget: usize, repetitions: usize, seed: u64) -> Result<TuningResult> {
    if budget == 0 {
        return Err(Error::config("budget", "the budget must be at least 1"));
    }
    let master = RngState::new(seed);
    let mut state = TaskState::new(problem, task, &[])?;
    let configs = sampling::constrained_sample(problem.input_space, &state.context, budget, &master.derive(TAG_RANDOM), ConstrainedOptions::default())?;
    let mut evaluator = Evaluator::new(problem.objective, repetitions, master.derive(TAG_EVAL));
    let mut trace = Vec::with_capacity(budget);
    for c in configs {
        state.record(&mut evaluator, 0, c, Phase::Random, &mut trace)?;
    }
    Ok(finish("random", std::slice::from_ref(&state), trace))
}

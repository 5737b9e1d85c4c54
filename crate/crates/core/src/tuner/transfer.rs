//! Tuning a task that was not in the training set.
//!
//! TLA1 fits one GP per free input coordinate, mapping the encoded task to
//! that coordinate of the task's optimum; predicting costs no evaluations.
//! TLA2 evaluates around the TLA1 prediction, grafts the new task onto a
//! fitted LCM without touching its hyperparameters, and continues with EI.

use serde::{Deserialize, Serialize};

use super::acquisition::{fallback_sample, optimize_acquisition};
use super::*;
use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpModel};
use crate::lcm::{extend_model, ExtendOptions, LcmModel};
use crate::sampling::{centered_sample, constrained_sample, CenteredStd};

/// β independent GPs, one per free input dimension.
#[derive(Clone, Debug)]
pub struct OptimumPredictor {
    pub models: Vec<GpModel<f64>>,
    pub task_space: ParameterSpace,
    pub input_space: ParameterSpace,
    /// Training pairs `(task, optimum)`.
    pub training: Vec<(Configuration, Configuration)>,
    seed: RngState,
}

#[derive(Clone, Debug)]
pub struct Tla1Prediction {
    pub config: Configuration,
    /// Predicted encoded coordinates before decoding, clamped to `[0, 1]`.
    pub point: Vec<f64>,
    /// Predictive variance of each coordinate.
    pub variances: Vec<f64>,
    /// The decoded prediction was infeasible and the nearest sampled
    /// feasible configuration was returned instead.
    pub repaired: bool,
}

/// Fit the optimum predictor on `(tasks[i], optima[i])` pairs.
pub fn tla1_fit(
    task_space: &ParameterSpace,
    input_space: &ParameterSpace,
    tasks: &[Configuration],
    optima: &[Configuration],
    fit: &FitOptions,
) -> Result<OptimumPredictor> {
    if tasks.len() != optima.len() {
        return Err(Error::DimensionMismatch {
            expected: tasks.len(),
            got: optima.len(),
        });
    }
    if tasks.len() < 2 {
        return Err(Error::InsufficientData(format!("TLA1 needs at least 2 tasks, got {}", tasks.len())));
    }
    let x = tasks.iter().map(|t| task_space.encode(t)).collect::<Result<Vec<_>>>()?;
    let opt = optima.iter().map(|o| input_space.encode(&free_part(input_space, o))).collect::<Result<Vec<_>>>()?;
    let models = (0..input_space.encoded_dim())
        .map(|i| {
            let y = opt.iter().map(|o| o[i]).collect();
            fit_gp(x.clone(), y, &FitOptions { seed: fit.seed.derive(i as u64), ..fit.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OptimumPredictor {
        models,
        task_space: task_space.clone(),
        input_space: input_space.clone(),
        training: tasks.iter().cloned().zip(optima.iter().cloned()).collect(),
        seed: fit.seed.derive(TAG_REPAIR),
    })
}

/// Predict the optimum of `task` with no objective evaluations.
pub fn tla1_predict(predictor: &OptimumPredictor, task: &Configuration) -> Result<Tla1Prediction> {
    let t = predictor.task_space.encode(task)?;
    let mut point = Vec::with_capacity(predictor.models.len());
    let mut variances = Vec::with_capacity(predictor.models.len());
    for g in &predictor.models {
        let (m, v) = g.predict(&t)?;
        point.push(m.clamp(0.0, 1.0));
        variances.push(v);
    }
    let space = &predictor.input_space;
    let context = numeric_context(&predictor.task_space, task);
    if let Some(config) = sampling::realize(space, &context, &point) {
        return Ok(Tla1Prediction {
            config,
            point,
            variances,
            repaired: false,
        });
    }
    let mut candidates = None;
    for n in [64, 8, 1] {
        if let Ok(c) = constrained_sample(space, &context, n, &predictor.seed, ConstrainedOptions::default()) {
            candidates = Some(c);
            break;
        }
    }
    let candidates = candidates.ok_or_else(|| Error::SamplingExhausted {
        needed: 1,
        found: 0,
        rate: 0.0,
    })?;
    let dist = |c: &Configuration| -> f64 {
        space
            .encode(&free_part(space, c))
            .map_or(f64::INFINITY, |e| e.iter().zip(&point).map(|(a, b)| (a - b) * (a - b)).sum())
    };
    let config = candidates
        .into_iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .expect("at least one candidate");
    Ok(Tla1Prediction {
        config,
        point,
        variances,
        repaired: true,
    })
}

/// Result of [`tla2`].
#[derive(Clone, Debug)]
pub struct Tla2Outcome {
    pub result: TuningResult,
    /// The base model extended with every successful observation of the
    /// new task; `None` if all of them failed.
    pub model: Option<LcmModel<f64>>,
    pub prediction: Tla1Prediction,
}

impl Tla2Outcome {
    /// `(task, best configuration)` for refreshing TLA1 training data.
    pub fn optimum(&self) -> Option<(Configuration, Configuration)> {
        let t = &self.result.tasks[0];
        t.best_config.clone().map(|c| (t.task.clone(), c))
    }
}

/// Tune `task` using a fitted multitask model and an optimum predictor.
///
/// `opts.budget.pilot` is the number of evaluations spent around the
/// predicted optimum; the first of them is the prediction itself.
pub fn tla2(problem: &Problem, base: &LcmModel<f64>, predictor: &OptimumPredictor, task: &Configuration, opts: &TunerOptions) -> Result<Tla2Outcome> {
    let budget = opts.budget;
    let master = RngState::new(opts.seed);
    let log = opts.log_for(problem.objective);
    let space = problem.input_space;
    let mut st = TaskState::new(problem, task, &[])?;
    if st.point.len() != base.tasks().first().map_or(st.point.len(), Vec::len) {
        return Err(Error::SpaceMismatch("the new task does not match the model's task space".into()));
    }
    let mut evaluator = Evaluator::new(problem.objective, opts.repetitions, master.derive(TAG_EVAL));
    let mut trace = Vec::new();

    let prediction = tla1_predict(predictor, task)?;
    st.record(&mut evaluator, 0, prediction.config.clone(), Phase::Predicted, &mut trace)?;
    if budget.pilot > 1 {
        let around = centered_sample(space, &st.context, &prediction.config, budget.pilot, &CenteredStd::Unit, &master.derive(TAG_CENTERED))?;
        let fresh: Vec<Configuration> = around
            .into_iter()
            .filter(|c| !st.keys.contains(&config_key(c)))
            .take(budget.pilot - 1)
            .collect();
        for c in fresh {
            st.record(&mut evaluator, 0, c, Phase::Centered, &mut trace)?;
        }
    }

    let new_index = base.task_count();
    let mut warm: Option<(Vec<f64>, f64)> = None;
    let mut iter = 0u64;
    let mut model;
    loop {
        model = extend(base, &st, space, log, opts, &master, iter, &mut warm)?;
        if st.count() >= budget.per_task {
            break;
        }
        let (x, y) = st.training(space, log)?;
        let best_idx = (0..y.len()).min_by(|&a, &b| y[a].total_cmp(&y[b]));
        let (config, phase) = match (&model, best_idx) {
            (Some(m), Some(b)) => {
                let acq = optimize_acquisition(
                    m,
                    new_index,
                    space,
                    &st.context,
                    y[b],
                    Some(&x[b]),
                    &st.keys,
                    &opts.pso,
                    &master.derive(TAG_PSO).derive(iter),
                )?;
                let phase = if acq.fallback { Phase::Fallback } else { Phase::Model };
                (acq.config, phase)
            }
            _ => (
                fallback_sample(space, &st.context, &st.keys, &master.derive(TAG_FALLBACK).derive(iter))?,
                Phase::Fallback,
            ),
        };
        st.record(&mut evaluator, 0, config, phase, &mut trace)?;
        iter += 1;
    }
    Ok(Tla2Outcome {
        result: finish("tla2", std::slice::from_ref(&st), trace),
        model,
        prediction,
    })
}

/// Re-extend the base model with every successful observation so far,
/// warm-started at the previous extension's weights and noise.
#[allow(clippy::too_many_arguments)]
fn extend(
    base: &LcmModel<f64>,
    st: &TaskState,
    space: &ParameterSpace,
    log: bool,
    opts: &TunerOptions,
    master: &RngState,
    iter: u64,
    warm: &mut Option<(Vec<f64>, f64)>,
) -> Result<Option<LcmModel<f64>>> {
    let (x, y) = st.training(space, log)?;
    if x.is_empty() {
        return Ok(None);
    }
    let eopts = ExtendOptions {
        restarts: if warm.is_some() { 1 } else { ExtendOptions::default().restarts },
        standardize: opts.fit.standardize,
        seed: master.derive(TAG_EXTEND).derive(iter),
        ..ExtendOptions::default()
    };
    let m = extend_model(base, st.point.clone(), x, y, &eopts, warm.as_ref().map(|(w, d)| (&w[..], *d)))?;
    let t = m.task_count() - 1;
    *warm = Some((m.hyper().w.iter().map(|wq| wq[t]).collect(), m.hyper().d[t]));
    Ok(Some(m))
}

/// Heuristic thresholds for [`restart_advice`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartPolicy {
    /// Restart once more than `task_ratio × δ_initial` tasks were grafted on.
    pub task_ratio: f64,
    /// Restart when model fitting costs less than this fraction of one
    /// objective evaluation.
    pub cost_ratio: f64,
}

impl Default for RestartPolicy {
    fn default() -> Self {
        RestartPolicy {
            task_ratio: 0.5,
            cost_ratio: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartAdvice {
    ContinueTla2,
    RestartMla,
}

/// Whether to keep extending the model or refit MLA on all tasks.
/// `cost_ratio` is the estimated model-fit cost over the mean evaluation
/// cost. Nothing is advised until a task has been added.
pub fn restart_advice(policy: &RestartPolicy, delta_initial: usize, tasks_added: usize, cost_ratio: f64) -> RestartAdvice {
    if tasks_added == 0 {
        return RestartAdvice::ContinueTla2;
    }
    if tasks_added as f64 > policy.task_ratio * delta_initial as f64 || cost_ratio < policy.cost_ratio {
        RestartAdvice::RestartMla
    } else {
        RestartAdvice::ContinueTla2
    }
}

//! The pilot-then-EI loop shared by MLA and single-task EGO.
//!
//! Both tuners run through [`run`]; they differ only in the model that is
//! refitted every iteration. With one task and one latent function the LCM
//! fit delegates to the plain GP fit, so the two produce identical traces
//! for identical seeds.

use super::acquisition::{fallback_sample, optimize_acquisition};
use super::*;
use crate::error::{Error, Result};
use crate::gp::{fit_gp_warm, GpModel, KernelParams};
use crate::lcm::{fit_lcm, LcmHyper, LcmModel};
use crate::sampling::sample_inputs_heterotropic;

/// The model fitted to all data at the end of a run.
#[derive(Clone, Debug)]
pub enum FinalModel {
    Lcm(LcmModel<f64>),
    Gp(GpModel<f64>),
    /// Too few successful evaluations to fit anything.
    None,
}

impl FinalModel {
    pub fn lcm(&self) -> Option<&LcmModel<f64>> {
        match self {
            FinalModel::Lcm(m) => Some(m),
            _ => None,
        }
    }

    pub fn gp(&self) -> Option<&GpModel<f64>> {
        match self {
            FinalModel::Gp(m) => Some(m),
            _ => None,
        }
    }

    fn surrogate(&self) -> Option<&dyn Surrogate> {
        match self {
            FinalModel::Lcm(m) => Some(m),
            FinalModel::Gp(m) => Some(m),
            FinalModel::None => None,
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Lcm(usize),
    Gp,
}

enum Warm {
    Lcm(LcmHyper<f64>),
    Gp(KernelParams<f64>, f64),
}

/// Multitask tuning of `tasks` jointly under one LCM.
///
/// `prior[i]`, when present, holds earlier observations of task `i`; they
/// count toward both the pilot and the per-task budget.
pub fn mla(problem: &Problem, tasks: &[Configuration], prior: &[Vec<Observation>], opts: &TunerOptions) -> Result<(TuningResult, FinalModel)> {
    if tasks.is_empty() {
        return Err(Error::config("tasks", "at least one task is required"));
    }
    let q = opts.latents.unwrap_or(tasks.len().min(3));
    if q == 0 {
        return Err(Error::config("latents", "Q must be at least 1"));
    }
    run(problem, tasks, prior, opts, Kind::Lcm(q), "mla")
}

/// Single-task EGO with a GP surrogate.
pub fn ego_single(problem: &Problem, task: &Configuration, prior: &[Observation], opts: &TunerOptions) -> Result<(TuningResult, FinalModel)> {
    run(problem, std::slice::from_ref(task), &[prior.to_vec()], opts, Kind::Gp, "ego")
}

fn run(problem: &Problem, tasks: &[Configuration], prior: &[Vec<Observation>], opts: &TunerOptions, kind: Kind, method: &str) -> Result<(TuningResult, FinalModel)> {
    let budget = opts.budget;
    let master = RngState::new(opts.seed);
    let log = opts.log_for(problem.objective);
    let space = problem.input_space;
    let mut states = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| TaskState::new(problem, t, prior.get(i).map_or(&[][..], |p| &p[..])))
        .collect::<Result<Vec<_>>>()?;
    let mut evaluator = Evaluator::new(problem.objective, opts.repetitions, master.derive(TAG_EVAL));
    let mut trace = Vec::new();

    let contexts: Vec<Configuration> = states.iter().map(|s| s.context.clone()).collect();
    let designs = sample_inputs_heterotropic(space, &contexts, budget.pilot, &master.derive(TAG_PILOT))?;
    for (i, (st, design)) in states.iter_mut().zip(designs).enumerate() {
        let need = budget.pilot.min(budget.per_task).saturating_sub(st.count());
        let fresh: Vec<Configuration> = design.into_iter().filter(|c| !st.keys.contains(&config_key(c))).take(need).collect();
        let short = need - fresh.len();
        for c in fresh {
            st.record(&mut evaluator, i, c, Phase::Pilot, &mut trace)?;
        }
        for k in 0..short {
            let c = fallback_sample(space, &st.context, &st.keys, &master.derive(TAG_FALLBACK).derive(u64::MAX - k as u64).derive(i as u64))?;
            st.record(&mut evaluator, i, c, Phase::Pilot, &mut trace)?;
        }
    }

    let mut warm: Option<Warm> = None;
    let mut iter = 0u64;
    let mut model = FinalModel::None;
    loop {
        let active: Vec<usize> = (0..states.len()).filter(|&i| states[i].count() < budget.per_task).collect();
        if active.is_empty() {
            break;
        }
        model = fit(&states, space, log, kind, opts, &master, iter, &mut warm)?;
        for i in active {
            let (x, y) = states[i].training(space, log)?;
            let st = &mut states[i];
            let best_idx = (0..y.len()).min_by(|&a, &b| y[a].total_cmp(&y[b]));
            let (config, phase) = match (model.surrogate(), best_idx) {
                (Some(m), Some(b)) => {
                    let acq = optimize_acquisition(
                        m,
                        i,
                        space,
                        &st.context,
                        y[b],
                        Some(&x[b]),
                        &st.keys,
                        &opts.pso,
                        &master.derive(TAG_PSO).derive(iter).derive(i as u64),
                    )?;
                    let phase = if acq.fallback { Phase::Fallback } else { Phase::Model };
                    (acq.config, phase)
                }
                _ => (
                    fallback_sample(space, &st.context, &st.keys, &master.derive(TAG_FALLBACK).derive(iter).derive(i as u64))?,
                    Phase::Fallback,
                ),
            };
            st.record(&mut evaluator, i, config, phase, &mut trace)?;
        }
        iter += 1;
    }
    // one last fit so the returned model has seen every observation
    if trace.iter().any(|e| e.phase != Phase::Pilot) || matches!(model, FinalModel::None) {
        model = fit(&states, space, log, kind, opts, &master, iter, &mut warm)?;
    }
    Ok((finish(method, &states, trace), model))
}

#[allow(clippy::too_many_arguments)]
fn fit(
    states: &[TaskState],
    space: &ParameterSpace,
    log: bool,
    kind: Kind,
    opts: &TunerOptions,
    master: &RngState,
    iter: u64,
    warm: &mut Option<Warm>,
) -> Result<FinalModel> {
    let fopts = FitOptions {
        restarts: if warm.is_some() { opts.refit_restarts } else { opts.fit.restarts },
        seed: master.derive(TAG_FIT).derive(iter),
        ..opts.fit.clone()
    };
    let data = states.iter().map(|s| s.training(space, log)).collect::<Result<Vec<_>>>()?;
    let fitted = match kind {
        Kind::Gp => {
            let (x, y) = data.into_iter().next().expect("one task");
            let w = match warm {
                Some(Warm::Gp(k, n)) => Some((&*k, *n)),
                _ => None,
            };
            fit_gp_warm(x, y, &fopts, w).map(FinalModel::Gp)
        }
        Kind::Lcm(q) => {
            let (x, y): (Vec<_>, Vec<_>) = data.into_iter().unzip();
            let points = states.iter().map(|s| s.point.clone()).collect();
            let w = match warm {
                Some(Warm::Lcm(h)) => Some(&*h),
                _ => None,
            };
            fit_lcm(points, x, y, q, &fopts, w).map(FinalModel::Lcm)
        }
    };
    match fitted {
        Ok(m) => {
            *warm = match &m {
                FinalModel::Gp(g) => Some(Warm::Gp(g.kernel().clone(), g.noise())),
                FinalModel::Lcm(l) => Some(Warm::Lcm(l.hyper().clone())),
                FinalModel::None => None,
            };
            Ok(m)
        }
        Err(Error::InsufficientData(_)) => Ok(FinalModel::None),
        Err(e) => Err(e),
    }
}

//! Semi-exhaustive grid search, used as a near-optimal reference.

use crate::error::{Error, Result};
use crate::objectives::Evaluator;
use crate::rng::RngState;
use crate::spaces::{numeric_context, Configuration, DimKind, Dimension, ParameterSpace, Value};
use crate::tuner::{Phase, Problem, TraceEntry, TaskResult, TuningResult};

/// Grid values of one free dimension: `resolution` evenly spaced reals
/// (the midpoint when `resolution = 1`), the distinct rounded integers of
/// such a ladder, or every category.
pub fn grid_values(dim: &Dimension, resolution: usize) -> Vec<Value> {
    let ladder = |low: f64, high: f64| -> Vec<f64> {
        if resolution == 1 {
            vec![0.5 * (low + high)]
        } else {
            (0..resolution).map(|k| low + (high - low) * k as f64 / (resolution - 1) as f64).collect()
        }
    };
    match &dim.kind {
        DimKind::Real { low, high } => ladder(*low, *high).into_iter().map(Value::Real).collect(),
        DimKind::Integer { low, high } => {
            let mut v: Vec<i64> = ladder(*low as f64, *high as f64).into_iter().map(|x| x.round() as i64).collect();
            v.dedup();
            v.into_iter().map(Value::Int).collect()
        }
        DimKind::Categorical { categories } => (0..categories.len()).map(Value::Cat).collect(),
    }
}

/// Number of grid points before constraint filtering.
pub fn grid_size(space: &ParameterSpace, resolution: usize) -> u128 {
    space.free_dims().map(|d| grid_values(d, resolution).len() as u128).product()
}

/// Evaluate every valid grid configuration for `task`.
pub fn grid_search(problem: &Problem, task: &Configuration, resolution: usize, cap: u64, repetitions: usize, seed: u64) -> Result<TuningResult> {
    if resolution == 0 {
        return Err(Error::config("resolution", "grid resolution must be at least 1"));
    }
    let space = problem.input_space;
    let count = grid_size(space, resolution);
    if count > cap as u128 {
        return Err(Error::GridTooLarge { count, cap: cap as u128 });
    }
    let axes: Vec<(String, Vec<Value>)> = space.free_dims().map(|d| (d.name.clone(), grid_values(d, resolution))).collect();
    let context = numeric_context(problem.task_space, task);
    let mut evaluator = Evaluator::new(problem.objective, repetitions, RngState::new(seed).derive(4));
    let mut trace = Vec::new();
    let mut best: Option<(Configuration, f64)> = None;
    let mut cost = 0.0;
    let mut idx = vec![0usize; axes.len()];
    'outer: loop {
        let partial: Configuration = axes.iter().zip(&idx).map(|((n, v), &i)| (n.as_str(), v[i])).collect();
        if let Ok(c) = space.resolve_derived(&partial, &context) {
            if space.is_valid_in(&c, &context) {
                let rec = evaluator.evaluate(0, &context, &c);
                cost += rec.measurement.cost();
                let v = rec.measurement.value;
                if !rec.measurement.failed() && best.as_ref().is_none_or(|(_, b)| v < *b) {
                    best = Some((c.clone(), v));
                }
                trace.push(TraceEntry {
                    task_index: 0,
                    phase: Phase::Grid,
                    config: c,
                    measurement: rec.measurement,
                    incumbent: best.as_ref().map_or(f64::INFINITY, |(_, b)| *b),
                });
            }
        }
        // odometer over the axes, last axis fastest
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].1.len() {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    Ok(TuningResult {
        method: "grid".into(),
        tasks: vec![TaskResult {
            task: task.clone(),
            best_config: best.as_ref().map(|(c, _)| c.clone()),
            best_value: best.map_or(f64::INFINITY, |(_, v)| v),
            evaluations: trace.len(),
            prior: 0,
            cost,
        }],
        trace,
        total_cost: cost,
    })
}

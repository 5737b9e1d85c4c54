//! Space-filling and centered sampling.
//!
//! Everything takes an explicit [`RngState`]; identical states and arguments
//! give identical samples. Points live in the encoded unit cube of a space's
//! free dimensions and are decoded, derived-resolved and constraint-checked
//! before being returned.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::rng::{self, RngState};
use crate::spaces::{Configuration, ParameterSpace, Value};

/// Latin hypercube of `n` points in `[0, 1)^d`, jittered within bins.
pub fn lhs(n: usize, d: usize, state: &RngState) -> Vec<Vec<f64>> {
    assert!(n >= 1 && d >= 1, "lhs needs n >= 1 and d >= 1");
    let mut rng = state.rng();
    let mut out = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        rng::shuffle(&mut rng, &mut perm);
        for (i, &bin) in perm.iter().enumerate() {
            out[i][j] = in_bin(bin, n, rng::uniform(&mut rng));
        }
    }
    out
}

/// `(k + u) / n`, nudged so that `floor(v * n) == k` holds in floating point.
fn in_bin(k: usize, n: usize, u: f64) -> f64 {
    let nf = n as f64;
    let mut v = (k as f64 + u) / nf;
    while (v * nf).floor() as usize > k {
        v = f64::from_bits(v.to_bits() - 1);
    }
    while ((v * nf).floor() as usize) < k {
        v = f64::from_bits(v.to_bits() + 1);
    }
    v
}

/// Decode a unit point, resolve derived dimensions and check constraints.
pub fn realize(space: &ParameterSpace, context: &Configuration, point: &[f64]) -> Option<Configuration> {
    let config = space.decode_resolved(point, context).ok()?;
    space.is_valid_in(&config, context).then_some(config)
}

/// Hashable identity of a configuration.
pub(crate) fn config_key(config: &Configuration) -> Vec<u64> {
    config
        .iter()
        .map(|(_, v)| match v {
            Value::Real(x) => x.to_bits(),
            Value::Int(i) => i as u64,
            Value::Cat(c) => c as u64,
        })
        .collect()
}

/// `δ` distinct valid tasks from an LHS over the task space.
pub fn sample_tasks(task_space: &ParameterSpace, count: usize, state: &RngState) -> Result<Vec<Configuration>> {
    if count == 0 {
        return Err(Error::config("tasks", "task count must be at least 1"));
    }
    let empty = Configuration::new();
    let d = task_space.encoded_dim();
    let mut seen = HashSet::new();
    let mut tasks = Vec::with_capacity(count);
    let mut drawn = 0usize;
    for attempt in 0..=100u64 {
        for p in lhs(count, d, &state.derive(attempt)) {
            drawn += 1;
            if let Some(t) = realize(task_space, &empty, &p) {
                if seen.insert(config_key(&t)) {
                    tasks.push(t);
                    if tasks.len() == count {
                        return Ok(tasks);
                    }
                }
            }
        }
    }
    Err(Error::SamplingExhausted {
        needed: count,
        found: tasks.len(),
        rate: tasks.len() as f64 / drawn as f64,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ConstrainedOptions {
    /// Size of the follow-up LHS batches; `None` uses `max(n, 64)`.
    pub batch_size: Option<usize>,
    pub max_batches: usize,
}

impl Default for ConstrainedOptions {
    fn default() -> Self {
        ConstrainedOptions {
            batch_size: None,
            max_batches: 100,
        }
    }
}

/// `n` distinct valid configurations drawn from the union of unconstrained
/// LHS batches. When the first batch (of size `n`) is entirely valid the
/// result is that plain LHS.
pub fn constrained_sample(
    space: &ParameterSpace,
    context: &Configuration,
    n: usize,
    state: &RngState,
    opts: ConstrainedOptions,
) -> Result<Vec<Configuration>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let d = space.encoded_dim();
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    let mut drawn = 0usize;
    for b in 0..opts.max_batches.max(1) {
        let size = if b == 0 { n } else { opts.batch_size.unwrap_or(n.max(64)) };
        for p in lhs(size, d, &state.derive(b as u64)) {
            drawn += 1;
            if let Some(c) = realize(space, context, &p) {
                if seen.insert(config_key(&c)) {
                    pool.push(c);
                }
            }
        }
        if pool.len() >= n {
            if pool.len() > n {
                let mut rng = state.derive(u64::MAX).rng();
                let mut idx: Vec<usize> = (0..pool.len()).collect();
                rng::shuffle(&mut rng, &mut idx);
                idx.truncate(n);
                idx.sort_unstable();
                pool = idx.into_iter().map(|i| pool[i].clone()).collect();
            }
            return Ok(pool);
        }
    }
    Err(Error::SamplingExhausted {
        needed: n,
        found: pool.len(),
        rate: pool.len() as f64 / drawn.max(1) as f64,
    })
}

/// Per-task independent input designs. Task `i` uses stream `i` of `state`.
pub fn sample_inputs_heterotropic(
    space: &ParameterSpace,
    contexts: &[Configuration],
    per_task: usize,
    state: &RngState,
) -> Result<Vec<Vec<Configuration>>> {
    if per_task == 0 {
        return Err(Error::config("pilot", "samples per task must be at least 1"));
    }
    contexts
        .iter()
        .enumerate()
        .map(|(i, ctx)| constrained_sample(space, ctx, per_task, &state.derive(i as u64), ConstrainedOptions::default()))
        .collect()
}

/// Standard deviation used by [`centered_sample`].
#[derive(Clone, Debug, Default)]
pub enum CenteredStd {
    /// 1.0 on every encoded axis (the length of the unit cube's side).
    #[default]
    Unit,
    /// One value per free dimension.
    PerDimension(Vec<f64>),
}

/// `n` distinct valid configurations from an isotropic normal around
/// `center` in encoded space; draws outside the cube or violating
/// constraints are discarded.
pub fn centered_sample(
    space: &ParameterSpace,
    context: &Configuration,
    center: &Configuration,
    n: usize,
    std: &CenteredStd,
    state: &RngState,
) -> Result<Vec<Configuration>> {
    let free: Configuration = center.iter().filter(|(k, _)| !space.is_derived(k)).collect();
    let mu = space.encode(&free)?;
    let sd: Vec<f64> = match std {
        CenteredStd::Unit => vec![1.0; mu.len()],
        CenteredStd::PerDimension(v) if v.len() == mu.len() => v.clone(),
        CenteredStd::PerDimension(v) => {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: v.len(),
            })
        }
    };
    let cap = 100_000 + 2_000 * n;
    let mut rng = state.rng();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut drawn = 0;
    while out.len() < n {
        if drawn >= cap {
            return Err(Error::SamplingExhausted {
                needed: n,
                found: out.len(),
                rate: out.len() as f64 / drawn as f64,
            });
        }
        drawn += 1;
        let p: Vec<f64> = mu.iter().zip(&sd).map(|(&m, &s)| m + s * rng::standard_normal(&mut rng)).collect();
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            continue;
        }
        if let Some(c) = realize(space, context, &p) {
            if seen.insert(config_key(&c)) {
                out.push(c);
            }
        }
    }
    Ok(out)
}

//! Expected improvement and its maximization by particle swarm.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::Surrogate;
use crate::error::Result;
use crate::rng::{self, RngState};
use crate::sampling::{self, config_key, ConstrainedOptions};
use crate::spaces::{Configuration, ParameterSpace};

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Closed-form EI for minimization: with `z = (best - μ)/σ`,
/// `EI = (best - μ) Φ(z) + σ φ(z)`; `max(best - μ, 0)` when `σ = 0`.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let sd = variance.max(0.0).sqrt();
    let gain = best - mean;
    if sd <= 0.0 || !sd.is_finite() {
        return gain.max(0.0);
    }
    let z = gain / sd;
    (gain * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            particles: 30,
            iterations: 50,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
        }
    }
}

/// Outcome of [`optimize_acquisition`].
#[derive(Clone, Debug)]
pub struct Acquisition {
    pub config: Configuration,
    pub ei: f64,
    /// Largest EI among all feasible particle evaluations.
    pub max_particle_ei: f64,
    /// No feasible particle was found and the candidate was sampled instead.
    pub fallback: bool,
    pub particle_evaluations: usize,
}

/// Maximize EI for `task` over the feasible part of `space`.
///
/// Particles move in the encoded cube; each position is decoded, resolved
/// and checked, and infeasible or `exclude`d positions are skipped. EI is
/// evaluated at the re-encoded decoded point, i.e. at what would actually
/// be run. `incumbent` (encoded) seeds one particle.
#[allow(clippy::too_many_arguments)]
pub fn optimize_acquisition(
    model: &dyn Surrogate,
    task: usize,
    space: &ParameterSpace,
    context: &Configuration,
    best: f64,
    incumbent: Option<&[f64]>,
    exclude: &HashSet<Vec<u64>>,
    pso: &PsoConfig,
    seed: &RngState,
) -> Result<Acquisition> {
    let d = space.encoded_dim();
    let mut rng = seed.rng();
    let mut cache: HashMap<Vec<u64>, Option<f64>> = HashMap::new();
    let mut best_found: Option<(Configuration, f64)> = None;
    let mut max_particle_ei = f64::NEG_INFINITY;
    let mut evaluations = 0;

    let mut score = |p: &[f64], best_found: &mut Option<(Configuration, f64)>| -> Result<Option<f64>> {
        let Some(cfg) = sampling::realize(space, context, p) else {
            return Ok(None);
        };
        let key = config_key(&cfg);
        if exclude.contains(&key) {
            return Ok(None);
        }
        if let Some(v) = cache.get(&key) {
            return Ok(*v);
        }
        let enc = space.encode(&cfg)?;
        let (mu, var) = model.predict(task, &enc)?;
        let ei = expected_improvement(mu, var, best);
        let v = ei.is_finite().then_some(ei);
        cache.insert(key, v);
        evaluations += 1;
        if let Some(ei) = v {
            max_particle_ei = max_particle_ei.max(ei);
            if best_found.as_ref().is_none_or(|(_, b)| ei > *b) {
                *best_found = Some((cfg, ei));
            }
        }
        Ok(v)
    };

    let n = pso.particles.max(1);
    let mut pos: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng::uniform(&mut rng)).collect()).collect();
    if let Some(inc) = incumbent {
        pos[0] = inc.to_vec();
    }
    let mut vel: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| 0.2 * (rng::uniform(&mut rng) - 0.5)).collect()).collect();
    let mut pbest: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    for p in &pos {
        let s = score(p, &mut best_found)?.unwrap_or(f64::NEG_INFINITY);
        pbest.push((p.clone(), s));
    }
    let mut g = pbest.iter().cloned().fold((pos[0].clone(), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    for _ in 0..pso.iterations {
        for i in 0..n {
            for k in 0..d {
                let (r1, r2) = (rng::uniform(&mut rng), rng::uniform(&mut rng));
                vel[i][k] = pso.inertia * vel[i][k] + pso.cognitive * r1 * (pbest[i].0[k] - pos[i][k]) + pso.social * r2 * (g.0[k] - pos[i][k]);
                pos[i][k] += vel[i][k];
                if !(0.0..=1.0).contains(&pos[i][k]) {
                    pos[i][k] = pos[i][k].clamp(0.0, 1.0);
                    vel[i][k] = 0.0;
                }
            }
            if let Some(s) = score(&pos[i], &mut best_found)? {
                if s > pbest[i].1 {
                    pbest[i] = (pos[i].clone(), s);
                    if s > g.1 {
                        g = (pos[i].clone(), s);
                    }
                }
            }
        }
    }

    if let Some((config, ei)) = best_found {
        return Ok(Acquisition {
            config,
            ei,
            max_particle_ei,
            fallback: false,
            particle_evaluations: evaluations,
        });
    }
    let config = fallback_sample(space, context, exclude, seed)?;
    Ok(Acquisition {
        config,
        ei: 0.0,
        max_particle_ei,
        fallback: true,
        particle_evaluations: evaluations,
    })
}

/// A valid configuration not in `exclude` if one can be found quickly.
pub(crate) fn fallback_sample(space: &ParameterSpace, context: &Configuration, exclude: &HashSet<Vec<u64>>, seed: &RngState) -> Result<Configuration> {
    let mut last = None;
    for attempt in 0..10u64 {
        let mut batch = sampling::constrained_sample(space, context, 16, &seed.derive(0xFA11 + attempt), ConstrainedOptions::default())?;
        if let Some(i) = batch.iter().position(|c| !exclude.contains(&config_key(c))) {
            return Ok(batch.swap_remove(i));
        }
        last = batch.pop();
    }
    Ok(last.expect("constrained_sample returned a non-empty batch"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_points() {
        assert!((expected_improvement(0.0, 1.0, 0.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0), 0.5);
        assert!(expected_improvement(0.3, 0.2, 0.1) >= 0.0);
    }
}

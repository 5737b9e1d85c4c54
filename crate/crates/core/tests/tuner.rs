use std::collections::HashSet;

use lcmtune::gp::FitOptions;
use lcmtune::objectives::{synthetic_family, MachineCoefficients, Objective, QrSurrogate, Synthetic, SyntheticKind};
use lcmtune::rng::{self, RngState};
use lcmtune::sampling::sample_tasks;
use lcmtune::spaces::{Configuration, ParameterSpace, PdgeqrfSpec, Value};
use lcmtune::tuner::{
    ego_single, expected_improvement, mla, optimize_acquisition, random_search, restart_advice, tla1_fit, tla1_predict, tla2, Budget, Phase,
    Problem, PsoConfig, RestartAdvice, RestartPolicy, Surrogate, TunerOptions, TuningResult,
};
use lcmtune::Result;

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn ei_at_zero_z_is_the_normal_density() {
    assert!((expected_improvement(1.5, 1.0, 1.5) - normal_pdf(0.0)).abs() < 1e-12);
    assert!((normal_pdf(0.0) - 0.398942).abs() < 1e-6);
    assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
    assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
}

#[test]
fn ei_matches_monte_carlo() {
    let best = 0.0;
    let mut rng = RngState::new(99).rng();
    let draws = 1_000_000;
    for mu in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        for sigma in [0.1, 0.3, 0.6, 1.0, 1.5] {
            let mc = (0..draws)
                .map(|_| (best - (mu + sigma * rng::standard_normal(&mut rng))).max(0.0))
                .sum::<f64>()
                / draws as f64;
            let ei = expected_improvement(mu, sigma * sigma, best);
            assert!((ei - mc).abs() < 1e-3, "mu={mu} sigma={sigma}: {ei} vs {mc}");
        }
    }
}

fn line() -> ParameterSpace {
    ParameterSpace::builder("line").real("x", 0.0, 1.0).unwrap().build().unwrap()
}

/// Mean `(x - 0.3)²`, constant variance: EI peaks at 0.3.
struct Bowl;

impl Surrogate for Bowl {
    fn predict(&self, _task: usize, x: &[f64]) -> Result<(f64, f64)> {
        Ok(((x[0] - 0.3).powi(2), 0.01))
    }
}

#[test]
fn pso_finds_a_single_peak() {
    let best = 0.05;
    let grid_argmax = (0..=10_000)
        .map(|i| i as f64 / 10_000.0)
        .max_by(|a, b| {
            let ea = expected_improvement((a - 0.3).powi(2), 0.01, best);
            let eb = expected_improvement((b - 0.3).powi(2), 0.01, best);
            ea.total_cmp(&eb)
        })
        .unwrap();
    let space = line();
    let seed = RngState::new(4);
    let a = optimize_acquisition(&Bowl, 0, &space, &Configuration::new(), best, None, &HashSet::new(), &PsoConfig::default(), &seed).unwrap();
    let Some(Value::Real(x)) = a.config.get("x") else { panic!() };
    assert!((x - grid_argmax).abs() < 0.05, "{x} vs {grid_argmax}");
    assert!(!a.fallback);
    assert!(a.ei >= a.max_particle_ei);
    let again = optimize_acquisition(&Bowl, 0, &space, &Configuration::new(), best, None, &HashSet::new(), &PsoConfig::default(), &seed).unwrap();
    assert_eq!(a.config, again.config);
}

#[test]
fn infeasible_swarm_falls_back_to_sampling() {
    let space = ParameterSpace::builder("corner").real("x", 0.0, 1.0).unwrap().constraint("x <= 0.02", "corner").build().unwrap();
    let pso = PsoConfig { particles: 1, iterations: 0, ..PsoConfig::default() };
    let mut fallbacks = 0;
    for s in 0..20 {
        let a = optimize_acquisition(&Bowl, 0, &space, &Configuration::new(), 0.0, None, &HashSet::new(), &pso, &RngState::new(s)).unwrap();
        assert!(space.check(&a.config).valid);
        fallbacks += usize::from(a.fallback);
    }
    assert!(fallbacks >= 15, "{fallbacks}");
}

fn quadratic(task_dim: usize, input_dim: usize) -> Synthetic {
    synthetic_family(SyntheticKind::ShiftedQuadratic, task_dim, input_dim).unwrap()
}

fn task1(t: f64) -> Configuration {
    Configuration::new().with("t0", Value::Real(t))
}

fn options(per_task: usize, pilot: usize, seed: u64) -> TunerOptions {
    let mut o = TunerOptions::new(Budget::new(per_task, pilot).unwrap(), seed);
    o.fit.restarts = 3;
    o.repetitions = 1;
    o
}

fn check_trace(r: &TuningResult, problem: &Problem, tasks: &[Configuration], per_task: usize) {
    for (i, t) in tasks.iter().enumerate() {
        let entries: Vec<_> = r.task_trace(i).collect();
        assert_eq!(entries.len(), per_task);
        let ctx = lcmtune::spaces::numeric_context(problem.task_space, t);
        let mut inc = f64::INFINITY;
        for e in &entries {
            assert!(e.incumbent <= inc);
            inc = e.incumbent;
            assert!(problem.input_space.check_in(&e.config, &ctx).valid, "{}", e.config);
        }
        let min = entries.iter().map(|e| e.measurement.value).fold(f64::INFINITY, f64::min);
        assert_eq!(r.tasks[i].best_value, min);
        assert_eq!(inc, min);
    }
}

#[test]
fn single_task_mla_reproduces_ego() {
    let obj = quadratic(1, 2);
    let (ts, is) = (obj.task_space(), obj.input_space());
    let problem = Problem { task_space: &ts, input_space: &is, objective: &obj };
    let mut opts = options(10, 4, 7);
    opts.latents = Some(1);
    let (a, _) = mla(&problem, &[task1(0.4)], &[vec![]], &opts).unwrap();
    let (b, _) = ego_single(&problem, &task1(0.4), &[], &opts).unwrap();
    assert_eq!(a.trace, b.trace);
    assert!(a.trace.iter().any(|e| e.phase == Phase::Model));
}

#[test]
fn mla_consumes_its_budget_and_is_deterministic() {
    let spec = PdgeqrfSpec::single_node();
    let (ts, is) = (spec.task_space().unwrap(), spec.input_space().unwrap());
    let obj = QrSurrogate { coeffs: MachineCoefficients::default() };
    let problem = Problem { task_space: &ts, input_space: &is, objective: &obj };
    let tasks = sample_tasks(&ts, 2, &RngState::new(1)).unwrap();
    let opts = options(9, 6, 11);
    let (a, model) = mla(&problem, &tasks, &[vec![], vec![]], &opts).unwrap();
    check_trace(&a, &problem, &tasks, 9);
    assert_eq!(model.lcm().unwrap().task_count(), 2);
    let (b, _) = mla(&problem, &tasks, &[vec![], vec![]], &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn budget_equal_to_pilot_is_pure_sampling() {
    let obj = quadratic(1, 2);
    let (ts, is) = (obj.task_space(), obj.input_space());
    let problem = Problem { task_space: &ts, input_space: &is, objective: &obj };
    let tasks = [task1(0.2), task1(0.7)];
    let (r, _) = mla(&problem, &tasks, &[vec![], vec![]], &options(5, 5, 3)).unwrap();
    assert!(r.trace.iter().all(|e| e.phase == Phase::Pilot));
    check_trace(&r, &problem, &tasks, 5);
}

#[test]
fn ego_converges_on_a_one_dimensional_quadratic() {
    let obj = quadratic(1, 1);
    let (ts, is) = (obj.task_space(), obj.input_space());
    let problem = Problem { task_space: &ts, input_space: &is, objective: &obj };
    let (r, _) = ego_single(&problem, &task1(0.5), &[], &options(15, 3, 2)).unwrap();
    // range of f over [0, 1] is 0.25
    assert!(r.tasks[0].best_value < 1e-2 * 0.25, "{}", r.tasks[0].best_value);
    check_trace(&r, &problem, &[task1(0.5)], 15);
}

#[test]
fn random_search_budget_and_validity() {
    let spec = PdgeqrfSpec::single_node();
    let (ts, is) = (spec.task_space().unwrap(), spec.input_space().unwrap());
    let obj = QrSurrogate { coeffs: MachineCoefficients::default() };
    let problem = Problem { task_space: &ts, input_space: &is, objective: &obj };
    let t = &sample_tasks(&ts, 1, &RngState::new(5)).unwrap()[0];
    let one = random_search(&problem, t, 1, 1, 0).unwrap();
    assert_eq!(one.trace.len(), 1);
    let many = random_search(&problem, t, 25, 1, 0).unwrap();
    check_trace(&many, &problem, std::slice::from_ref(t), 25);
}

fn optimum_config(obj: &Synthetic, t: &[f64]) -> Configuration {
    obj.optimum(t).0.iter().enumerate().map(|(i, &v)| (format!("x{i}"), v)).fold(Configuration::new(), |c, (k, v)| c.with(&k, Value::Real(v)))
}

fn tvec(c: &Configuration) -> Vec<f64> {
    c.iter()
        .map(|(_, v)| match v {
            Value::Real(x) => x,
            _ => unreachable!(),
        })
        .collect()
}

#[test]
fn tla1_constant_optima_and_too_few_tasks() {
    let obj = quadratic(1, 2);
    let (ts, is) = (obj.task_space(), obj.input_space());
    let tasks: Vec<Configuration> = [0.1, 0.4, 0.6, 0.9].iter().map(|&t| task1(t)).collect();
    let fixed = optimum_config(&obj, &[0.5]);
    let p = tla1_fit(&ts, &is, &tasks, &vec![fixed.clone(); 4], &FitOptions::default()).unwrap();
    let pred = tla1_predict(&p, &task1(0.25)).unwrap();
    for (a, b) in tvec(&pred.config).iter().zip(tvec(&fixed)) {
        assert!((a - b).abs() < 1e-6);
    }
    assert_eq!(pred.variances.len(), 2);
    assert!(tla1_fit(&ts, &is, &tasks[..1], &[fixed], &FitOptions::default()).is_err());
}

#[test]
fn tla1_tracks_linear_optimum_drift() {
    let obj = quadratic(1, 2);
    let (ts, is) = (obj.task_space(), obj.input_space());
    let tasks = sample_tasks(&ts, 10, &RngState::new(21)).unwrap();
    let optima: Vec<Configuration> = tasks.iter().map(|t| optimum_config(&obj, &tvec(t))).collect();
    let p = tla1_fit(&ts, &is, &tasks, &optima, &FitOptions::default()).unwrap();
    // a training task comes back as its own optimum
    let own = tla1_predict(&p, &tasks[3]).unwrap();
    for (a, b) in tvec(&own.config).iter().zip(tvec(&optima[3])) {
        assert!((a - b).abs() < 1e-3);
    }
    for t in [0.05, 0.33, 0.5, 0.77, 0.95] {
        let pred = tla1_predict(&p, &task1(t)).unwrap();
        let truth = obj.optimum(&[t]).0;
        let d: f64 = pred.point.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(d < 0.05, "t={t}: {d}");
    }
}

#[test]
fn restart_advice_examples() {
    let p = RestartPolicy::default();
    assert_eq!(restart_advice(&p, 8, 0, 1e-6), RestartAdvice::ContinueTla2);
    assert_eq!(restart_advice(&p, 8, 8, 10.0), RestartAdvice::RestartMla);
    assert_eq!(restart_advice(&p, 8, 1, 1e-3), RestartAdvice::RestartMla);
    assert_eq!(restart_advice(&p, 8, 4, 10.0), RestartAdvice::ContinueTla2);
    assert_eq!(restart_advice(&p, 8, 5, 10.0), RestartAdvice::RestartMla);
}

fn trained(obj: &dyn Objective, ts: &ParameterSpace, is: &ParameterSpace, tasks: &[Configuration], opts: &TunerOptions) -> (lcmtune::LcmModel, lcmtune::tuner::OptimumPredictor, TuningResult) {
    let problem = Problem { task_space: ts, input_space: is, objective: obj };
    let (r, m) = mla(&problem, tasks, &vec![vec![]; tasks.len()], opts).unwrap();
    let optima: Vec<Configuration> = r.tasks.iter().map(|t| t.best_config.clone().unwrap()).collect();
    let p = tla1_fit(ts, is, tasks, &optima, &FitOptions::default()).unwrap();
    (m.lcm().unwrap().clone(), p, r)
}

#[test]
fn tla2_with_budget_equal_to_split_only_samples_around_the_prediction() {
    let obj = quadratic(1, 2);
    let (ts, is) = (obj.task_space(), obj.input_space());
    let tasks = sample_tasks(&ts, 4, &RngState::new(2)).unwrap();
    let (model, pred, _) = trained(&obj, &ts, &is, &tasks, &options(8, 6, 1));
    let problem = Problem { task_space: &ts, input_space: &is, objective: &obj };
    let out = tla2(&problem, &model, &pred, &task1(0.55), &options(6, 6, 5)).unwrap();
    let r = &out.result;
    assert_eq!(r.trace.len(), 6);
    assert_eq!(r.trace[0].phase, Phase::Predicted);
    assert!(r.trace[1..].iter().all(|e| e.phase == Phase::Centered));
    let min = r.trace.iter().map(|e| e.measurement.value).fold(f64::INFINITY, f64::min);
    assert_eq!(r.tasks[0].best_value, min);
    assert_eq!(out.model.unwrap().task_count(), 5);
}

#[test]
fn tla2_on_a_trained_task_matches_its_incumbent() {
    let spec = PdgeqrfSpec::single_node();
    let (ts, is) = (spec.task_space().unwrap(), spec.input_space().unwrap());
    let obj = QrSurrogate { coeffs: MachineCoefficients::default() };
    let tasks = sample_tasks(&ts, 3, &RngState::new(9)).unwrap();
    let (model, pred, base) = trained(&obj, &ts, &is, &tasks, &options(20, 12, 3));
    let problem = Problem { task_space: &ts, input_space: &is, objective: &obj };
    let out = tla2(&problem, &model, &pred, &tasks[1], &options(20, 10, 4)).unwrap();
    check_trace(&out.result, &problem, &tasks[1..2], 20);
    let (got, want) = (out.result.tasks[0].best_value, base.tasks[1].best_value);
    assert!(got <= 1.05 * want, "{got} vs {want}");
}

use std::path::Path;

use lcmtune::harness::{compare, execute, grid_search, grid_size, records_for, HistoryHeader, TuningHistory, report_optima_table, run, warm_start, ExperimentConfig, RunPaths, RunReport};
use lcmtune::objectives::{synthetic_family, SyntheticKind};
use lcmtune::spaces::{Configuration, ParameterSpace, Value};
use lcmtune::tuner::{Phase, Problem};
use lcmtune::Error;

fn config(body: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(body).unwrap()
}

const QUAD: &str = "[objective]\nkind = \"synthetic\"\nfamily = \"shifted-quadratic\"\n";
const NOISY: &str = "[objective]\nkind = \"synthetic\"\nfamily = \"shifted-quadratic\"\nnoise = 0.1\n";

fn paths(dir: &Path) -> RunPaths {
    RunPaths {
        output_dir: Some(dir.join("out")),
        history_dir: Some(dir.join("history")),
        no_history: false,
    }
}

#[test]
fn history_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("name = \"rt\"\nmethod = \"random\"\nseed = 4\n{NOISY}[budget]\ntasks = 2\nper_task = 6\n"));
    let out = run(&cfg, &paths(dir.path()), false).unwrap();
    let path = out.history_path.unwrap();
    let first = std::fs::read_to_string(&path).unwrap();
    let h = TuningHistory::load(&path).unwrap();
    let copy = dir.path().join("copy.jsonl");
    h.save(&copy).unwrap();
    assert_eq!(std::fs::read_to_string(&copy).unwrap(), first);
    assert_eq!(TuningHistory::load(&copy).unwrap(), h);
}

#[test]
fn random_run_logs_one_record_per_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("name = \"r5\"\nmethod = \"random\"\n{NOISY}[budget]\ntasks = 1\nper_task = 5\nrepetitions = 3\n"));
    let out = run(&cfg, &paths(dir.path()), false).unwrap();
    let h = TuningHistory::load(&out.history_path.unwrap()).unwrap();
    assert_eq!(h.records.len(), 5);
    assert!(h.records.iter().all(|r| r.measurement.repetitions.len() == 3));
    // every repetition of every record is accounted for in the report
    let total: f64 = h.records.iter().map(|r| r.measurement.cost()).sum();
    assert!((total - out.report.total_cost).abs() <= 1e-12 * total.max(1.0));
}

#[test]
fn reruns_write_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("name = \"det\"\nmethod = \"mla\"\nseed = 9\n{NOISY}[budget]\ntasks = 2\nper_task = 8\npilot = 5\n"));
    let a = run(&cfg, &RunPaths { output_dir: Some(dir.path().join("a")), no_history: true, ..RunPaths::default() }, false).unwrap();
    let b = run(&cfg, &RunPaths { output_dir: Some(dir.path().join("b")), no_history: true, ..RunPaths::default() }, false).unwrap();
    assert_eq!(std::fs::read(a.results_path).unwrap(), std::fs::read(b.results_path).unwrap());
    assert!(a.history_path.is_none());
}

#[test]
fn warm_start_skips_a_completed_pilot() {
    let dir = tempfile::tempdir().unwrap();
    let p = paths(dir.path());
    let first = config(&format!("name = \"ws\"\nmethod = \"mla\"\nseed = 2\n{QUAD}[budget]\ntasks = 2\nper_task = 6\npilot = 6\n"));
    let a = run(&first, &p, false).unwrap();
    assert!(a.report.runs[0].trace.iter().all(|e| e.phase == Phase::Pilot));

    let second = config(&format!("name = \"ws\"\nmethod = \"mla\"\nseed = 3\n{QUAD}[budget]\ntasks = 2\nper_task = 9\npilot = 6\n"));
    let b = run(&second, &p, true).unwrap();
    let trace = &b.report.runs[0].trace;
    assert_eq!(trace.len(), 2 * 3);
    assert!(trace.iter().all(|e| e.phase != Phase::Pilot));
    for (ta, tb) in a.report.tasks.iter().zip(&b.report.tasks) {
        assert_eq!(ta.task, tb.task);
        assert_eq!(tb.prior, 6);
        assert!(tb.best_value <= ta.best_value);
    }
    let h = TuningHistory::load(&b.history_path.unwrap()).unwrap();
    assert_eq!(h.records.len(), 12 + 6);
}

#[test]
fn empty_history_is_a_cold_start() {
    let cfg = config(&format!("name = \"cold\"\nmethod = \"mla\"\nseed = 1\n{QUAD}[budget]\ntasks = 2\nper_task = 7\npilot = 5\n"));
    let setup = cfg.setup().unwrap();
    let empty = TuningHistory::new(HistoryHeader::new("shifted-quadratic", &setup.task_space, &setup.input_space));
    assert_eq!(execute(&cfg, Some(&empty)).unwrap(), execute(&cfg, None).unwrap());
}

#[test]
fn mismatched_history_is_refused() {
    let f = synthetic_family(SyntheticKind::ShiftedQuadratic, 1, 2).unwrap();
    let g = synthetic_family(SyntheticKind::ShiftedQuadratic, 1, 3).unwrap();
    let ours = HistoryHeader::new("shifted-quadratic", &f.task_space(), &f.input_space());
    let theirs = TuningHistory::new(HistoryHeader::new("shifted-quadratic", &g.task_space(), &g.input_space()));
    assert!(matches!(warm_start(&theirs, &ours, &[]), Err(Error::SpaceMismatch(_))));
    let other_objective = TuningHistory::new(HistoryHeader::new("qr-surrogate", &f.task_space(), &f.input_space()));
    assert!(matches!(warm_start(&other_objective, &ours, &[]), Err(Error::SpaceMismatch(_))));
}

fn fixed_tasks() -> String {
    "[[tasks]]\nt0 = 0.1\n[[tasks]]\nt0 = 0.5\n[[tasks]]\nt0 = 0.9\n".into()
}

#[test]
fn comparisons_and_tables() {
    let mk = |method: &str, per_task: usize| {
        let cfg = config(&format!(
            "name = \"{method}\"\nmethod = \"{method}\"\nseed = 5\n{}{QUAD}[budget]\nper_task = {per_task}\npilot = 4\n",
            fixed_tasks()
        ));
        execute(&cfg, None).unwrap()
    };
    let rnd = mk("random", 6);
    let same = compare(&rnd, &rnd).unwrap();
    assert_eq!((same.wins_a, same.wins_b, same.ties), (0, 0, 3));
    assert!(same.rows.iter().all(|r| r.quality_ratio == 1.0 && r.cost_ratio == 1.0));
    assert_eq!(same.mean_quality_ratio, 1.0);

    let mut better = rnd.clone();
    for t in &mut better.tasks {
        t.best_value *= 0.5;
    }
    let c = compare(&rnd, &better).unwrap();
    assert_eq!((c.wins_a, c.wins_b, c.ties), (0, 3, 0));
    assert_eq!(c.wins_a + c.wins_b + c.ties, rnd.tasks.len());
    let csv = c.plot_data().to_csv().unwrap();
    assert!(csv.starts_with("# "));
    assert_eq!(csv.lines().count(), 2 + 3);

    let mut fewer = rnd.clone();
    fewer.tasks.pop();
    assert!(matches!(compare(&rnd, &fewer), Err(Error::TaskMismatch(_))));

    let table = report_optima_table(&[rnd.clone()]);
    assert_eq!(table.lines().count(), 1 + 3);
    assert!(table.lines().nth(1).unwrap().starts_with("random  6"));
}

#[test]
fn tla1_reports_a_zero_budget() {
    let cfg = config(&format!(
        "name = \"t1\"\nmethod = \"tla1\"\nseed = 5\n{}{QUAD}[budget]\nper_task = 6\npilot = 4\n[[new_tasks]]\nt0 = 0.3\n",
        fixed_tasks()
    ));
    let r = execute(&cfg, None).unwrap();
    assert_eq!(r.budget, 0);
    assert_eq!(r.tasks.len(), 1);
    assert_eq!(r.tasks[0].evaluations, 0);
    let table = report_optima_table(&[r]);
    let row = table.lines().nth(1).unwrap();
    assert!(row.starts_with("tla1    0"), "{row}");
}

#[test]
fn results_reload_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("name = \"rl\"\nmethod = \"ego\"\nseed = 5\n{}{NOISY}[budget]\nper_task = 6\npilot = 4\n", fixed_tasks()));
    let out = run(&cfg, &paths(dir.path()), false).unwrap();
    assert_eq!(RunReport::load(&out.results_path).unwrap(), out.report);
    assert!(out.results_path.with_file_name("optima.txt").exists());
}

fn line() -> ParameterSpace {
    ParameterSpace::builder("line").real("x0", 0.0, 1.0).unwrap().build().unwrap()
}

#[test]
fn grid_search_counts_and_limits() {
    let f = synthetic_family(SyntheticKind::ShiftedQuadratic, 1, 1).unwrap();
    let (ts, is) = (f.task_space(), line());
    let problem = Problem { task_space: &ts, input_space: &is, objective: &f };
    let t = Configuration::new().with("t0", Value::Real(0.5));
    let r = grid_search(&problem, &t, 5, 1000, 1, 0).unwrap();
    assert_eq!(r.trace.len(), 5);
    // optimum 0.5 lies on the five-point ladder
    assert!(r.tasks[0].best_value < 1e-24);
    assert!(matches!(grid_search(&problem, &t, 0, 1000, 1, 0), Err(Error::Config { .. })));

    let f3 = synthetic_family(SyntheticKind::ShiftedQuadratic, 1, 3).unwrap();
    let is3 = f3.input_space();
    assert_eq!(grid_size(&is3, 20), 8000);
    let p3 = Problem { task_space: &ts, input_space: &is3, objective: &f3 };
    assert!(matches!(grid_search(&p3, &t, 20, 1000, 1, 0), Err(Error::GridTooLarge { .. })));
}

#[test]
fn history_records_follow_the_trace() {
    let cfg = config(&format!("name = \"tr\"\nmethod = \"random\"\nseed = 8\n{}{QUAD}[budget]\nper_task = 3\n", fixed_tasks()));
    let r = execute(&cfg, None).unwrap();
    let recs: Vec<_> = r.runs.iter().flat_map(|run| records_for(run, "tr", 8)).collect();
    assert_eq!(recs.len(), 9);
    let tasks: Vec<Configuration> = r.tasks.iter().map(|t| t.task.clone()).collect();
    for (rec, e) in recs.iter().zip(r.runs.iter().flat_map(|run| run.trace.iter())) {
        assert_eq!(rec.config, e.config);
        assert_eq!(rec.measurement, e.measurement);
        assert!(tasks.contains(&rec.task));
    }
}

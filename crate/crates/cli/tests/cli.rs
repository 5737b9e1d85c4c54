use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lcmtune(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcmtune"))
        .args(args)
        .current_dir(dir)
        .env_remove("LCMTUNE_HISTORY_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const QUAD: &str = "name = \"quad\"\nmethod = \"mla\"\nseed = 3\n[objective]\nkind = \"synthetic\"\nfamily = \"shifted-quadratic\"\n[budget]\ntasks = 2\nper_task = 6\npilot = 4\n";

#[test]
fn tune_writes_results_and_history() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quad.toml", QUAD);
    let o = lcmtune(dir.path(), &["tune", "--config", "quad.toml", "--out", "run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("evaluations: 12"));
    assert!(dir.path().join("run/results.json").exists());
    assert!(dir.path().join("run/optima.txt").exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("history/quad.jsonl")).unwrap().lines().count(), 1 + 12);

    let again = lcmtune(dir.path(), &["tune", "--config", "quad.toml", "--out", "run2", "--no-history"]);
    assert!(again.status.success());
    assert_eq!(std::fs::read(dir.path().join("run/results.json")).unwrap(), std::fs::read(dir.path().join("run2/results.json")).unwrap());
}

#[test]
fn history_dir_from_environment_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quad.toml", QUAD);
    let env_dir = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_lcmtune"))
        .args(["tune", "--config", "quad.toml", "--out", "a", "--method", "random"])
        .current_dir(dir.path())
        .env("LCMTUNE_HISTORY_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_dir.join("quad.jsonl").exists());

    // the flag wins over the environment
    let o = Command::new(env!("CARGO_BIN_EXE_lcmtune"))
        .args(["tune", "--config", "quad.toml", "--out", "b", "--method", "random", "--history-dir", "from-flag"])
        .current_dir(dir.path())
        .env("LCMTUNE_HISTORY_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from-flag/quad.jsonl").exists());
    assert_eq!(std::fs::read_to_string(env_dir.join("quad.jsonl")).unwrap().lines().count(), 1 + 12);
}

#[test]
fn warm_start_reuses_the_history() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quad.toml", QUAD);
    assert!(lcmtune(dir.path(), &["tune", "--config", "quad.toml", "--out", "a", "--budget", "4"]).status.success());
    let o = lcmtune(dir.path(), &["warm-start", "--config", "quad.toml", "--out", "b", "--budget", "6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // the pilot came from the history: two fresh evaluations per task
    assert!(stdout(&o).contains("evaluations: 4"), "{}", stdout(&o));
}

#[test]
fn sample_prints_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "qr.toml", "name = \"qr\"\nmethod = \"mla\"\n[objective]\nkind = \"qr-surrogate\"\n[budget]\ntasks = 2\n");
    let o = lcmtune(dir.path(), &["sample", "--config", "qr.toml", "--count", "5"]);
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|v| v.get("m").is_some() && v.get("n").is_some()));

    let o = lcmtune(dir.path(), &["sample", "--config", "qr.toml", "--count", "3", "--inputs"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2 * 3);
    assert_eq!(stdout(&o), stdout(&lcmtune(dir.path(), &["sample", "--config", "qr.toml", "--count", "3", "--inputs"])));
}

#[test]
fn grid_compare_and_report() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "quad.toml", QUAD);
    let g = lcmtune(dir.path(), &["grid", "--config", "quad.toml", "--out", "grid", "--resolution", "5", "--no-history"]);
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    assert!(stdout(&g).contains("evaluations: 50"), "{}", stdout(&g));
    assert!(lcmtune(dir.path(), &["tune", "--config", "quad.toml", "--out", "mla", "--no-history"]).status.success());

    let c = lcmtune(dir.path(), &["compare", "grid/results.json", "grid/results.json", "--out", "cmp"]);
    assert!(c.status.success());
    assert!(dir.path().join("cmp/comparison.json").exists());
    assert!(dir.path().join("cmp/comparison.csv").exists());

    let r = lcmtune(dir.path(), &["report", "grid/results.json", "mla/results.json"]);
    assert!(r.status.success());
    let out = stdout(&r);
    assert!(out.contains("grid") && out.contains("mla"));

    let too_big = lcmtune(dir.path(), &["grid", "--config", "quad.toml", "--out", "g2", "--resolution", "200", "--cap", "100", "--no-history"]);
    assert_eq!(too_big.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    // configuration problems
    assert_eq!(lcmtune(p, &["tune", "--config", "missing.toml"]).status.code(), Some(2));
    write(p, "bad.toml", "name = \"bad\"\nmethod = \"nope\"\n[objective]\nkind = \"qr-surrogate\"\n");
    assert_eq!(lcmtune(p, &["tune", "--config", "bad.toml"]).status.code(), Some(2));
    assert_eq!(lcmtune(p, &["frobnicate"]).status.code(), Some(2));

    // a space with no valid configuration
    write(p, "task.toml", "name = \"t\"\n[[dimension]]\nname = \"t0\"\nkind = \"real\"\nlow = 0.0\nhigh = 1.0\n");
    write(
        p,
        "never.toml",
        "name = \"x\"\n[[dimension]]\nname = \"x0\"\nkind = \"real\"\nlow = 0.0\nhigh = 1.0\n[[constraint]]\nexpr = \"x0 > 2\"\ndescription = \"never\"\n",
    );
    write(
        p,
        "empty.toml",
        "name = \"empty\"\nmethod = \"random\"\n[objective]\nkind = \"command\"\nprogram = \"true\"\ntask_space = \"task.toml\"\ninput_space = \"never.toml\"\n[budget]\ntasks = 1\nper_task = 2\n",
    );
    assert_eq!(lcmtune(p, &["tune", "--config", "empty.toml", "--no-history"]).status.code(), Some(3));

    // the objective program cannot be started
    write(p, "x.toml", "name = \"x\"\n[[dimension]]\nname = \"x0\"\nkind = \"real\"\nlow = 0.0\nhigh = 1.0\n");
    write(
        p,
        "spawn.toml",
        "name = \"spawn\"\nmethod = \"random\"\n[objective]\nkind = \"command\"\nprogram = \"/nonexistent/objective\"\ntask_space = \"task.toml\"\ninput_space = \"x.toml\"\n[budget]\ntasks = 1\nper_task = 2\n",
    );
    assert_eq!(lcmtune(p, &["tune", "--config", "spawn.toml", "--no-history"]).status.code(), Some(4));
}

#[cfg(unix)]
#[test]
fn command_objective_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "task.toml", "name = \"t\"\n[[dimension]]\nname = \"t0\"\nkind = \"real\"\nlow = 0.0\nhigh = 1.0\n");
    write(p, "x.toml", "name = \"x\"\n[[dimension]]\nname = \"x0\"\nkind = \"real\"\nlow = 0.0\nhigh = 1.0\n");
    write(
        p,
        "cmd.toml",
        "name = \"cmd\"\nmethod = \"random\"\n[objective]\nkind = \"command\"\nprogram = \"sh\"\nargs = [\"-c\", \"read line; echo 2.5\"]\ndeterministic = true\ntask_space = \"task.toml\"\ninput_space = \"x.toml\"\n[budget]\ntasks = 1\nper_task = 3\n",
    );
    let o = lcmtune(p, &["tune", "--config", "cmd.toml", "--no-history", "--out", "cmd"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("evaluations: 3"));
}

use std::path::Path;
use std::process::{Command, Output};

fn cadm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadm")).args(args).output().expect("run cadm")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn simulate_writes_traces_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cadm(&["simulate", "--horizon", "4", "--grid", "8", "--svg", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ts = lines(&out.join("timeseries.csv"));
    assert_eq!(ts[0], "k,agent,cost,cap,privacy,cost_increase");
    assert_eq!(ts.len(), 1 + 4 * 3);
    for k in 1..=4 {
        assert!(out.join(format!("simplex_{k}.svg")).exists());
    }
    for f in ["records.json", "observations.json", "scenario.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn replayed_observations_and_saved_scenario_reproduce_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    let o = cadm(&["simulate", "--horizon", "5", "--grid", "6", "--agents", "odm,cdm", "--out", first.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = cadm(&[
        "simulate",
        "--scenario",
        first.join("scenario.json").to_str().unwrap(),
        "--observations",
        first.join("observations.json").to_str().unwrap(),
        "--horizon",
        "5",
        "--grid",
        "6",
        "--agents",
        "odm,cdm",
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(lines(&first.join("timeseries.csv")), lines(&second.join("timeseries.csv")));
}

#[test]
fn sweep_writes_one_row_per_budget_and_agent() {
    let dir = tempfile::tempdir().unwrap();
    let o = cadm(&[
        "sweep",
        "--budgets",
        "0:0.1:0.2",
        "--repeats",
        "2",
        "--horizon",
        "3",
        "--grid",
        "6",
        "--agents",
        "cdm,pdm",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = lines(&dir.path().join("sweep.csv"));
    assert!(rows[0].starts_with("budget,agent,repeats,mean_privacy,se_privacy"));
    assert_eq!(rows.len(), 1 + 3 * 2);
}

#[test]
fn polytope_prints_json() {
    let o = cadm(&["polytope", "--action", "0.2,0.3,0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn ternary_plots_need_three_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let o = cadm(&["simulate", "--dims", "4,3,2", "--svg", "--horizon", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ternary plots require dimension 3"), "{}", stderr(&o));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["simulate", "--measure", "bogus", "--out", out],
        vec!["simulate", "--dims", "3,3", "--out", out],
        vec!["simulate", "--budget", "-1", "--out", out],
        vec!["simulate", "--agents", "odm,xyz", "--out", out],
        vec!["simulate", "--empty-set-policy", "middle", "--out", out],
        vec!["sweep", "--budgets", "0:0:1", "--out", out],
        vec!["simulate", "--scenario", "/nonexistent/scenario.json", "--out", out],
        vec!["simulate", "--no-such-flag"],
    ] {
        let o = cadm(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn solver_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cadm(&["generate", "--dims", "2,3,2"]);
    assert_eq!(o.status.code(), Some(0));
    let mut scenario: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // Fully invested with the first weight forced negative: no long-only
    // portfolio exists, so the forward program is infeasible.
    scenario["constraints"]["a_eq"] = serde_json::json!([[1.0, 1.0, 1.0], [1.0, 0.0, 0.0]]);
    scenario["constraints"]["b_eq"] = serde_json::json!([1.0, -1.0]);
    let path = dir.path().join("infeasible.json");
    std::fs::write(&path, scenario.to_string()).unwrap();
    let o = cadm(&["simulate", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn belief_trace_sets_the_number_of_steps() {
    let dir = tempfile::tempdir().unwrap();
    let beliefs = dir.path().join("beliefs.json");
    std::fs::write(&beliefs, "[[0.2, 0.3, 0.5], [1, 0, 0]]").unwrap();
    let out = dir.path().join("run");
    let o = cadm(&[
        "simulate",
        "--beliefs",
        beliefs.to_str().unwrap(),
        "--grid",
        "6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(lines(&out.join("timeseries.csv")).len(), 1 + 2 * 3);
    assert!(!out.join("observations.json").exists());

    std::fs::write(&beliefs, "[[0.5, 0.5]]").unwrap();
    let o = cadm(&["simulate", "--beliefs", beliefs.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

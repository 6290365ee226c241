//! End-to-end checks of the command-line contract: exit codes, output
//! files, and config error reporting.

use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ktopical"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("lin.json"),
        r#"{
  "version": 1,
  "model": { "kind": "linear_consensus", "graph": { "n": 2, "edges": [[1,2],[2,1]] }, "time_domain": "continuous" }
}"#,
    )
    .unwrap();
    let out = run(
        &["verify", "--config", "lin.json", "--out", "lin_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr_text(&out));
    let report = json_file(&dir.path().join("lin_out/verify_report.json"));
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["time_domain"], "continuous");
    assert_eq!(report["plan"]["seed"], 42);

    fs::write(
        dir.path().join("swap.json"),
        r#"{ "version": 1, "model": { "kind": "swap" } }"#,
    )
    .unwrap();
    let out = run(
        &["verify", "--config", "swap.json", "--out", "swap_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
    let report = json_file(&dir.path().join("swap_out/verify_report.json"));
    assert_eq!(report["verdict"], "fail");
    let checks = report["checks"].as_array().unwrap();
    let structure = checks
        .iter()
        .find(|c| c["name"] == "nonneg_posdiag_dt")
        .unwrap();
    assert!(
        !structure["witnesses"].as_array().unwrap().is_empty(),
        "fail verdicts carry witnesses"
    );

    fs::write(
        dir.path().join("missing.json"),
        r#"{ "version": 1, "model": { "kind": "mas", "graph": { "file": "nowhere.txt" }, "coupling": { "kind": "identity" }, "time_domain": "continuous" } }"#,
    )
    .unwrap();
    let out = run(
        &["verify", "--config", "missing.json", "--out", "missing_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_text(&out).contains("nowhere.txt"));
    assert!(
        !dir.path().join("missing_out").exists(),
        "no partial outputs on exit 1"
    );
}

#[test]
fn config_errors_name_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("unknown.json"),
        r#"{ "version": 1, "model": { "kind": "swap" }, "tolarences": {} }"#,
    )
    .unwrap();
    let out = run(&["verify", "--config", "unknown.json"], dir.path());
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_text(&out).contains("tolarences"), "{}", stderr_text(&out));

    fs::write(
        dir.path().join("version.json"),
        r#"{ "version": 7, "model": { "kind": "swap" } }"#,
    )
    .unwrap();
    let out = run(&["verify", "--config", "version.json"], dir.path());
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_text(&out).contains("version"));
}

#[test]
fn simulate_writes_trajectory_and_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("mp.json"),
        r#"{
  "version": 1,
  "model": { "kind": "max_plus", "matrix": [[0, -1], [-1, 0]] },
  "initial": [0.0, 5.0]
}"#,
    )
    .unwrap();
    let out = run(
        &["simulate", "--config", "mp.json", "--out", "mp_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr_text(&out));
    let report = json_file(&dir.path().join("mp_out/convergence_report.json"));
    assert_eq!(report["outcome"], "converged");
    assert_eq!(report["limit"][0], 4.0);
    assert_eq!(report["limit"][1], 5.0);

    let csv = fs::read_to_string(dir.path().join("mp_out/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x_1,x_2");
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first, vec![0.0, 0.0, 5.0]);

    fs::write(
        dir.path().join("swap.json"),
        r#"{ "version": 1, "model": { "kind": "swap" }, "initial": [0.0, 1.0] }"#,
    )
    .unwrap();
    let out = run(
        &["simulate", "--config", "swap.json", "--out", "swap_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    let report = json_file(&dir.path().join("swap_out/convergence_report.json"));
    assert_eq!(report["outcome"], "periodic");
    assert_eq!(report["period"], 2);

    fs::write(
        dir.path().join("drift.json"),
        r#"{ "version": 1, "model": { "kind": "translation", "offset": 1.0, "dim": 1 }, "initial": [0.0], "time": { "horizon": 500 } }"#,
    )
    .unwrap();
    let out = run(
        &["simulate", "--config", "drift.json", "--out", "drift_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    let report = json_file(&dir.path().join("drift_out/convergence_report.json"));
    let outcome = report["outcome"].as_str().unwrap();
    assert!(outcome == "horizon_exhausted" || outcome == "diverged");
}

#[test]
fn consensus_command_contract() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("pair.json"),
        r#"{
  "version": 1,
  "model": { "kind": "mas", "graph": { "n": 2, "edges": [[1,2],[2,1]] }, "coupling": { "kind": "saturated", "s": 1.0, "m": 2.0 }, "time_domain": "discrete", "eps": 0.4 },
  "initial": [-1.0, 1.0]
}"#,
    )
    .unwrap();
    let out = run(
        &["consensus", "--config", "pair.json", "--out", "pair_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr_text(&out));
    let report = json_file(&dir.path().join("pair_out/consensus_report.json"));
    assert_eq!(report["run"]["outcome"], "consensus");
    assert!(report["run"]["consensus_value"].as_f64().unwrap().abs() < 1e-6);
    assert_eq!(report["conditions"]["all_pass"], true);
    let trace = &report["run"]["width_trace"];
    assert_eq!(trace["initial"], 2.0);
    assert_eq!(trace["nonincreasing"], true);

    // Two isolated agents: condition (iv) fails and the run settles away
    // from consensus.
    fs::write(
        dir.path().join("split.json"),
        r#"{
  "version": 1,
  "model": { "kind": "mas", "graph": { "n": 2, "edges": [] }, "coupling": { "kind": "identity" }, "time_domain": "continuous" },
  "initial": [0.0, 1.0]
}"#,
    )
    .unwrap();
    let out = run(
        &["consensus", "--config", "split.json", "--out", "split_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 2);
    let report = json_file(&dir.path().join("split_out/consensus_report.json"));
    assert_eq!(report["conditions"]["reachability"]["verdict"], "fail");
    assert_eq!(report["run"]["outcome"], "equilibrium_non_consensus");
    assert_eq!(report["run"]["final_width"], 1.0);

    // A step gain at the refusal bound surfaces as a config error with the
    // bound in the message.
    fs::write(
        dir.path().join("hot.json"),
        r#"{
  "version": 1,
  "model": { "kind": "linear_consensus", "graph": { "n": 3, "edges": [[1,2],[2,3],[3,1]] }, "time_domain": "discrete", "eps": [1.0, 1.0, 1.0] },
  "initial": [0.0, 1.0, 2.0]
}"#,
    )
    .unwrap();
    let out = run(
        &["consensus", "--config", "hot.json", "--out", "hot_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 1);
    let err = stderr_text(&out);
    assert!(err.contains("bound 1"), "bound named in: {err}");
    assert!(!dir.path().join("hot_out").exists());
}

#[test]
fn sweep_alpha_gap_column_shrinks() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("alpha.json"),
        r#"{
  "version": 1,
  "model": { "kind": "smooth_max_plus", "matrix": [[0, -1], [-1, 0]], "alpha": 1.0 },
  "initial": [0.0, 5.0],
  "time": { "horizon": 2000 },
  "sweep": { "axis": "alpha", "values": [1.0, 10.0, 100.0] }
}"#,
    )
    .unwrap();
    let out = run(
        &["sweep", "--config", "alpha.json", "--out", "alpha_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr_text(&out));
    let csv = fs::read_to_string(dir.path().join("alpha_out/sweep.csv")).unwrap();
    let gaps: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|line| line.split(',').nth(6).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 3);
    for (gap, alpha) in gaps.iter().zip([1.0, 10.0, 100.0]) {
        assert!(
            *gap <= 2.0f64.ln() / alpha + 1e-12,
            "alpha {alpha}: gap {gap}"
        );
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gap column shrinks");
}

#[test]
fn sweep_rejects_empty_axis_and_missing_spec() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("empty.json"),
        r#"{
  "version": 1,
  "model": { "kind": "swap" },
  "initial": [0.0, 1.0],
  "sweep": { "axis": "seed", "values": [] }
}"#,
    )
    .unwrap();
    let out = run(&["sweep", "--config", "empty.json"], dir.path());
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_text(&out).contains("sweep.values"));

    fs::write(
        dir.path().join("none.json"),
        r#"{ "version": 1, "model": { "kind": "swap" }, "initial": [0.0, 1.0] }"#,
    )
    .unwrap();
    let out = run(&["sweep", "--config", "none.json"], dir.path());
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_text(&out).contains("sweep"));
}

#[test]
fn seed_sweep_runs_consensus_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("seeds.json"),
        r#"{
  "version": 1,
  "model": { "kind": "linear_consensus", "graph": { "n": 3, "edges": [[1,2],[2,3],[3,1]] }, "time_domain": "continuous" },
  "plan": { "sample_box": { "lower": [-2, -2, -2], "upper": [2, 2, 2] } },
  "sweep": { "axis": "seed", "values": [0, 1, 2, 3] }
}"#,
    )
    .unwrap();
    let out = run(
        &["sweep", "--config", "seeds.json", "--out", "seed_out", "--jobs", "2"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr_text(&out));
    let csv = fs::read_to_string(dir.path().join("seed_out/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row.split(',').nth(2), Some("consensus"), "{row}");
    }
}

#[test]
fn files_are_resolved_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("inputs")).unwrap();
    fs::write(dir.path().join("inputs/ring.txt"), "n 3\n1 2\n2 3\n3 1\n").unwrap();
    fs::write(
        dir.path().join("inputs/gain.json"),
        r#"{
  "version": 1,
  "model": { "kind": "mas", "graph": { "file": "ring.txt" }, "coupling": { "kind": "saturated", "s": 1.0, "m": 2.0 }, "time_domain": "discrete", "eps": 0.3 },
  "initial": [0.5, -0.5, 1.5]
}"#,
    )
    .unwrap();
    fs::write(dir.path().join("inputs/band.txt"), "2\n0 -inf\n-1 0\n").unwrap();
    fs::write(
        dir.path().join("inputs/mp.json"),
        r#"{
  "version": 1,
  "model": { "kind": "max_plus", "matrix_file": "band.txt" },
  "initial": [0.0, 5.0]
}"#,
    )
    .unwrap();

    let out = run(
        &["consensus", "--config", "inputs/gain.json", "--out", "g_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr_text(&out));

    let out = run(
        &["simulate", "--config", "inputs/mp.json", "--out", "m_out"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0, "{}", stderr_text(&out));
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("lin.json"),
        r#"{
  "version": 1,
  "model": { "kind": "linear_consensus", "graph": { "n": 2, "edges": [[1,2],[2,1]] }, "time_domain": "continuous" },
  "plan": { "seed": 7 }
}"#,
    )
    .unwrap();
    let out = run(
        &["verify", "--config", "lin.json", "--out", "a"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    assert_eq!(json_file(&dir.path().join("a/verify_report.json"))["plan"]["seed"], 7);

    let out = run(
        &["verify", "--config", "lin.json", "--out", "b", "--seed", "123"],
        dir.path(),
    );
    assert_eq!(exit_code(&out), 0);
    assert_eq!(
        json_file(&dir.path().join("b/verify_report.json"))["plan"]["seed"],
        123
    );
}

#[test]
fn kuramoto_band_refusal_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("wide.json"),
        r#"{
  "version": 1,
  "model": { "kind": "kuramoto", "graph": { "n": 2, "edges": [[1,2],[2,1]] }, "band": { "lower": [0.0, 0.0], "upper": [3.14159, 3.14159] } }
}"#,
    )
    .unwrap();
    let out = run(&["verify", "--config", "wide.json"], dir.path());
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_text(&out).contains("monotone window"));
}

#[test]
fn shapley_game_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let game = r#"{
  "states": [
    [
      [ { "reward": 0.4, "transition": [0.7, 0.3] }, { "reward": -0.2, "transition": [0.6, 0.4] } ],
      [ { "reward": 0.1, "transition": [0.65, 0.35] }, { "reward": 0.3, "transition": [0.7, 0.3] } ]
    ],
    [
      [ { "reward": -0.4, "transition": [0.3, 0.7] }, { "reward": 0.2, "transition": [0.4, 0.6] } ],
      [ { "reward": -0.1, "transition": [0.35, 0.65] }, { "reward": 0.0, "transition": [0.3, 0.7] } ]
    ]
  ]
}"#;
    fs::write(dir.path().join("game.json"), game).unwrap();
    fs::write(
        dir.path().join("shapley.json"),
        r#"{
  "version": 1,
  "model": { "kind": "shapley", "game_file": "game.json" },
  "initial": [0.0, 0.0]
}"#,
    )
    .unwrap();
    let out = run(
        &["verify", "--config", "shapley.json", "--out", "sh_out"],
        dir.path(),
    );
    // Direct probing of the exact min-max operator: monotone, strict, and
    // translation invariant on samples.
    assert_eq!(exit_code(&out), 0, "{}", stderr_text(&out));
    let report = json_file(&dir.path().join("sh_out/verify_report.json"));
    assert_eq!(report["verdict"], "pass");

    let broken = r#"{ "states": [ [ [ { "reward": 0.0, "transition": [0.5] } ] ] ] }"#;
    fs::write(dir.path().join("bad_game.json"), broken).unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{ "version": 1, "model": { "kind": "shapley", "game_file": "bad_game.json" } }"#,
    )
    .unwrap();
    let out = run(&["verify", "--config", "bad.json"], dir.path());
    assert_eq!(exit_code(&out), 1);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn beamrep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamrep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn table1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/table1.json")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn optimize_reports_one_based_plan() {
    let dir = tempfile::tempdir().unwrap();
    let prior = dir.path().join("prior.json");
    let out = dir.path().join("plan.json");
    fs::write(&prior, "[0.7, 0.1, 0.1, 0.1]").unwrap();
    let o = beamrep(&["optimize", "--prior", s(&prior), "--snr-db", "-16", "--budget", "256", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    assert_eq!(v["candidates"], serde_json::json!([1, 2]));
    assert_eq!(v["repetitions"], serde_json::json!([89, 167]));
    assert!((v["p_miss_bound"].as_f64().unwrap() - 0.272).abs() < 5e-4);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert!(v["seed"].is_u64());
}

#[test]
fn optimize_reads_csv_and_brute_force() {
    let dir = tempfile::tempdir().unwrap();
    let prior = dir.path().join("prior.csv");
    let out = dir.path().join("plan.json");
    fs::write(&prior, "prob\n0.5\n0.3\n0.2\n").unwrap();
    let o = beamrep(&[
        "optimize", "--prior", s(&prior), "--snr-db", "-5", "--budget", "12", "--method", "brute", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    let reps: u64 = v["repetitions"].as_array().unwrap().iter().map(|r| r.as_u64().unwrap()).sum();
    assert!(reps <= 12);
    assert_eq!(v["method"], "brute");
}

#[test]
fn invalid_inputs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let prior = dir.path().join("prior.json");
    fs::write(&prior, "[0.7, 0.7]").unwrap();
    let out = dir.path().join("plan.json");
    let o = beamrep(&["optimize", "--prior", s(&prior), "--snr-db", "-10", "--budget", "16", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let missing = dir.path().join("nope.json");
    let o = beamrep(&["simulate", "--scenario", s(&missing), "--out-csv", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let o = beamrep(&["--threads", "0", "oracle-check"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(beamrep(&[]).status.code(), Some(2));
}

#[test]
fn simulate_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let csv = dir.path().join(name);
        let o = beamrep(&[
            "--quiet", "--threads", threads, "simulate", "--scenario", s(&table1()), "--trials", "3000", "--out-csv",
            s(&csv),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stderr.is_empty());
        fs::read_to_string(csv).unwrap()
    };
    let one = run("1", "a.csv");
    assert_eq!(one, run("3", "b.csv"));
    let mut lines = one.lines();
    assert!(lines.next().unwrap().starts_with("# seed=2024 config_hash="));
    assert_eq!(
        lines.next().unwrap(),
        "strategy,snr_db,budget,p_miss,p_miss_sigma,mean_gain,gain_sigma,mean_S,mean_spent"
    );
    assert_eq!(lines.count(), 5 * 8);
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let o = beamrep(&[
        "--seed", "77", "simulate", "--scenario", s(&table1()), "--trials", "200", "--out-json", s(&json),
    ]);
    assert!(o.status.success());
    let v = read_json(&json);
    assert_eq!(v["seed"], 77);
    assert_eq!(v["rows"].as_array().unwrap().len(), 40);
}

#[test]
fn trained_model_drives_a_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    let mut text = String::from("scene_id,x,y,optimal_index\n");
    for scene in 0..50 {
        let a = if scene % 5 == 0 { 2 } else { 1 };
        let b = if scene % 2 == 0 { 3 } else { 4 };
        text.push_str(&format!("{scene},0,0,{a}\n{scene},10,5,{b}\n"));
    }
    fs::write(&data, text).unwrap();
    let model = dir.path().join("model.json");
    let o = beamrep(&[
        "--seed", "4", "train-prior", "--data", s(&data), "--out", s(&model), "--epochs", "60", "--n-beams", "16",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&model);
    assert_eq!(m["format"], "beamrep-prior-mlp");
    assert_eq!(m["config"]["seed"], 4);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);

    let scenario = dir.path().join("scenario.json");
    fs::write(
        &scenario,
        r#"{
  "geometry": { "n_elements": 16 },
  "snr_db_list": [-6],
  "budget": 32,
  "trials": 500,
  "prior_source": { "kind": "model", "path": "model.json" },
  "locations": [
    { "id": 1, "x": 0, "y": 0, "prior": [0.8, 0.2] },
    { "id": 2, "x": 10, "y": 5, "prior": [0, 0, 0.5, 0.5] }
  ],
  "strategies": [ { "kind": "proposed" } ],
  "seed": 9
}"#,
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let o = beamrep(&["simulate", "--scenario", s(&scenario), "--out-csv", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = fs::read_to_string(csv).unwrap();
    assert!(out.lines().nth(2).unwrap().starts_with("proposed,-6,32,"));
}

#[test]
fn oracle_check_passes_and_fails_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("oracle.json");
    let o = beamrep(&[
        "oracle-check", "--trials", "20000", "--instances", "200", "--priors", "30", "--out", s(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&report);
    assert_eq!(v["reports"].as_array().unwrap().len(), 3);

    // an impossible tolerance on the simulated check must be reported
    let o = beamrep(&["oracle-check", "--trials", "2000", "--instances", "10", "--priors", "2", "--sigmas", "1e-6"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_table2_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("table2.json");
    let o = beamrep(&["verify-table2", "--out", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&report);
    assert_eq!(v["passed"], 48);
    assert_eq!(v["cells"].as_array().unwrap().len(), 48);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(stderr.lines().filter(|l| l.starts_with("PASS")).count(), 48);
}

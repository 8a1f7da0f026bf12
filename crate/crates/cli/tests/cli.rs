use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn lpstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpstat"))
        .args(args)
        .env_remove("LPSTAT_THREADS")
        .output()
        .expect("spawn lpstat")
}

fn lpstat_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_lpstat"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn lpstat");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn pairs_file(dir: &tempfile::TempDir) -> String {
    let path = dir.path().join("pairs.csv");
    let mut s = String::from("x,y\n");
    for i in 0..200 {
        let x = (i as f64 * 0.37).sin() * 2.0;
        let y = x * x + (i as f64 * 1.7).cos();
        s.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(&path, s).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn fisher_coordinates_from_bundled_table() {
    let out = lpstat(&["corresp", "--input", "fisher.csv", "--rank", "2", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let blue: Vec<f64> = text
        .lines()
        .find(|l| l.starts_with("blue,row"))
        .unwrap()
        .split(',')
        .skip(2)
        .take(2)
        .map(|v| v.parse().unwrap())
        .collect();
    // first row of the printed map: -0.400, -0.165
    let sign = blue[0].signum() * -1.0;
    assert!((sign * blue[0] + 0.400).abs() < 0.01);
    assert!((blue[1].abs() - 0.165).abs() < 0.01);
}

#[test]
fn wais_entry_is_significant() {
    let v = json(&lpstat(&["lpinfor", "--input", "wais.csv", "--m", "4", "--perm", "999", "--seed", "7"]));
    let lp21 = v["results"]["comoments"]["entries"][1][0].as_f64().unwrap();
    assert!((lp21 + 0.617).abs() < 0.002, "{lp21}");
    assert_eq!(v["results"]["comoments"]["significance"][1][0], Value::Bool(true));
    assert_eq!(v["seed"], 7);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["selection"], "threshold:1.96");
    let entry = v["results"]["entry_pvalues"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["j"] == 2 && e["k"] == 1)
        .unwrap();
    assert!(entry["pvalue"].as_f64().unwrap() <= 0.05);
}

#[test]
fn empty_stdin_is_a_data_error() {
    let out = lpstat_stdin(&["moments", "--input", "-"], "");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty input"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(lpstat(&["moments", "--bogus"]).status.code(), Some(1));
    assert_eq!(lpstat(&["moments", "--input", "/no/such/file.csv"]).status.code(), Some(1));
    assert_eq!(lpstat(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lpstat(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_cell_is_a_data_error() {
    let out = lpstat_stdin(&["moments", "--input", "-"], "x\n1\nabc\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn incompatible_plot_kind_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("p.csv");
    let out = lpstat(&["corresp", "--input", "fisher.csv", "--plot", "power", "--plot-out", plot.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn plot_files_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let input = pairs_file(&dir);
    let grid = dir.path().join("grid.csv");
    let out = lpstat(&["copula", "--input", &input, "--plot", "copula-grid", "--plot-out", grid.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&grid).unwrap();
    assert_eq!(text.lines().next(), Some("u,v,density"));
    assert_eq!(text.lines().count(), 1 + 101 * 101);

    let steps = dir.path().join("steps.csv");
    let out = lpstat(&["moments", "--input", "wais.csv", "--column", "2", "--plot", "scores", "--plot-out", steps.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&steps).unwrap().starts_with("u_left,u_right,j,value\n"));

    let power = dir.path().join("power.csv");
    let out = lpstat(&[
        "power-sim", "--patterns", "linear", "--noises", "e1", "--levels", "1", "--b-null", "50", "--b-alt", "50", "-n", "50",
        "--plot", "power", "--plot-out", power.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&power).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.contains("noise_level") && header.contains("method") && header.contains("power"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn verify_reproduces_saved_results() {
    let dir = tempfile::tempdir().unwrap();
    let input = pairs_file(&dir);
    let saved = dir.path().join("r.json");
    let runs: [&[&str]; 4] = [
        &["lpinfor", "--input", &input, "--perm", "99", "--seed", "5"],
        &["regress", "--input", &input, "--path", "sample", "--draws", "500", "--seed", "9"],
        &["copula", "--input", &input, "--form", "exp"],
        &["corresp", "--input", "fisher.csv", "--variant", "goodman"],
    ];
    for args in runs {
        let mut full = args.to_vec();
        full.extend(["--output", saved.to_str().unwrap()]);
        assert!(lpstat(&full).status.success(), "{args:?}");
        let out = lpstat(&["verify", "--input", saved.to_str().unwrap()]);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn verify_flags_tampered_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("r.json");
    assert!(lpstat(&["comoments", "--input", "wais.csv", "--output", saved.to_str().unwrap()]).status.success());
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&saved).unwrap()).unwrap();
    let x = v["results"]["entries"][0][0].as_f64().unwrap();
    v["results"]["entries"][0][0] = serde_json::json!(x + 1e-15);
    std::fs::write(&saved, serde_json::to_string(&v).unwrap()).unwrap();
    let out = lpstat(&["verify", "--input", saved.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn threads_env_fallback_is_accepted() {
    let out = Command::new(env!("CARGO_BIN_EXE_lpstat"))
        .args(["bench", "--ns", "500", "--repeats", "1"])
        .env("LPSTAT_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn stochastic_results_carry_seed_and_rule() {
    let dir = tempfile::tempdir().unwrap();
    let input = pairs_file(&dir);
    let v = json(&lpstat(&["regress", "--input", &input, "--path", "sample", "--draws", "200", "--seed", "11"]));
    assert_eq!(v["seed"], 11);
    assert!(v["selection"].as_str().unwrap().contains("threshold"));
    assert_eq!(v["config"]["seed"], 11);
    assert!(v["version"].is_string() && v["timestamp"].is_string());
}

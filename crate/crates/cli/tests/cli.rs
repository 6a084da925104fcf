use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aoi-tandem"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn aoi-tandem");
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_spec(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("spec.json");
    fs::write(&p, body).unwrap();
    p
}

const SPEC: &str = r#"{
  "model": "analytic_mg1",
  "lambda_grid": {"start": 0.05, "stop": 0.45, "step": 0.1},
  "alpha_values": [0.0, 0.5],
  "engines": ["analytic", "simulation"],
  "sim": {"horizon": 20000, "replications": 3}
}"#;

#[test]
fn sweep_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let out = dir.path().join("rows.csv");
    run_ok(bin().args(["sweep", "--config"]).arg(&spec).arg("--out").arg(&out));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,N,lambda,alpha,gamma,dist_kind,engine,aaoi,aaoi_ci_half,sojourn_mean,stable,runtime_sec"
    );
    assert_eq!(lines.count(), 2 * 5 * 2);
    // alpha = 0.5 makes lambda = 0.35, 0.45 unstable
    assert!(csv.contains("analytic_mg1,2,0.45,0.5,1,exp,analytic,,,,false,"));
    assert!(dir.path().join("rows.manifest.json").exists());
}

#[test]
fn sweep_is_byte_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    run_ok(bin().args(["sweep", "--config"]).arg(&spec).arg("--out").arg(&a));
    run_ok(bin().args(["--jobs", "1", "sweep", "--config"]).arg(&spec).arg("--out").arg(&b));
    run_ok(bin().args(["--seed", "99", "sweep", "--config"]).arg(&spec).arg("--out").arg(&c));
    let (a, b, c) = (fs::read(a).unwrap(), fs::read(b).unwrap(), fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn jsonl_format() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let out = dir.path().join("rows.jsonl");
    run_ok(bin().args(["--format", "jsonl", "sweep", "--config"]).arg(&spec).arg("--out").arg(&out));
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 20);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["engine"], "analytic");
}

#[test]
fn invalid_spec_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"model": "analytic_mg1", "alpha_values": [0.1, -2]}"#);
    let out = bin().args(["sweep", "--config"]).arg(&spec).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha_values[1]"));
}

#[test]
fn unwritable_output_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), SPEC);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&spec)
        .arg("--out")
        .arg(blocker.join("rows.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot write"));
}

#[test]
fn lambda_star_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"model": "analytic_mg1", "n_nodes": 1, "alpha_values": [0.0],
            "lambda_grid": {"start": 0.02, "stop": 0.98, "step": 0.02}}"#,
    );
    let out = run_ok(bin().args(["lambda-star", "--config"]).arg(&spec));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let l = v[0]["lambda_star"].as_f64().unwrap();
    assert!((l - 0.531).abs() < 1e-3, "{l}");
}

#[test]
fn reproduce_writes_figure_files() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        bin()
            .args(["reproduce", "fig4c", "--horizon", "5000", "--replications", "2", "--out"])
            .arg(dir.path()),
    );
    let csv = fs::read_to_string(dir.path().join("fig4c.csv")).unwrap();
    for kind in ["exp", "erlang2", "hyper2"] {
        assert!(csv.contains(&format!(",{kind},")), "{kind}");
    }
    assert!(dir.path().join("fig4c.manifest.json").exists());
}

#[test]
fn unknown_figure_and_suite_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["reproduce", "fig7", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["validate", "--suite", "nope", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn quick_validation_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(bin().args(["validate", "--suite", "quick", "--out"]).arg(dir.path()));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("eq7_boundary_a0.5"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    for row in report["rows"].as_array().unwrap() {
        assert!(row.get("measured_gap").is_some());
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccpfr"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/rts118.toml")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A document without the output paths it echoes.
fn content(path: &Path) -> serde_json::Value {
    let mut doc = json(path);
    doc["config"].as_object_mut().unwrap().remove("outputs");
    doc
}

const ONE_BUS: &str = r#"
slack_bus = 1

[[buses]]
id = 1
load = 100.0

[[generators]]
bus = 1
p_min = 0.0
p_max = 200.0
cost_quad = 1.0
cost_lin = 0.0
cost_const = 0.0
alpha1 = 1.0
alpha2 = 1.0
gamma = 0.1
"#;

fn one_bus(dir: &TempDir, load: f64) -> PathBuf {
    let path = dir.path().join(format!("one-bus-{load}.toml"));
    std::fs::write(&path, ONE_BUS.replace("load = 100.0", &format!("load = {load:.1}"))).unwrap();
    path
}

fn solve_fixture(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.path().join(name);
    let o = run(bin()
        .args(["solve", "--case"])
        .arg(fixture())
        .args(["--line-derate", "0.25", "--load-scale", "1.1", "--deadband", "100"])
        .args(extra)
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn solve_pfr_on_fixture() {
    let dir = TempDir::new().unwrap();
    let out = solve_fixture(&dir, "sol.json", &["--formulation", "ccopf-pfr", "--epsilon", "0.01"]);
    let doc = json(&out);
    assert_eq!(doc["solution"]["formulation"], "ccopf-pfr");
    assert_eq!(doc["solution"]["status"], "optimal");
    assert_eq!(doc["config"]["epsilon"], 0.01);
    assert_eq!(doc["config"]["deadband_mw"], 100.0);
    assert_eq!(doc["config"]["droops"]["alpha1"].as_array().unwrap().len(), 54);
    assert_eq!(doc["case_hash"].as_str().unwrap().len(), 64);
    assert_eq!(doc["solution"]["constraints"].as_array().unwrap().len(), 2 * 2 * (54 + 186));
}

#[test]
fn dcopf_on_one_bus() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sol.json");
    let o = run(bin().args(["solve", "--formulation", "dcopf", "--case"]).arg(one_bus(&dir, 100.0)).arg("--out").arg(&out));
    assert!(o.status.success());
    let objective = json(&out)["solution"]["objective"].as_f64().unwrap();
    assert!((objective - 10000.0).abs() < 1e-6);
    assert!(String::from_utf8_lossy(&o.stdout).contains("objective 10000.0000"));
}

#[test]
fn infeasible_dispatch_exits_one() {
    let dir = TempDir::new().unwrap();
    let o = run(bin().args(["solve", "--formulation", "dcopf", "--case"]).arg(one_bus(&dir, 300.0)));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_case_exits_two() {
    let o = run(bin().args(["solve", "--formulation", "dcopf", "--case", "no/such/case.toml"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/case.toml"));
}

#[test]
fn epsilon_is_checked() {
    let dir = TempDir::new().unwrap();
    let case = one_bus(&dir, 100.0);
    let o = run(bin().args(["solve", "--formulation", "ccopf", "--case"]).arg(&case));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().args(["solve", "--formulation", "ccopf", "--epsilon", "1.5", "--case"]).arg(&case));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!("case = {:?}\nformulation = \"dcopf\"\n", one_bus(&dir, 100.0).display().to_string()),
    )
    .unwrap();
    let out = dir.path().join("sol.json");
    let o = run(bin().args(["solve", "--config"]).arg(&config).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out)["solution"]["formulation"], "dcopf");

    std::fs::write(&config, "unknown_key = 1\n").unwrap();
    assert_eq!(run(bin().args(["solve", "--config"]).arg(&config)).status.code(), Some(2));
}

#[test]
fn validate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let sol = solve_fixture(&dir, "sol.json", &["--formulation", "ccopf", "--epsilon", "0.01"]);
    let mut reports = vec![];
    for k in 0..2 {
        let out = dir.path().join(format!("report{k}.json"));
        let o = run(bin().args(["validate", "--samples", "1", "--seed", "7", "--solution"]).arg(&sol).arg("--out").arg(&out));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(content(&out));
    }
    assert_eq!(reports[0], reports[1]);
    let doc = &reports[0];
    assert_eq!(doc["config"]["seed"], 7);
    assert_eq!(doc["report"]["n"], 1);
}

#[test]
fn unmodified_case_is_rejected() {
    let dir = TempDir::new().unwrap();
    let sol = solve_fixture(&dir, "sol.json", &["--formulation", "dcopf"]);
    let o = run(bin()
        .args(["validate", "--samples", "10", "--line-derate", "0", "--load-scale", "1", "--solution"])
        .arg(&sol));
    assert_eq!(o.status.code(), Some(3));
}

fn validate(dir: &TempDir, sol: &Path, seed: &str, name: &str) -> PathBuf {
    let out = dir.path().join(name);
    let o = run(bin().args(["validate", "--samples", "200", "--seed", seed, "--solution"]).arg(sol).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn compare_reports() {
    let dir = TempDir::new().unwrap();
    let sol = solve_fixture(&dir, "sol.json", &["--formulation", "ccopf", "--epsilon", "0.05"]);
    let a = validate(&dir, &sol, "42", "a.json");
    let b = validate(&dir, &sol, "43", "b.json");

    let o = run(bin().arg("compare").arg(&a).arg(&a).arg("--omit-timing"));
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("label,epsilon,objective,gap_pct,cost_mean,cost_std,sys_violation_rate,solve_seconds"));
    for line in lines {
        assert_eq!(line.split(',').nth(3), Some("0"));
        assert!(line.ends_with(','));
    }

    let o = run(bin().arg("compare").arg(&a).arg(&b));
    assert_eq!(o.status.code(), Some(4));

    let o = run(bin().arg("compare").arg(&a).arg(&a).args(["--labels", "only-one"]));
    assert_eq!(o.status.code(), Some(2));

    let plot = dir.path().join("plot.csv");
    let table = dir.path().join("table.csv");
    let o = run(bin().arg("compare").arg(&a).arg(&a).args(["--labels", "x,y", "--out"]).arg(&table).arg("--plot").arg(&plot));
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&table).unwrap().contains("\nx,0.05,"));
    assert!(std::fs::read_to_string(&plot).unwrap().starts_with("label,epsilon,cost_mean"));
}

#[test]
fn report_summarizes_documents() {
    let dir = TempDir::new().unwrap();
    let sol = solve_fixture(&dir, "sol.json", &["--formulation", "ccopf-pfr", "--epsilon", "0.1"]);
    let o = run(bin().arg("report").arg(&sol));
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("formulation ccopf-pfr") && text.contains("tightest"));

    let rep = validate(&dir, &sol, "1", "rep.json");
    let text = String::from_utf8(run(bin().arg("report").arg(&rep)).stdout).unwrap();
    assert!(text.contains("samples     200 (seed 1)"));
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let sol = solve_fixture(&dir, "sol.json", &["--formulation", "dcopf"]);
    let one = dir.path().join("one.json");
    let four = dir.path().join("four.json");
    assert!(run(bin().env("CCPFR_THREADS", "1").args(["validate", "--samples", "500", "--solution"]).arg(&sol).arg("--out").arg(&one)).status.success());
    assert!(run(bin().env("CCPFR_THREADS", "4").args(["validate", "--samples", "500", "--solution"]).arg(&sol).arg("--out").arg(&four)).status.success());
    assert_eq!(content(&one), content(&four));
}

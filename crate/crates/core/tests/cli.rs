mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::TIGHT_GROWTH;

const GOLDEN_HEADER: &str =
    "t,x1,x2,xhat1,xhat2,xd1,xd2,u1,u2,thetahat1,thetahat2,thetatilde1,thetatilde2,e1_1,e1_2,e2_1,e2_2,V,phase,sigma";

fn dwellsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwellsim")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = rows[0].iter().position(|h| h == name).unwrap();
    rows[1..].iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn default_run_writes_figure_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "d.json", "{}");
    let out = tmp.path().join("out");
    let o = dwellsim(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), GOLDEN_HEADER);
    assert_eq!(trace.lines().count(), 1 + 1801);

    let dwell = csv_rows(&out.join("dwell.csv"));
    assert_eq!(dwell[0], ["sigma", "denied_budget"]);
    let b = column(&dwell, "denied_budget");
    assert!(b.len() >= 3);
    assert!(b.windows(2).all(|w| w[0] < w[1]));
    assert!((b[0] - 3.0).abs() < 0.05);

    let sw = csv_rows(&out.join("switches.csv"));
    assert_eq!(sw[0], ["sigma", "kind", "t", "V", "theta_bound", "budget"]);
    assert_eq!(sw[1][1], "available");
    assert_eq!(sw[2][1], "denied");
}

#[test]
fn empty_horizon_gives_header_only_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "z.json", r#"{"engine": {"t_end": 0.0}}"#);
    let out = tmp.path().join("out");
    let o = dwellsim(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(out.join("trace.csv")).unwrap(), format!("{GOLDEN_HEADER}\n"));
    assert_eq!(std::fs::read_to_string(out.join("dwell.csv")).unwrap(), "sigma,denied_budget\n");
    assert_eq!(std::fs::read_to_string(out.join("switches.csv")).unwrap(), "sigma,kind,t,V,theta_bound,budget\n");
}

#[test]
fn seed_flag_changes_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "d.json", r#"{"engine": {"t_end": 4.0}}"#);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, seed) in [(&a, "1"), (&b, "2"), (&c, "1")] {
        let o = dwellsim(&["run", &cfg, "--seed", seed, "--out", dir.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |d: &Path| std::fs::read_to_string(d.join("trace.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (name, text, needle) in [
        ("unknown.json", r#"{"gains": {"k3": 1}}"#, "unknown field"),
        ("k1.json", r#"{"gains": {"k1": [0.5]}}"#, "λ_min(k1) must exceed L_f"),
        ("vu.json", r#"{"scheduler": {"v_u": 5.0, "eta": 3.0}}"#, "V_u < η²/2"),
        ("bad.json", "{not json", "config error"),
    ] {
        let cfg = write_config(tmp.path(), name, text);
        let o = dwellsim(&["run", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{name}: {err}");
    }
    let o = dwellsim(&["run", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn overrun_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let nominal = write_config(tmp.path(), "tight.json", TIGHT_GROWTH);
    let o = dwellsim(&["run", &nominal, "--out", tmp.path().join("n").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let over = write_config(
        tmp.path(),
        "over.json",
        &TIGHT_GROWTH.replace("\"available_floor\": 0.5", "\"available_floor\": 0.5, \"denied_scale\": 1.5"),
    );
    let o = dwellsim(&["run", &over, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("safety violation"));
}

fn sweep(dir: &Path, param: &str, values: &str) -> Vec<Vec<String>> {
    let cfg = write_config(dir, "s.json", "{}");
    let out = dir.join(format!("sweep_{param}"));
    let o = dwellsim(&["sweep", &cfg, "--param", param, "--values", values, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    csv_rows(&out.join("summary.csv"))
}

#[test]
fn sweep_disturbance_shortens_budgets() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = sweep(tmp.path(), "d_bar", "0,0.75,1.5");
    assert_eq!(
        rows[0],
        ["param", "value", "final_theta_tilde", "denied_completed", "mean_budget", "max_budget", "max_V", "status"]
    );
    let m = column(&rows, "max_budget");
    assert_eq!(m.len(), 3);
    assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
    for i in 0..3 {
        assert!(tmp.path().join(format!("sweep_d_bar/d_bar_{i}/trace.csv")).exists());
    }
}

#[test]
fn sweep_upper_level_extends_budgets() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = sweep(tmp.path(), "V_u", "300,1136");
    let m = column(&rows, "max_budget");
    assert!(m[1] > m[0], "{m:?}");
}

#[test]
fn single_value_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = sweep(tmp.path(), "k_theta", "5");
    let sw = csv_rows(&tmp.path().join("sweep_k_theta/k_theta_0/dwell.csv"));
    let cfg = write_config(tmp.path(), "r.json", "{}");
    let out = tmp.path().join("run");
    assert_eq!(dwellsim(&["run", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(sw, csv_rows(&out.join("dwell.csv")));
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("sweep_k_theta/k_theta_0/trace.csv")).unwrap(),
        std::fs::read_to_string(out.join("trace.csv")).unwrap()
    );
    let max_budget = column(&rows, "max_budget")[0];
    let run_max = column(&sw, "denied_budget").into_iter().fold(f64::MIN, f64::max);
    assert_eq!(max_budget, run_max);
}

#[test]
fn unknown_sweep_parameter_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.json", "{}");
    let o = dwellsim(&["sweep", &cfg, "--param", "gamma", "--values", "1,2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown sweep parameter"));
}

#[test]
fn variant_flag_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "d.json", r#"{"engine": {"t_end": 2.0}}"#);
    for v in ["cl", "ew", "expfilter"] {
        let o = dwellsim(&["run", &cfg, "--variant", v, "--out", tmp.path().join(v).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{v}");
    }
    let o = dwellsim(&["run", &cfg, "--variant", "rls"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn bundled_scenarios_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let text = std::fs::read_to_string(root.join("benchmark.json")).unwrap();
    let f = dwellsim::config::ScenarioFile::from_json(&text).unwrap();
    assert_eq!(f, dwellsim::config::ScenarioFile::default());
    let tight = dwellsim::config::ScenarioFile::from_json(TIGHT_GROWTH).unwrap();
    tight.build().unwrap();
}

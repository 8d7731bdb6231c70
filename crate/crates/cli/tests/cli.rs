use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

fn fixture() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/two_mode.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Run {
    code: i32,
    out: PathBuf,
    stderr: String,
    _dir: tempfile::TempDir,
}

fn run_text(cmd: &str, text: &str) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_isscert"))
        .args([cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    Run { code: o.status.code().unwrap(), out, stderr: String::from_utf8_lossy(&o.stderr).into_owned(), _dir: dir }
}

fn run(cmd: &str, cfg: &Value) -> Run {
    run_text(cmd, &serde_json::to_string(cfg).unwrap())
}

fn read(r: &Run, name: &str) -> String {
    std::fs::read_to_string(r.out.join(name)).unwrap()
}

fn scalar_lmi(a: f64) -> Value {
    let mut c = fixture();
    c["system"] = json!({"kind": "linear", "modes": {"p": {"A": [[a]], "B": [[1.0]], "J": [[0.5]], "H": [[0.0]]}}});
    c["signal"] = json!({"t0": 0.0, "instants": [1.0], "modes": ["p", "p"], "horizon": 2.0});
    c["dwell"] = json!({"tau": {"p": 0.5}, "delta": 0.2});
    c["lmi"] = json!({"stable": ["p"], "unstable": []});
    c.as_object_mut().unwrap().remove("certificate");
    c
}

#[test]
fn simulate_writes_trajectory() {
    let r = run("simulate", &fixture());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = read(&r, "trajectory.csv");
    assert!(csv.starts_with("t,mode,x1,jump_flag\n"));
    assert_eq!(csv.lines().filter(|l| l.ends_with(",1")).count(), 6);
}

#[test]
fn malformed_config_names_field() {
    let r = run_text("simulate", "{ \"system\": 3 }");
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("system"), "{}", r.stderr);
    let mut c = fixture();
    c["step"] = json!("small");
    let r = run("simulate", &c);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("`step`"), "{}", r.stderr);
}

#[test]
fn blow_up_flushes_partial_trajectory() {
    let mut c = fixture();
    c["system"] = json!({"kind": "polynomial", "modes": {"p": {"flow": [0.0, 0.0, 1.0]}}});
    c["signal"] = json!({"t0": 0.0, "instants": [], "modes": ["p"], "horizon": 2.0});
    c["x0"] = json!([1.0]);
    c["input"] = json!({"kind": "zero"});
    c.as_object_mut().unwrap().remove("certificate");
    let r = run("simulate", &c);
    assert_eq!(r.code, 2, "{}", r.stderr);
    let csv = read(&r, "trajectory.csv");
    let last: f64 = csv.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last - 1.0).abs() < 0.01, "{last}");
}

#[test]
fn certify_exit_codes() {
    let r = run("certify", &fixture());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let summary: Value = serde_json::from_str(&read(&r, "summary.json")).unwrap();
    assert_eq!(summary["violations"], 0);

    let mut c = fixture();
    c["certificate"]["psi"]["s"] = json!({"kind": "linear", "eta": 1.0});
    c["x0"] = json!([20.0]);
    let r = run("certify", &c);
    assert_eq!(r.code, 3);
    assert!(read(&r, "report.csv").lines().any(|l| l.starts_with("jump,")));

    let mut c = fixture();
    c["certificate"]["psi"]["u"] = json!({"kind": "linear", "eta": 0.5});
    let r = run("certify", &c);
    assert_eq!(r.code, 3);
    let report = read(&r, "report.csv");
    let times: Vec<&str> = report.lines().filter(|l| l.starts_with("dwell,")).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(times.len(), 3);
    assert!(times[0].starts_with("1.5"));

    let mut c = fixture();
    c["certificate"]["stable"] = json!(["s", "u"]);
    c["certificate"]["unstable"] = json!([]);
    assert_eq!(run("certify", &c).code, 4);
}

#[test]
fn construct_exit_codes() {
    let r = run("construct", &fixture());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = read(&r, "construct.csv");
    assert!(csv.starts_with("t,V,W,h\n"));
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[2] <= f[1] * (1.0 + 1e-12) + 1e-300);
        assert!(f[3] <= 0.0 && f[3] >= -2.0 - 1e-12);
    }

    let mut c = fixture();
    c["dwell"]["t_s"] = json!(0.0);
    assert_eq!(run("construct", &c).code, 3);

    let mut c = fixture();
    c["certificate"]["phi"] = json!({"s": {"kind": "power", "c": -2.0, "k": 0.5}, "u": {"kind": "power", "c": 2.0, "k": 0.5}});
    let r = run("construct", &c);
    assert_eq!(r.code, 4);
    assert!(r.stderr.contains("power"), "{}", r.stderr);
}

#[test]
fn bound_exit_codes() {
    let r = run("bound", &fixture());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&read(&r, "verdict.json")).unwrap();
    assert_eq!(v["violations"], 0);
    assert!(v["max_margin"].as_f64().unwrap() < 0.0);
    assert_eq!(read(&r, "bound.csv").lines().count(), 1 + 2 * 61);

    let mut c = fixture();
    c["dwell"]["t_s"] = json!(-5.0);
    let r = run("bound", &c);
    assert_eq!(r.code, 4);
    assert!(r.stderr.contains("negative"), "{}", r.stderr);
}

#[test]
fn lmi_exit_codes() {
    let r = run("lmi", &scalar_lmi(-1.0));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&read(&r, "lmi.json")).unwrap();
    assert_eq!(v["verdict"]["flow"]["p"]["ok"], true);
    assert_eq!(v["verdict"]["jump"]["p->p"]["ok"], true);

    assert_eq!(run("lmi", &scalar_lmi(0.0)).code, 5);

    let mut c = scalar_lmi(-1.0);
    c["lmi"]["certificate"] = json!({"M": {"p": [[1.0]]}, "Q": {"p": [[1.0]]}, "eta": {"p": -2.0}, "mu": {"p": 0.25}});
    assert_eq!(run("lmi", &c).code, 3);
    c["lmi"]["certificate"]["eta"]["p"] = json!(-1.0);
    assert_eq!(run("lmi", &c).code, 0);

    let mut c = fixture();
    c["system"]["modes"]["s"]["A"] = json!([[-1.0, 0.0], [0.0, -1.0]]);
    c["system"]["modes"]["s"]["B"] = json!([[1.0], [0.0]]);
    c["system"]["modes"]["s"]["J"] = json!([[1.0, 0.0], [0.0, 1.0]]);
    c["system"]["modes"]["s"]["H"] = json!([[0.0], [0.0]]);
    c["system"]["modes"] = json!({"s": c["system"]["modes"]["s"].clone()});
    c["signal"] = json!({"t0": 0.0, "instants": [], "modes": ["s"], "horizon": 1.0});
    c["x0"] = json!([1.0, 0.0]);
    c["lmi"] = json!({"stable": ["s"], "unstable": [], "certificate": {
        "M": {"s": [[1.0, 0.5], [0.0, 1.0]]}, "Q": {"s": [[1.0]]}, "eta": {"s": -1.0}, "mu": {"s": 1.0}}});
    let r = run("lmi", &c);
    assert_eq!(r.code, 4);
    assert!(r.stderr.contains("symmetric"), "{}", r.stderr);

    assert_eq!(run("lmi", &fixture()).code, 5);
}

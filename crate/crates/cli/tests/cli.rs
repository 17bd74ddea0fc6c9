use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nrdicke(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nrdicke"))
        .current_dir(dir)
        .env_remove("NRDICKE_WORKERS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&nrdicke(d.path(), &["--help"])), 0);
    let v = nrdicke(d.path(), &["--version"]);
    assert_eq!(code(&v), 0);
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &[],
        &["frobnicate"],
        &["stationary", "--phi", "1", "--lambda", "5", "--bogus", "1"],
        &["stationary", "--phi", "2pi/0", "--lambda", "5"],
        &["stationary", "--lambda", "5"],
        &["stationary", "--phi", "1", "--lambda", "5", "--gamma", "-1"],
        &["stability", "--phi", "0:pi:10", "--lambda", "0:80:10", "--np"],
        &["sweep", "--phi", "0:pi", "--lambda", "0:80:4", "-o", "x.jsonl"],
        &["compensate", "--phi", "pi/2", "--lambda", "30"],
        &["compensate", "--lambda", "30"],
        &["scaling", "--lambdas", "49,50", "--lambda-star", "50.4"],
        &["--config", "missing.json", "stationary"],
    ];
    for args in cases {
        let o = nrdicke(d.path(), args);
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn bad_worker_count_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nrdicke"))
        .current_dir(d.path())
        .env("NRDICKE_WORKERS", "many")
        .args(["stationary", "--phi", "1", "--lambda", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert_eq!(code(&nrdicke(d.path(), &["--workers", "0", "stationary", "--phi", "1", "--lambda", "5"])), 1);
}

#[test]
fn numerical_failure_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let o = nrdicke(
        d.path(),
        &["scaling", "--lambdas", "60,62,64,66", "--lambda-star", "50.45", "--t-end", "200", "-o", "s.csv"],
    );
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stationary_frustrated_point() {
    let d = tempfile::tempdir().unwrap();
    let o = nrdicke(d.path(), &["stationary", "--phi", "2pi/3", "--lambda", "75", "--gamma", "0", "-o", "r.jsonl"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("FSOP degeneracy 6"));
    let body = text(d.path(), "r.jsonl");
    let mut lines = body.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["format"], "nrdicke-roots");
    assert_eq!(header["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(header["params"]["phi"].as_f64().unwrap(), 2.0 * std::f64::consts::PI / 3.0);
    assert_eq!(header["label"]["degeneracy"], 6);
    let stable = lines
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|r| r["stable"] == true)
        .count();
    assert_eq!(stable, 6);
}

#[test]
fn rerunning_header_command_is_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let args = ["trajectory", "--phi", "2pi/3", "--lambda", "10.8", "--t-end", "20", "-o", "t.csv"];
    assert_eq!(code(&nrdicke(d.path(), &args)), 0);
    let first = text(d.path(), "t.csv");
    let cmd = first.lines().find_map(|l| l.strip_prefix("# command: ")).unwrap().to_string();
    let words: Vec<&str> = cmd.split_whitespace().skip(1).collect();
    assert_eq!(code(&nrdicke(d.path(), &words)), 0);
    assert_eq!(text(d.path(), "t.csv"), first);
    let rows = first.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 401);
}

#[test]
fn sweep_resume_and_worker_independence() {
    let d = tempfile::tempdir().unwrap();
    let base = ["sweep", "--phi", "0:pi:6", "--lambda", "0:80:6", "--gamma", "0", "-o", "m.jsonl"];
    assert_eq!(code(&nrdicke(d.path(), &base)), 0);
    let full = text(d.path(), "m.jsonl");
    assert_eq!(full.lines().count(), 1 + 36);
    let header: serde_json::Value = serde_json::from_str(full.lines().next().unwrap()).unwrap();
    assert!(header["command"].as_str().unwrap().starts_with("nrdicke sweep --phi 0:pi:6"));

    let partial: String = full.lines().take(15).map(|l| format!("{l}\n")).collect();
    fs::write(d.path().join("m.jsonl"), partial + "{\"index\": 14, \"ph").unwrap();
    let mut resumed: Vec<&str> = base.to_vec();
    resumed.push("--resume");
    assert_eq!(code(&nrdicke(d.path(), &resumed)), 0);
    assert_eq!(text(d.path(), "m.jsonl"), full);

    let mut two: Vec<&str> = base.to_vec();
    two.extend(["--workers", "2"]);
    assert_eq!(code(&nrdicke(d.path(), &two)), 0);
    let body = |s: &str| s.lines().skip(1).map(String::from).collect::<Vec<_>>();
    assert_eq!(body(&text(d.path(), "m.jsonl")), body(&full));

    let other = ["sweep", "--phi", "0:pi:6", "--lambda", "0:80:7", "--gamma", "0", "-o", "m.jsonl", "--resume"];
    assert_eq!(code(&nrdicke(d.path(), &other)), 1);
}

#[test]
fn config_file_mirrors_flags() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.json"),
        r#"{"command": "stationary", "phi": "2pi/3", "lambda": 54, "gamma": 0, "output": "a.jsonl"}"#,
    )
    .unwrap();
    assert_eq!(code(&nrdicke(d.path(), &["--config", "c.json"])), 0);
    let direct = ["stationary", "--phi", "2pi/3", "--lambda", "54", "--gamma", "0", "-o", "b.jsonl"];
    assert_eq!(code(&nrdicke(d.path(), &direct)), 0);
    let (a, b) = (text(d.path(), "a.jsonl"), text(d.path(), "b.jsonl"));
    let tail = |s: &str| s.lines().skip(1).map(String::from).collect::<Vec<_>>();
    assert_eq!(tail(&a), tail(&b));
    let ha: serde_json::Value = serde_json::from_str(a.lines().next().unwrap()).unwrap();
    let hb: serde_json::Value = serde_json::from_str(b.lines().next().unwrap()).unwrap();
    assert_eq!(ha["params"], hb["params"]);

    // Command-line flags override the file.
    assert_eq!(code(&nrdicke(d.path(), &["--config", "c.json", "stationary", "--lambda", "5"])), 0);
    let h: serde_json::Value = serde_json::from_str(text(d.path(), "a.jsonl").lines().next().unwrap()).unwrap();
    assert_eq!(h["params"]["lam"][1], 5.0);
}

#[test]
fn groundstate_map() {
    let d = tempfile::tempdir().unwrap();
    let o = nrdicke(d.path(), &["groundstate", "--phi", "0:pi:4", "--lambda", "75:75:2", "-o", "g.jsonl", "--csv", "g.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = text(d.path(), "g.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    // φ = π/3 and 2π/3 are fully frustrated, φ = 0 and π are not.
    assert!(rows[0].ends_with("SOP,2") && rows[7].ends_with("SOP,2"));
    assert!(rows[2].ends_with("FSOP,6") && rows[4].ends_with("FSOP,6"));
}

#[test]
fn compensation_plan_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let o = nrdicke(d.path(), &["compensate", "--phi", "2pi/3", "--lambda", "40", "--plan-out", "p.json", "-o", "r.json"]);
    assert_eq!(code(&o), 0);
    let plan: serde_json::Value = serde_json::from_str(&text(d.path(), "p.json")).unwrap();
    assert!((plan["pop_ratio"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((plan["freq_ratio"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let r: serde_json::Value = serde_json::from_str(&text(d.path(), "r.json")).unwrap();
    assert_eq!(r["params"]["weight"][1].as_f64().unwrap(), plan["pop_ratio"].as_f64().unwrap());

    let o = nrdicke(d.path(), &["compensate", "--plan", "p.json", "-o", "r2.json"]);
    assert_eq!(code(&o), 0);
    let r2: serde_json::Value = serde_json::from_str(&text(d.path(), "r2.json")).unwrap();
    assert_eq!(r2["plan"], r["plan"]);
    assert_eq!(r2["params"], r["params"]);
}

#[test]
fn np_spectrum_flow_reports_four_eps() {
    let d = tempfile::tempdir().unwrap();
    let o = nrdicke(
        d.path(),
        &["stability", "--np", "--lambda", "12", "--gamma", "0", "--phi", "0:pi:400", "-o", "f.csv", "--ep-out", "e.jsonl"],
    );
    assert_eq!(code(&o), 0);
    let flow = text(d.path(), "f.csv");
    assert!(flow.contains("param,re_1"));
    assert_eq!(flow.lines().filter(|l| !l.starts_with('#')).count(), 401);
    let eps: Vec<f64> = text(d.path(), "e.jsonl")
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["phi"].as_f64().unwrap())
        .collect();
    let want = [0.81991, 1.38403, 1.75756, 2.32168];
    assert_eq!(eps.len(), 4, "{eps:?}");
    for (e, w) in eps.iter().zip(want) {
        assert!((e - w).abs() < 1e-4, "{e} vs {w}");
    }
}

#[test]
fn classify_writes_verdict_trace_and_spectrum() {
    let d = tempfile::tempdir().unwrap();
    let o = nrdicke(
        d.path(),
        &[
            "classify", "--phi", "2pi/3", "--lambda", "10.8", "--t-end", "400", "-o", "v.json", "--trace", "tr.csv",
            "--spectrum", "sp.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&text(d.path(), "v.json")).unwrap();
    assert_eq!(v["verdict"]["kind"], "Chiral");
    assert_eq!(v["label"]["tag"], "DP");
    assert!(text(d.path(), "tr.csv").contains("t,a_re,a_im"));
    assert!(text(d.path(), "sp.csv").contains("freq,power"));
}

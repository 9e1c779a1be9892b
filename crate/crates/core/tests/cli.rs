use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_segrid");

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn segrid(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_into(out: &Path, extra: &[&str]) -> Output {
    let scen = scenario("synthetic_in_regime.toml");
    let mut args = vec!["run", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    segrid(&args)
}

#[test]
fn run_writes_all_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let case = dir.path().join("synthetic_in_regime");
    for f in [
        "report.json",
        "diagnostics.json",
        "follower_trace.csv",
        "leader_trace.csv",
        "plot_generator_strategy.csv",
        "plot_microgrid_generation.csv",
        "plot_bus_angles.csv",
        "scenario.toml",
    ] {
        assert!(case.join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(case.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "converged");
}

#[test]
fn emit_flags_suppress_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--no-traces", "--no-plots", "--no-diagnostics"]);
    assert_eq!(o.status.code(), Some(0));
    let names: Vec<_> = fs::read_dir(dir.path().join("synthetic_in_regime"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(names.contains(&"report.json".to_string()));
    assert!(!names.iter().any(|n| n.ends_with(".csv") || n == "diagnostics.json"), "{names:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let extra = ["--follower", "rua", "--leader", "kgd", "--seed", "9", "--noise-std", "1e-5"];
    run_into(a.path(), &extra);
    run_into(b.path(), &extra);
    for f in ["follower_trace.csv", "leader_trace.csv", "report.json"] {
        let x = fs::read(a.path().join("synthetic_in_regime").join(f)).unwrap();
        let y = fs::read(b.path().join("synthetic_in_regime").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn batch_run_gives_one_directory_per_scenario_and_worst_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (s1, s2) = (scenario("synthetic_in_regime.toml"), scenario("sixbus.toml"));
    let o = segrid(&[
        "run",
        "--scenario",
        s1.to_str().unwrap(),
        s2.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("synthetic_in_regime/report.json").is_file());
    assert!(dir.path().join("sixbus/report.json").is_file());
}

#[test]
fn check_reports_condition_and_exit_code() {
    let o = segrid(&["check", "--scenario", scenario("synthetic_in_regime.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PDA condition satisfied"), "{}", stdout(&o));
    let o = segrid(&["check", "--scenario", scenario("sixbus.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("not satisfied"));
}

#[test]
fn validate_passes_bundled_scenarios() {
    for name in ["sixbus.toml", "synthetic_in_regime.toml"] {
        let o = segrid(&["validate", "--scenario", scenario(name).to_str().unwrap()]);
        assert!(stdout(&o).contains("PASS"));
        assert!(!stdout(&o).lines().any(|l| l.starts_with("FAIL")), "{}", stdout(&o));
    }
}

#[test]
fn oracle_agrees_with_grid_search() {
    let o = segrid(&["oracle", "--scenario", scenario("synthetic_in_regime.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn replay_accepts_own_trace_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    run_into(dir.path(), &[]);
    let trace = dir.path().join("synthetic_in_regime/follower_trace.csv");
    let o = segrid(&["replay", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));

    let text = fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = &mut lines[3];
    let mut cells: Vec<String> = row.split(',').map(String::from).collect();
    let k = cells.len() - 2;
    cells[k] = "0".into();
    let idx = 1 + cells.iter().skip(1).position(|c| c.parse::<f64>().map_or(false, |v| v.abs() > 1.0)).unwrap();
    cells[idx] = format!("{}", cells[idx].parse::<f64>().unwrap() + 0.5);
    *row = cells.join(",");
    fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let o = segrid(&["replay", "--trace", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn invalid_inputs_exit_three_with_located_messages() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(scenario("synthetic_in_regime.toml")).unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };

    let bad_syntax = write("syntax.toml", &base.replacen("zeta = 4.64", "zeta = = 4.64", 1));
    let o = segrid(&["check", "--scenario", bad_syntax.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let line = base.lines().position(|l| l.starts_with("zeta")).unwrap() + 1;
    assert!(stderr(&o).contains(&format!("syntax.toml:{line}:")), "{}", stderr(&o));

    let negative = write("negative.toml", &base.replacen("reactance_pu = 0.073", "reactance_pu = -0.073", 1));
    let o = segrid(&["check", "--scenario", negative.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("Laplacian"), "{}", stderr(&o));

    let duplicate = write("duplicate.toml", &base.replacen("id = 2\n", "id = 4\n", 1));
    let o = segrid(&["check", "--scenario", duplicate.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("duplicate bus id 4"), "{}", stderr(&o));

    let o = segrid(&["check", "--scenario", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use segrid_ffi::*;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn load(name: &str) -> *mut SegridScenario {
    let path = CString::new(scenario_path(name).to_str().unwrap()).unwrap();
    let mut scen = ptr::null_mut();
    assert_eq!(unsafe { segrid_scenario_from_path(path.as_ptr(), &mut scen) }, SegridStatus::Ok);
    scen
}

fn last_error() -> String {
    let p = segrid_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn run_matches_the_library() {
    let scen = load("synthetic_in_regime.toml");
    let mut rep = ptr::null_mut();
    unsafe {
        assert_eq!(segrid_run(scen, &mut rep), SegridStatus::Ok);
        let mut status = SegridRunStatus::NotEquilibrium;
        assert_eq!(segrid_report_status(rep, &mut status), SegridStatus::Ok);
        assert_eq!(status, SegridRunStatus::Converged);

        let mut len = 0;
        assert_eq!(segrid_report_p_g(rep, ptr::null_mut(), 0, &mut len), SegridStatus::BufferTooSmall);
        assert_eq!(len, 2);
        let mut p_g = vec![0.0; len];
        assert_eq!(segrid_report_p_g(rep, p_g.as_mut_ptr(), len, &mut len), SegridStatus::Ok);
        let mut p_d = vec![0.0; 3];
        assert_eq!(segrid_report_p_d(rep, p_d.as_mut_ptr(), 3, &mut len), SegridStatus::Ok);
        let mut p_dg = vec![0.0; 3];
        assert_eq!(segrid_report_p_dg(rep, p_dg.as_mut_ptr(), 3, &mut len), SegridStatus::Ok);

        let cfg = segrid::scenario::ScenarioConfig::from_path(scenario_path("synthetic_in_regime.toml")).unwrap();
        let direct = segrid::engine::run_algorithm1(&cfg).unwrap();
        assert_eq!(p_g, direct.p_g_star);
        assert_eq!(p_d, direct.p_d_star);
        assert_eq!(p_dg, direct.p_dg_star);

        assert_eq!(json(rep)["status"], "converged");

        let mut cost = 0.0;
        assert_eq!(segrid_report_leader_cost(rep, &mut cost), SegridStatus::Ok);
        assert_eq!(cost, direct.leader_cost);

        segrid_report_free(rep);
        segrid_scenario_free(scen);
    }
}

#[test]
fn pda_check_and_dims() {
    let scen = load("sixbus.toml");
    unsafe {
        let (mut lhs, mut rhs, mut ok) = (0.0, 0.0, true);
        assert_eq!(segrid_check_pda(scen, &mut lhs, &mut rhs, &mut ok), SegridStatus::Ok);
        assert!(!ok && lhs >= rhs);
        let (mut d, mut g) = (0, 0);
        assert_eq!(segrid_scenario_dims(scen, &mut d, &mut g), SegridStatus::Ok);
        assert_eq!((d, g), (3, 2));
        segrid_scenario_free(scen);
    }
}

unsafe fn json(rep: *const SegridReport) -> serde_json::Value {
    let mut out: *mut c_char = ptr::null_mut();
    assert_eq!(segrid_report_to_json(rep, &mut out), SegridStatus::Ok);
    let value = serde_json::from_str(CStr::from_ptr(out).to_str().unwrap()).unwrap();
    segrid_string_free(out);
    value
}

#[test]
fn seed_override_changes_the_initial_point() {
    let scen = load("synthetic_in_regime.toml");
    unsafe {
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        segrid_run(scen, &mut a);
        assert_eq!(segrid_scenario_set_seed(scen, 77), SegridStatus::Ok);
        segrid_run(scen, &mut b);
        assert_ne!(json(a)["initial_generation"], json(b)["initial_generation"]);
        segrid_report_free(a);
        segrid_report_free(b);
        segrid_scenario_free(scen);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let mut scen = ptr::null_mut();
        let bad = CString::new("name = ").unwrap();
        assert_eq!(segrid_scenario_from_toml(bad.as_ptr(), &mut scen), SegridStatus::InvalidInput);
        assert!(last_error().contains("<scenario>:1:"), "{}", last_error());
        assert!(scen.is_null());

        assert_eq!(segrid_scenario_from_toml(ptr::null(), &mut scen), SegridStatus::NullPointer);
        let missing = CString::new("/nonexistent/scenario.toml").unwrap();
        assert_eq!(segrid_scenario_from_path(missing.as_ptr(), &mut scen), SegridStatus::InvalidInput);

        let invalid = [0xffu8, 0];
        assert_eq!(
            segrid_scenario_from_toml(invalid.as_ptr() as *const c_char, &mut scen),
            SegridStatus::InvalidUtf8
        );

        let mut rep = ptr::null_mut();
        assert_eq!(segrid_run(ptr::null(), &mut rep), SegridStatus::NullPointer);
        assert_eq!(last_error(), "scenario is null");

        let good = load("synthetic_in_regime.toml");
        assert!(segrid_last_error_message().is_null());
        segrid_scenario_free(good);
        segrid_scenario_free(ptr::null_mut());
        segrid_report_free(ptr::null_mut());
        segrid_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_exported_functions() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/segrid.h")).unwrap();
    for name in [
        "segrid_last_error_message",
        "segrid_scenario_from_toml",
        "segrid_scenario_from_path",
        "segrid_scenario_free",
        "segrid_scenario_dims",
        "segrid_scenario_set_seed",
        "segrid_check_pda",
        "segrid_run",
        "segrid_report_free",
        "segrid_report_status",
        "segrid_report_leader_cost",
        "segrid_report_p_g",
        "segrid_report_p_d",
        "segrid_report_p_dg",
        "segrid_report_to_json",
        "segrid_string_free",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct SegridScenario SegridScenario;"));
}

#[test]
fn c_program_links_against_the_static_library() {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib_dir = deps.parent().unwrap();
    let lib = lib_dir.join("libsegrid_ffi.a");
    if !lib.is_file() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).arg(scenario_path("synthetic_in_regime.toml")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("status=0 n_d=3 n_g=2 "), "{text}");
}

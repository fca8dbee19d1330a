use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use wbc_ffi::*;

const SCENARIO: &str = r#"{
    "dimension": 2,
    "agents": 4,
    "seed": 3,
    "initial": {"preset": {"kind": "random_gaussian"}},
    "schedule": {"generator": {"kind": "random_jointly_connected", "L": 3, "delta": 0.1}},
    "stop": {"max_rounds": 300, "diameter_threshold": 1e-8}
}"#;

fn last_error() -> String {
    let p = wbc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_sim(json: &str) -> *mut WbcSimulation {
    let text = CString::new(json).unwrap();
    let mut sim = ptr::null_mut();
    let status = unsafe { wbc_simulation_from_json(text.as_ptr(), &mut sim) };
    assert_eq!(status, WbcStatus::Ok, "{}", last_error());
    sim
}

#[test]
fn step_and_run_through_handles() {
    let sim = new_sim(SCENARIO);
    unsafe {
        assert_eq!(wbc_simulation_agent_count(sim), 4);
        let mut m0 = WbcMetrics::default();
        assert_eq!(wbc_simulation_metrics(sim, &mut m0), WbcStatus::Ok);
        assert_eq!(m0.t, 0);

        assert_eq!(wbc_simulation_step(sim), WbcStatus::Ok);
        let mut m1 = WbcMetrics::default();
        wbc_simulation_metrics(sim, &mut m1);
        assert_eq!(m1.t, 1);
        assert!(m1.v2_max <= m0.v2_max + 1e-9);
        assert!(m1.max_jensen_residual <= 1e-8);

        let mut v2 = [0.0; 4];
        assert_eq!(wbc_simulation_v2(sim, v2.as_mut_ptr(), 4), WbcStatus::Ok);
        assert_eq!(v2.iter().copied().fold(f64::NEG_INFINITY, f64::max), m1.v2_max);
        assert_eq!(wbc_simulation_v2(sim, v2.as_mut_ptr(), 3), WbcStatus::BufferTooSmall);

        let mut summary = WbcRunSummary::default();
        assert_eq!(wbc_simulation_run(sim, &mut summary), WbcStatus::Ok);
        assert!(summary.converged);
        assert!(summary.final_diameter <= 1e-8);
        let mut m = WbcMetrics::default();
        wbc_simulation_metrics(sim, &mut m);
        assert_eq!(m.t, summary.rounds);

        let json = wbc_simulation_state_json(sim);
        assert!(!json.is_null());
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        wbc_string_free(json);
        let state: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(state["t"].as_u64().unwrap() as usize, summary.rounds);
        assert_eq!(state["agents"].as_array().unwrap().len(), 4);

        wbc_simulation_free(sim);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut sim = ptr::null_mut();
    let status = unsafe { wbc_simulation_from_json(ptr::null(), &mut sim) };
    assert_eq!(status, WbcStatus::NullPointer);
    assert!(sim.is_null());

    let bad = CString::new(SCENARIO.replace("\"agents\": 4", "\"agents\": 1")).unwrap();
    let status = unsafe { wbc_simulation_from_json(bad.as_ptr(), &mut sim) };
    assert_eq!(status, WbcStatus::Config);
    assert!(last_error().contains("agents"));

    let missing = CString::new("/nonexistent/scenario.json").unwrap();
    let status = unsafe { wbc_simulation_from_file(missing.as_ptr(), &mut sim) };
    assert_eq!(status, WbcStatus::Config);

    let mut m = WbcMetrics::default();
    assert_eq!(unsafe { wbc_simulation_metrics(ptr::null_mut(), &mut m) }, WbcStatus::NullPointer);
    assert_eq!(unsafe { wbc_simulation_agent_count(ptr::null()) }, 0);
    unsafe { wbc_simulation_free(ptr::null_mut()) };
}

#[test]
fn explicit_schedule_runs_out_of_rounds() {
    let json = SCENARIO.replace(
        r#"{"generator": {"kind": "random_jointly_connected", "L": 3, "delta": 0.1}}"#,
        r#"{"fixed": {"weights": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]], "delta": 0.5}}"#,
    );
    let json = json.replace("\"max_rounds\": 300", "\"max_rounds\": 2");
    let sim = new_sim(&json);
    unsafe {
        assert_eq!(wbc_simulation_step(sim), WbcStatus::Ok);
        assert_eq!(wbc_simulation_step(sim), WbcStatus::Ok);
        assert_eq!(wbc_simulation_step(sim), WbcStatus::Schedule);
        assert!(last_error().contains("round 2"));
        wbc_simulation_free(sim);
    }
}

#[test]
fn gaussian_distance_matches_closed_form() {
    // d = 1: W₂² = (m₁ − m₂)² + (σ₁ − σ₂)².
    let (ma, ca, mb, cb) = ([1.0], [4.0], [-2.0], [9.0]);
    let mut out = 0.0;
    let status = unsafe { wbc_w2_gaussian(1, ma.as_ptr(), ca.as_ptr(), mb.as_ptr(), cb.as_ptr(), &mut out) };
    assert_eq!(status, WbcStatus::Ok);
    assert!((out - 10f64.sqrt()).abs() <= 1e-12);

    let not_psd = [1.0, 2.0, 2.0, 1.0];
    let id = [1.0, 0.0, 0.0, 1.0];
    let m = [0.0, 0.0];
    let status = unsafe { wbc_w2_gaussian(2, m.as_ptr(), not_psd.as_ptr(), m.as_ptr(), id.as_ptr(), &mut out) };
    assert_eq!(status, WbcStatus::InvalidArgument);
    assert!(last_error().contains("semidefinite"));
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(wbc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests/<name>-<hash> lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("wbc.h").is_file());
    let lib = target_dir().join("libwbc_ffi.a");
    let dir = tempfile_dir();
    let src = dir.join("probe.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "wbc.h"
int main(void) {
    double ma[1] = {1.0}, ca[1] = {4.0}, mb[1] = {-2.0}, cb[1] = {9.0}, out = 0.0;
    if (wbc_w2_gaussian(1, ma, ca, mb, cb, &out) != WBC_STATUS_OK) return 1;
    WbcSimulation *sim = NULL;
    if (wbc_simulation_from_json("{", &sim) != WBC_STATUS_CONFIG) return 2;
    if (wbc_last_error() == NULL) return 3;
    printf("%.12f %s\n", out, wbc_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("probe");
    let mut cmd = Command::new(&cc);
    cmd.arg("-std=c99").arg("-Wall").arg("-Werror").arg("-I").arg(&header_dir).arg(&src);
    if lib.is_file() {
        cmd.arg(&lib).args(["-lpthread", "-ldl", "-lm"]).arg("-o").arg(&exe);
    } else {
        cmd.arg("-fsyntax-only");
    }
    let status = cmd.status().unwrap();
    assert!(status.success(), "C compile failed");
    if lib.is_file() {
        let out = Command::new(&exe).output().unwrap();
        assert!(out.status.success(), "probe exited with {:?}", out.status);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with(&format!("{:.12}", 10f64.sqrt())), "{text}");
    }
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc.to_string());
        }
    }
    Err(())
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wbc-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

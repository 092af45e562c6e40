use std::ffi::{CStr, CString};
use std::ptr;

use thsq::*;

const SCENARIO: &str = r#"
name = "ffi_rabi"
mode = "evolve-p"

[grid]
t_end = 1.5707963267948966
steps = 1000
samples = 5

[matrices]
sx = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]

[states]
up = [[1.0, 0.0], [0.0, 0.0]]

[hamiltonian]
base = "sx"

[evolve]
initial = "up"
"#;

fn last_error() -> String {
    let p = thsq_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(thsq_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn parse_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = CString::new(SCENARIO).unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(thsq_scenario_parse(text.as_ptr(), 0, &mut scenario), ThsqStatus::Ok);
        assert!(thsq_last_error().is_null());
        assert_eq!(thsq_scenario_dim(scenario), 2);

        let mut report = ptr::null_mut();
        assert_eq!(
            thsq_scenario_run(scenario, out_dir.as_ptr(), &mut report),
            ThsqStatus::Ok
        );
        let key = CString::new("norm_drift").unwrap();
        let mut drift = f64::NAN;
        assert_eq!(thsq_report_value(report, key.as_ptr(), &mut drift), ThsqStatus::Ok);
        assert!(drift < 1e-10);

        let needed = thsq_report_summary(report, ptr::null_mut(), 0);
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(thsq_report_summary(report, buf.as_mut_ptr(), buf.len()), needed);
        let line = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert!(line.starts_with("name=ffi_rabi mode=evolve-p"), "{line}");

        let missing = CString::new("fidelity").unwrap();
        assert_eq!(
            thsq_report_value(report, missing.as_ptr(), &mut drift),
            ThsqStatus::InvalidArgument
        );

        thsq_report_free(report);
        thsq_scenario_free(scenario);
    }
    assert!(dir.path().join("ffi_rabi.csv").exists());
}

#[test]
fn parse_errors_carry_status_and_message() {
    let bad = CString::new(SCENARIO.replace("base = \"sx\"", "base = \"H9\"")).unwrap();
    let mut scenario = ptr::null_mut();
    let status = unsafe { thsq_scenario_parse(bad.as_ptr(), 0, &mut scenario) };
    assert_eq!(status, ThsqStatus::ValidationError);
    assert!(scenario.is_null());
    assert!(last_error().contains("H9"));

    let garbage = CString::new("name = ").unwrap();
    assert_eq!(
        unsafe { thsq_scenario_parse(garbage.as_ptr(), 0, &mut scenario) },
        ThsqStatus::ParseError
    );
    assert!(last_error().starts_with("ParseError"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            thsq_dieudonne_residual(ptr::null(), ptr::null(), 2, &mut out),
            ThsqStatus::NullPointer
        );
        assert_eq!(
            thsq_scenario_parse(ptr::null(), 0, ptr::null_mut()),
            ThsqStatus::NullPointer
        );
        thsq_scenario_free(ptr::null_mut());
        thsq_report_free(ptr::null_mut());
        assert_eq!(thsq_scenario_dim(ptr::null()), 0);
    }
}

#[test]
fn dimer_metric_through_the_abi() {
    let h = [0.0, 0.0, 2.0, 0.0, 0.5, 0.0, 0.0, 0.0];
    let mut theta = [0.0; 8];
    let mut residual = f64::NAN;
    unsafe {
        assert_eq!(
            thsq_solve_metric(h.as_ptr(), 2, ptr::null(), theta.as_mut_ptr()),
            ThsqStatus::Ok
        );
        assert_eq!(
            thsq_dieudonne_residual(h.as_ptr(), theta.as_ptr(), 2, &mut residual),
            ThsqStatus::Ok
        );
    }
    let expected = [0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 1.6, 0.0];
    for (a, b) in theta.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{theta:?}");
    }
    assert!(residual < 1e-12);
}

#[test]
fn complex_spectrum_is_a_numerical_error() {
    // [[0, 1], [-1, 0]] has eigenvalues ±i.
    let h = [0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0];
    let mut theta = [0.0; 8];
    let status = unsafe { thsq_solve_metric(h.as_ptr(), 2, ptr::null(), theta.as_mut_ptr()) };
    assert_eq!(status, ThsqStatus::NumericalError);
    assert!(last_error().starts_with("ComplexSpectrum"));
}

#[test]
fn lie_rank_and_fidelity() {
    let sx = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let sz = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0];
    let ops: Vec<f64> = sx.iter().chain(&sz).copied().collect();
    let mut rank = 0usize;
    assert_eq!(unsafe { thsq_lie_rank(ops.as_ptr(), 2, 2, &mut rank) }, ThsqStatus::Ok);
    assert_eq!(rank, 3);

    let identity = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let plus = [1.0, 0.0, 1.0, 0.0];
    let up = [1.0, 0.0, 0.0, 0.0];
    let mut f = f64::NAN;
    let status = unsafe { thsq_fidelity(up.as_ptr(), plus.as_ptr(), identity.as_ptr(), 2, &mut f) };
    assert_eq!(status, ThsqStatus::Ok);
    assert!((f - 0.5).abs() < 1e-15);
}

#[test]
fn errors_are_thread_local() {
    let bad = CString::new("name = ").unwrap();
    let mut scenario = ptr::null_mut();
    unsafe { thsq_scenario_parse(bad.as_ptr(), 0, &mut scenario) };
    assert!(!thsq_last_error().is_null());
    std::thread::spawn(|| assert!(thsq_last_error().is_null()))
        .join()
        .unwrap();
}

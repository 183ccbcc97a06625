// SPDX-License-Identifier: Apache-2.0

use std::ffi::{CStr, CString};
use std::ptr;

use gaugebench_ffi::*;

const LOSS: &str = "\
[lattice]
sites = 2

[hamiltonian]
hopping = 1
interaction = 4
chemical_potential = 2

[dissipators]
loss[r]: 0.2 * c(r,dn)*c(r,up)
";

fn model(text: &str) -> *mut GbModel {
    let c = CString::new(text).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { gb_model_parse(c.as_ptr(), &mut m) }, GbStatus::Ok);
    m
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(gb_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn parse_and_classify() {
    let m = model(LOSS);
    let mut sites = 0;
    let mut class = GbSymmetryClass::None;
    let mut norms = [f64::NAN; 3];
    unsafe {
        assert_eq!(gb_model_num_sites(m, &mut sites), GbStatus::Ok);
        assert_eq!(gb_model_classify(m, &mut class, norms.as_mut_ptr()), GbStatus::Ok);
        gb_model_free(m);
    }
    assert_eq!(sites, 2);
    assert_eq!(class, GbSymmetryClass::Weak);
    assert!(norms[0] < 1e-10 && norms[1] > 1.0 && norms[2] < 1e-10);
}

#[test]
fn parse_error_reports_position() {
    let c = CString::new("[lattice]\nsites = 2\n[dissipators]\nx: 1 * c(5,up)\n").unwrap();
    let mut m = ptr::null_mut();
    let s = unsafe { gb_model_parse(c.as_ptr(), &mut m) };
    assert_eq!(s, GbStatus::ParseError);
    assert!(m.is_null());
    assert!(last_error().starts_with("4:"), "{}", last_error());
}

#[test]
fn null_arguments() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { gb_model_parse(ptr::null(), &mut m) }, GbStatus::NullPointer);
    assert_eq!(unsafe { gb_model_num_sites(ptr::null(), ptr::null_mut()) }, GbStatus::NullPointer);
    assert_eq!(
        unsafe { gb_greens(0.1, 0.2, 0.3, 0.1, GbGreensKind::Retarded, ptr::null_mut()) },
        GbStatus::NullPointer
    );
    unsafe {
        gb_model_free(ptr::null_mut());
        gb_trajectory_free(ptr::null_mut());
        gb_bcs_free(ptr::null_mut());
    }
}

#[test]
fn simulate_block_state_keeps_on_zero() {
    let m = model(LOSS);
    let mut t = ptr::null_mut();
    let mut len = 0;
    let mut last = GbStepRecord::default();
    unsafe {
        assert_eq!(gb_simulate(m, GbInit::Block, 1, 5.0, 0.05, &mut t), GbStatus::Ok);
        assert_eq!(gb_trajectory_len(t, &mut len), GbStatus::Ok);
        assert_eq!(gb_trajectory_record(t, len - 1, &mut last), GbStatus::Ok);
        assert_eq!(gb_trajectory_record(t, len, &mut last), GbStatus::InvalidArgument);
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("t.csv").to_str().unwrap()).unwrap();
        assert_eq!(gb_trajectory_write_csv(t, path.as_ptr()), GbStatus::Ok);
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert!(text.starts_with("t,N,ON_direct,ON_vec,ON_swap,trace,residual_max"));
        gb_trajectory_free(t);
        gb_model_free(m);
    }
    assert_eq!(len, 101);
    assert!((last.t - 5.0).abs() < 1e-12);
    assert!(last.on_direct.abs() < 1e-9 && last.on_vectorized.abs() < 1e-9 && last.on_swap.abs() < 1e-9);
    assert!((last.trace - 1.0).abs() < 1e-10);
}

#[test]
fn capacity_is_reported() {
    let m = model("[lattice]\nsites = 4\n[hamiltonian]\nhopping = 1\n");
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { gb_simulate(m, GbInit::Vacuum, 0, 1.0, 0.1, &mut t) }, GbStatus::CapacityExceeded);
    assert!(t.is_null());
    unsafe { gb_model_free(m) };
}

#[test]
fn bcs_closed_system_is_stationary() {
    let cfg = GbBcsConfig { grid: 64, cutoff: 3.0, mu: 0.5, coupling: 2.0, gamma: 0.0, dt: 0.05, t_final: 2.0 };
    let mut t = ptr::null_mut();
    let (mut len, mut first, mut last) = (0, GbBcsRecord::default(), GbBcsRecord::default());
    unsafe {
        assert_eq!(gb_bcs_run(&cfg, &mut t), GbStatus::Ok);
        gb_bcs_len(t, &mut len);
        gb_bcs_record(t, 0, &mut first);
        gb_bcs_record(t, len - 1, &mut last);
        gb_bcs_free(t);
    }
    let abs = |r: &GbBcsRecord| r.delta_re.hypot(r.delta_im);
    assert!((abs(&first) - abs(&last)).abs() < 1e-9);
    assert!((first.n - last.n).abs() < 1e-9);
}

#[test]
fn response_entry_points() {
    let mut g = [0.0; 8];
    assert_eq!(unsafe { gb_greens(0.3, 0.7, 0.0, 1e-9, GbGreensKind::Retarded, g.as_mut_ptr()) }, GbStatus::Ok);
    assert!((g[0] - 1.0 / (0.3 - 0.7)).abs() < 1e-6);
    assert_eq!(g[2], 0.0);
    assert_eq!(
        unsafe { gb_greens(0.7, 0.7, 0.0, 0.0, GbGreensKind::Retarded, g.as_mut_ptr()) },
        GbStatus::NumericalFailure
    );

    let mut s = GbWtSummary::default();
    assert_eq!(unsafe { gb_wt_check(200, 5, &mut s) }, GbStatus::Ok);
    assert!(s.max_residual < 1e-12 && s.gauge_shift_max_delta < 1e-14 && s.transversality_max < 1e-14);
    assert_eq!(unsafe { gb_wt_check(0, 5, &mut s) }, GbStatus::InvalidArgument);

    let mut d = 0.0;
    assert_eq!(unsafe { gb_diffusion_analytic(0.1, 1.0, 1.0, 0.0, &mut d) }, GbStatus::InvalidArgument);
    assert_eq!(unsafe { gb_diffusion_analytic(0.0, 1.0, 1.0, 0.1, &mut d) }, GbStatus::Ok);
    assert_eq!(d, 0.0);

    let mut v = 0.0;
    assert_eq!(unsafe { gb_sound_velocity(0.05, 128, 3.0, 0.5, 0.005, 0.01, 2, &mut v) }, GbStatus::Ok);
    assert!((v * 3f64.sqrt() - 1.0).abs() < 0.03, "{v}");
}

#[test]
fn schema_version_matches_core() {
    assert_eq!(gb_schema_version(), gaugebench::SCHEMA_VERSION);
}

//! Exercises the C ABI exactly as a C caller would: raw pointers, status
//! codes, and the generated header.

// Frozen reference constants keep every digit of their source values.
#![allow(clippy::excessive_precision)]

use std::ffi::CStr;
use std::path::Path;
use std::ptr;

use chemokin_ffi::*;

fn default_params() -> ChemoParams {
    let mut p = std::mem::MaybeUninit::<ChemoParams>::uninit();
    let status = unsafe { chemo_params_default(p.as_mut_ptr()) };
    assert_eq!(status, ChemoStatus::ChemoStatusOk);
    unsafe { p.assume_init() }
}

fn compute_closure(params: &ChemoParams, g_spatial: f64) -> *mut ChemoClosure {
    let mut handle: *mut ChemoClosure = ptr::null_mut();
    let status = unsafe { chemo_closure_compute(params, g_spatial, &mut handle) };
    assert_eq!(status, ChemoStatus::ChemoStatusOk);
    assert!(!handle.is_null());
    handle
}

#[test]
fn version_and_default_params_are_sane() {
    let version = unsafe { CStr::from_ptr(chemo_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));

    let p = default_params();
    assert!((p.v0 - 16.5 / 2.0_f64.sqrt()).abs() < 1e-12);
    assert_eq!(p.k_r, 0.005);
    assert_eq!(p.a0, 0.5);
}

#[test]
fn closure_handle_exposes_profile_quantities() {
    let p = default_params();
    let h = compute_closure(&p, 5e-4);

    let g = unsafe { chemo_closure_g(h) };
    assert!((g - 0.68630952291635494).abs() < 1e-12);

    let kappa = unsafe { chemo_closure_kappa(h) };
    assert!(kappa > 0.0 && kappa < p.v0);

    let fp = unsafe { chemo_closure_frac_plus(h) };
    let fm = unsafe { chemo_closure_frac_minus(h) };
    assert!((fp + fm - 1.0).abs() < 1e-9);
    assert!((kappa - p.v0 * (fp - fm)).abs() < 1e-9);

    let (mut lo, mut hi) = (f64::NAN, f64::NAN);
    let status = unsafe { chemo_closure_support(h, &mut lo, &mut hi) };
    assert_eq!(status, ChemoStatus::ChemoStatusOk);
    assert!((lo - 0.15684523854182253).abs() < 1e-12);
    assert!((hi - (1.0 - lo)).abs() < 1e-12);

    let (mut dp, mut dm) = (0.0, 0.0);
    let status = unsafe { chemo_closure_density(h, 0.5, &mut dp, &mut dm) };
    assert_eq!(status, ChemoStatus::ChemoStatusOk);
    assert!(dp > 0.0 && dm > 0.0);

    unsafe { chemo_closure_free(h) };
}

#[test]
fn closure_bin_masses_sum_to_the_direction_fractions() {
    let p = default_params();
    let h = compute_closure(&p, 1e-3);

    let (mut lo, mut hi) = (0.0, 0.0);
    unsafe { chemo_closure_support(h, &mut lo, &mut hi) };
    let n_bins = 48;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| lo + (hi - lo) * i as f64 / n_bins as f64)
        .collect();
    let mut mp = vec![0.0; n_bins];
    let mut mm = vec![0.0; n_bins];
    let status = unsafe {
        chemo_closure_bin_masses(h, edges.as_ptr(), edges.len(), mp.as_mut_ptr(), mm.as_mut_ptr())
    };
    assert_eq!(status, ChemoStatus::ChemoStatusOk);

    let fp = unsafe { chemo_closure_frac_plus(h) };
    let fm = unsafe { chemo_closure_frac_minus(h) };
    assert!((mp.iter().sum::<f64>() - fp).abs() < 1e-6);
    assert!((mm.iter().sum::<f64>() - fm).abs() < 1e-6);

    unsafe { chemo_closure_free(h) };
}

#[test]
fn null_pointers_and_bad_arguments_set_the_thread_error() {
    let p = default_params();

    let status = unsafe { chemo_closure_compute(&p, 1e-3, ptr::null_mut()) };
    assert_eq!(status, ChemoStatus::ChemoStatusNullPointer);
    let msg = unsafe { CStr::from_ptr(chemo_last_error()) };
    assert!(msg.to_str().unwrap().contains("null"));

    // g = 1 exactly is the degenerate boundary case.
    let mut handle: *mut ChemoClosure = ptr::null_mut();
    let g_critical = 1.0 / (p.v0 / p.k_r / p.alpha0);
    let status = unsafe { chemo_closure_compute(&p, g_critical, &mut handle) };
    assert_eq!(status, ChemoStatus::ChemoStatusSingular);
    assert!(handle.is_null());
    let msg = unsafe { CStr::from_ptr(chemo_last_error()) };
    assert!(!msg.to_bytes().is_empty());

    assert!(unsafe { chemo_closure_kappa(ptr::null()) }.is_nan());
    assert_eq!(unsafe { chemo_ensemble_n_agents(ptr::null()) }, 0);
    unsafe {
        chemo_closure_free(ptr::null_mut());
        chemo_ensemble_free(ptr::null_mut());
    }
}

#[test]
fn ensembles_step_deterministically_for_a_fixed_seed() {
    let p = default_params();
    let mut a: *mut ChemoEnsemble = ptr::null_mut();
    let mut b: *mut ChemoEnsemble = ptr::null_mut();
    unsafe {
        assert_eq!(
            chemo_ensemble_new(&p, 1e-3, 400, 7, &mut a),
            ChemoStatus::ChemoStatusOk
        );
        assert_eq!(
            chemo_ensemble_new(&p, 1e-3, 400, 7, &mut b),
            ChemoStatus::ChemoStatusOk
        );
        assert_eq!(chemo_ensemble_n_agents(a), 400);

        assert_eq!(chemo_ensemble_step(a, 0.01, 500), ChemoStatus::ChemoStatusOk);
        assert_eq!(chemo_ensemble_step(b, 0.01, 500), ChemoStatus::ChemoStatusOk);
        assert_eq!(chemo_ensemble_drift(a), chemo_ensemble_drift(b));

        let frac = chemo_ensemble_fraction_in(a, 0.0, 1.0);
        assert_eq!(frac, 1.0);

        chemo_ensemble_free(a);
        chemo_ensemble_free(b);
    }
}

#[test]
fn run_steady_reports_partial_statistics_on_timeout() {
    let p = default_params();
    let mut h: *mut ChemoEnsemble = ptr::null_mut();
    unsafe {
        assert_eq!(
            chemo_ensemble_new(&p, 1e-3, 200, 3, &mut h),
            ChemoStatus::ChemoStatusOk
        );
        let mut stats = std::mem::MaybeUninit::<ChemoSteadyStats>::uninit();
        // An impossible tolerance forces the time budget to run out.
        let status = chemo_ensemble_run_steady(h, 0.02, 100, 0.0, 5.0, stats.as_mut_ptr());
        assert_eq!(status, ChemoStatus::ChemoStatusTimeout);
        let stats = stats.assume_init();
        assert_eq!(stats.converged, 0);
        assert!(stats.elapsed >= 5.0);
        assert!(stats.windows >= 1);
        assert!(stats.drift_mean.is_finite());

        // The handle stays usable after a timeout.
        assert_eq!(chemo_ensemble_step(h, 0.01, 10), ChemoStatus::ChemoStatusOk);
        chemo_ensemble_free(h);
    }
}

#[test]
fn ensemble_histogram_is_a_jointly_normalised_density() {
    let p = default_params();
    let mut h: *mut ChemoEnsemble = ptr::null_mut();
    unsafe {
        assert_eq!(
            chemo_ensemble_new(&p, 1e-3, 1000, 11, &mut h),
            ChemoStatus::ChemoStatusOk
        );
        chemo_ensemble_step(h, 0.02, 200);

        let n_bins = 20;
        let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect();
        let mut dp = vec![0.0; n_bins];
        let mut dm = vec![0.0; n_bins];
        let status = chemo_ensemble_histogram(
            h,
            edges.as_ptr(),
            edges.len(),
            dp.as_mut_ptr(),
            dm.as_mut_ptr(),
        );
        assert_eq!(status, ChemoStatus::ChemoStatusOk);
        let da = 1.0 / n_bins as f64;
        let total: f64 = dp.iter().chain(&dm).map(|d| d * da).sum();
        assert!((total - 1.0).abs() < 1e-9);

        let status = chemo_ensemble_histogram(
            h,
            edges.as_ptr(),
            1,
            dp.as_mut_ptr(),
            dm.as_mut_ptr(),
        );
        assert_eq!(status, ChemoStatus::ChemoStatusInvalidArgument);

        chemo_ensemble_free(h);
    }
}

#[test]
fn generated_header_declares_the_public_surface() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/chemokin.h");
    let text = std::fs::read_to_string(&header).expect("header generated at build time");
    for needle in [
        "#ifndef CHEMOKIN_H",
        "typedef enum ChemoStatus",
        "typedef struct ChemoClosure ChemoClosure",
        "typedef struct ChemoEnsemble ChemoEnsemble",
        "chemo_params_default",
        "chemo_closure_compute",
        "chemo_closure_bin_masses",
        "chemo_ensemble_run_steady",
        "chemo_last_error",
    ] {
        assert!(text.contains(needle), "header is missing `{needle}`");
    }
}

//! C ABI over the closure and agent tiers: a plain parameter struct, opaque
//! handles for stateful objects, integer status codes, and a thread-local
//! error message. Every constructor has a paired `_free`, handles must not
//! be shared across threads without external synchronisation, and no call
//! unwinds across the boundary (panics surface as `CHEMO_STATUS_PANIC`).

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chemokin::agents::Ensemble;
use chemokin::closure::ClosureProfile;
use chemokin::{Environment, Error, PhysParams};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChemoStatus {
    ChemoStatusOk = 0,
    ChemoStatusNullPointer = 1,
    ChemoStatusInvalidArgument = 2,
    ChemoStatusSingular = 3,
    ChemoStatusNumerical = 4,
    ChemoStatusTimeout = 5,
    ChemoStatusIo = 6,
    ChemoStatusPanic = 7,
}

use ChemoStatus::*;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: ChemoStatus, message: &str) -> ChemoStatus {
    let owned = CString::new(message.replace('\0', " ")).expect("NUL-free message");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
    status
}

fn fail_with(e: Error) -> ChemoStatus {
    let status = match &e {
        Error::Domain(_) | Error::Config(_) | Error::Parse(_) => ChemoStatusInvalidArgument,
        Error::Singular(_) => ChemoStatusSingular,
        Error::Numerical(_) => ChemoStatusNumerical,
        Error::Timeout { .. } => ChemoStatusTimeout,
        Error::Io(_) => ChemoStatusIo,
    };
    fail(status, &e.to_string())
}

/// Runs a body, converting panics into a status instead of unwinding into C.
fn guard(f: impl FnOnce() -> ChemoStatus) -> ChemoStatus {
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(ChemoStatusPanic, "internal panic; handle state is undefined"))
}

/// Physical parameters as a plain value struct (all fields `double`); get a
/// validated baseline from [`chemo_params_default`] and override fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChemoParams {
    /// Run speed (µm/s).
    pub v0: f64,
    /// Adaptation rate (1/s).
    pub k_r: f64,
    /// Activity set point.
    pub a0: f64,
    /// Methylation-to-energy slope.
    pub alpha0: f64,
    /// Baseline tumbling rate (1/s).
    pub z0: f64,
    /// Tumbling time scale (s).
    pub tau0: f64,
    /// Hill exponent of the tumbling rate.
    pub h: f64,
    /// Lower receptor dissociation constant (µM).
    pub k_i: f64,
    /// Upper receptor dissociation constant (µM).
    pub k_a: f64,
    /// Signal amplitude (µM).
    pub s0: f64,
    /// Receptor cooperativity.
    pub n: f64,
    /// Reference methylation level (observables do not depend on it).
    pub m0: f64,
}

fn to_phys(p: &ChemoParams) -> PhysParams {
    PhysParams {
        v0: p.v0,
        k_r: p.k_r,
        a0: p.a0,
        alpha0: p.alpha0,
        z0: p.z0,
        tau0: p.tau0,
        h: p.h,
        k_i: p.k_i,
        k_a: p.k_a,
        s0: p.s0,
        n: p.n,
        m0: p.m0,
    }
}

/// Opaque stationary activity profile; see `chemo_closure_*`.
pub struct ChemoClosure(ClosureProfile);

/// Opaque agent ensemble; see `chemo_ensemble_*`.
pub struct ChemoEnsemble(Ensemble);

/// Steady-state drift statistics (filled even on timeout, as partial data).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChemoSteadyStats {
    /// Mean drift velocity (µm/s; positive is up-gradient).
    pub drift_mean: f64,
    /// Batch-means standard error of the mean.
    pub drift_stderr: f64,
    /// Simulated seconds elapsed.
    pub elapsed: f64,
    /// Completed averaging windows.
    pub windows: u64,
    /// 1 if the convergence test passed, 0 on timeout.
    pub converged: i32,
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn chemo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread (empty until one occurs).
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn chemo_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Fills `out` with the default parameter set.
///
/// # Safety
/// `out` must point to writable memory for one `ChemoParams`.
#[no_mangle]
pub unsafe extern "C" fn chemo_params_default(out: *mut ChemoParams) -> ChemoStatus {
    guard(|| {
        if out.is_null() {
            return fail(ChemoStatusNullPointer, "out is null");
        }
        let p = PhysParams::default();
        unsafe {
            *out = ChemoParams {
                v0: p.v0,
                k_r: p.k_r,
                a0: p.a0,
                alpha0: p.alpha0,
                z0: p.z0,
                tau0: p.tau0,
                h: p.h,
                k_i: p.k_i,
                k_a: p.k_a,
                s0: p.s0,
                n: p.n,
                m0: p.m0,
            };
        }
        ChemoStatusOk
    })
}

/// Computes the stationary activity profile for spatial log-gradient
/// `g_spatial` (1/µm) and stores a new handle in `out`.
///
/// # Safety
/// `params` and `out` must be valid pointers. On success the caller owns the
/// handle and must release it with [`chemo_closure_free`].
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_compute(
    params: *const ChemoParams,
    g_spatial: f64,
    out: *mut *mut ChemoClosure,
) -> ChemoStatus {
    guard(|| {
        let (Some(params), false) = (unsafe { params.as_ref() }, out.is_null()) else {
            return fail(ChemoStatusNullPointer, "params or out is null");
        };
        match ClosureProfile::compute(&to_phys(params), g_spatial) {
            Ok(prof) => {
                unsafe { *out = Box::into_raw(Box::new(ChemoClosure(prof))) };
                ChemoStatusOk
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Releases a closure handle; a null handle is a no-op.
///
/// # Safety
/// `handle` must come from [`chemo_closure_compute`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_free(handle: *mut ChemoClosure) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Gradient number g; NaN on a null handle.
///
/// # Safety
/// `handle` must be a live closure handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_g(handle: *const ChemoClosure) -> f64 {
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.g)
}

/// Population drift speed κ (µm/s); NaN on a null handle.
///
/// # Safety
/// `handle` must be a live closure handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_kappa(handle: *const ChemoClosure) -> f64 {
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.kappa)
}

/// Fraction of up-gradient movers; NaN on a null handle.
///
/// # Safety
/// `handle` must be a live closure handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_frac_plus(handle: *const ChemoClosure) -> f64 {
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.frac_plus)
}

/// Fraction of down-gradient movers; NaN on a null handle.
///
/// # Safety
/// `handle` must be a live closure handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_frac_minus(handle: *const ChemoClosure) -> f64 {
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.frac_minus)
}

/// Power-law exponent of the total density at the lower support edge;
/// NaN on a null handle.
///
/// # Safety
/// `handle` must be a live closure handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_theta_left(handle: *const ChemoClosure) -> f64 {
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.exponents.at_left)
}

/// Power-law exponent of the total density at the upper support edge;
/// NaN on a null handle.
///
/// # Safety
/// `handle` must be a live closure handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_theta_right(handle: *const ChemoClosure) -> f64 {
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.exponents.at_right)
}

/// Stores the support `[lo, hi]` of the stationary distribution.
///
/// # Safety
/// All pointers must be valid; `lo` and `hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_support(
    handle: *const ChemoClosure,
    lo: *mut f64,
    hi: *mut f64,
) -> ChemoStatus {
    guard(|| {
        let (Some(h), false, false) = (unsafe { handle.as_ref() }, lo.is_null(), hi.is_null())
        else {
            return fail(ChemoStatusNullPointer, "handle, lo, or hi is null");
        };
        let (a, b) = h.0.support();
        unsafe {
            *lo = a;
            *hi = b;
        }
        ChemoStatusOk
    })
}

/// Evaluates the per-direction stationary densities at activity `a`
/// (must lie inside the open support).
///
/// # Safety
/// All pointers must be valid; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_density(
    handle: *const ChemoClosure,
    a: f64,
    out_plus: *mut f64,
    out_minus: *mut f64,
) -> ChemoStatus {
    guard(|| {
        let (Some(h), false, false) =
            (unsafe { handle.as_ref() }, out_plus.is_null(), out_minus.is_null())
        else {
            return fail(ChemoStatusNullPointer, "handle or an output is null");
        };
        match h.0.density_pair(a) {
            Ok((dp, dm)) => {
                unsafe {
                    *out_plus = dp;
                    *out_minus = dm;
                }
                ChemoStatusOk
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Integrates the per-direction densities over `n_edges - 1` bins; the two
/// output arrays receive masses that jointly sum to 1 when the edges span
/// the whole support.
///
/// # Safety
/// `edges` must hold `n_edges` doubles; each output array must have room
/// for `n_edges - 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn chemo_closure_bin_masses(
    handle: *const ChemoClosure,
    edges: *const f64,
    n_edges: usize,
    out_plus: *mut f64,
    out_minus: *mut f64,
) -> ChemoStatus {
    guard(|| {
        let (Some(h), false, false, false) = (
            unsafe { handle.as_ref() },
            edges.is_null(),
            out_plus.is_null(),
            out_minus.is_null(),
        ) else {
            return fail(ChemoStatusNullPointer, "handle, edges, or an output is null");
        };
        if n_edges < 2 {
            return fail(ChemoStatusInvalidArgument, "need at least two bin edges");
        }
        let edges = unsafe { std::slice::from_raw_parts(edges, n_edges) };
        match h.0.bin_masses(edges) {
            Ok((mp, mm)) => {
                unsafe {
                    ptr::copy_nonoverlapping(mp.as_ptr(), out_plus, mp.len());
                    ptr::copy_nonoverlapping(mm.as_ptr(), out_minus, mm.len());
                }
                ChemoStatusOk
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Creates an ensemble of `n_agents` swimmers in an exponential gradient
/// `g_spatial` (1/µm), on the signal's natural domain (or a 400 µm box when
/// `g_spatial` is 0). Deterministic for a fixed seed.
///
/// # Safety
/// `params` and `out` must be valid pointers. On success the caller owns the
/// handle and must release it with [`chemo_ensemble_free`].
#[no_mangle]
pub unsafe extern "C" fn chemo_ensemble_new(
    params: *const ChemoParams,
    g_spatial: f64,
    n_agents: usize,
    seed: u64,
    out: *mut *mut ChemoEnsemble,
) -> ChemoStatus {
    guard(|| {
        let (Some(params), false) = (unsafe { params.as_ref() }, out.is_null()) else {
            return fail(ChemoStatusNullPointer, "params or out is null");
        };
        let p = to_phys(params);
        let env = if g_spatial > 0.0 {
            Environment::for_gradient(&p, g_spatial)
        } else {
            Environment::with_bounds(g_spatial, 0.0, 400.0)
        };
        match env.and_then(|env| Ensemble::new(&p, &env, n_agents, seed)) {
            Ok(ens) => {
                unsafe { *out = Box::into_raw(Box::new(ChemoEnsemble(ens))) };
                ChemoStatusOk
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Releases an ensemble handle; a null handle is a no-op.
///
/// # Safety
/// `handle` must come from an ensemble constructor and not be used after.
#[no_mangle]
pub unsafe extern "C" fn chemo_ensemble_free(handle: *mut ChemoEnsemble) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of agents; 0 on a null handle.
///
/// # Safety
/// `handle` must be a live ensemble handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_ensemble_n_agents(handle: *const ChemoEnsemble) -> usize {
    unsafe { handle.as_ref() }.map_or(0, |h| h.0.n_agents())
}

/// Advances the ensemble by `steps` steps of length `dt` seconds.
///
/// # Safety
/// `handle` must be a live, exclusively held ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn chemo_ensemble_step(
    handle: *mut ChemoEnsemble,
    dt: f64,
    steps: u64,
) -> ChemoStatus {
    guard(|| {
        let Some(h) = (unsafe { handle.as_mut() }) else {
            return fail(ChemoStatusNullPointer, "handle is null");
        };
        for _ in 0..steps {
            if let Err(e) = h.0.step(dt) {
                return fail_with(e);
            }
        }
        ChemoStatusOk
    })
}

/// Instantaneous drift estimate `v0·(n⁺ − n⁻)/n` (µm/s); NaN on null.
///
/// # Safety
/// `handle` must be a live ensemble handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_ensemble_drift(handle: *const ChemoEnsemble) -> f64 {
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.drift_estimator())
}

/// Fraction of agents with activity in `[lo, hi]`; NaN on a null handle.
///
/// # Safety
/// `handle` must be a live ensemble handle or null.
#[no_mangle]
pub unsafe extern "C" fn chemo_ensemble_fraction_in(
    handle: *const ChemoEnsemble,
    lo: f64,
    hi: f64,
) -> f64 {
    unsafe { handle.as_ref() }.map_or(f64::NAN, |h| h.0.fraction_in(lo, hi))
}

/// Runs to a steady drift (windows of `window` samples, tolerance `tol` in
/// units of `v0`, at most `max_time` simulated seconds) and fills `out`.
/// On `CHEMO_STATUS_TIMEOUT` the statistics are still filled (partial data,
/// `converged = 0`) and the ensemble state remains usable.
///
/// # Safety
/// `handle` must be a live, exclusively held ensemble handle; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn chemo_ensemble_run_steady(
    handle: *mut ChemoEnsemble,
    dt: f64,
    window: usize,
    tol: f64,
    max_time: f64,
    out: *mut ChemoSteadyStats,
) -> ChemoStatus {
    guard(|| {
        let (Some(h), false) = (unsafe { handle.as_mut() }, out.is_null()) else {
            return fail(ChemoStatusNullPointer, "handle or out is null");
        };
        let (stats, status) = match h.0.run_to_steady_state(dt, window, tol, max_time) {
            Ok(stats) => (stats, ChemoStatusOk),
            Err(Error::Timeout { elapsed, partial }) => {
                let stats = (*partial).clone();
                (stats, fail_with(Error::Timeout { elapsed, partial }))
            }
            Err(e) => return fail_with(e),
        };
        unsafe {
            *out = ChemoSteadyStats {
                drift_mean: stats.drift_mean,
                drift_stderr: stats.drift_stderr,
                elapsed: stats.elapsed,
                windows: stats.windows as u64,
                converged: stats.converged as i32,
            };
        }
        status
    })
}

/// Per-direction activity histograms over `n_edges - 1` bins, as densities
/// per unit activity, jointly normalised across both directions.
///
/// # Safety
/// `edges` must hold `n_edges` doubles (strictly increasing); each output
/// array must have room for `n_edges - 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn chemo_ensemble_histogram(
    handle: *const ChemoEnsemble,
    edges: *const f64,
    n_edges: usize,
    out_plus: *mut f64,
    out_minus: *mut f64,
) -> ChemoStatus {
    guard(|| {
        let (Some(h), false, false, false) = (
            unsafe { handle.as_ref() },
            edges.is_null(),
            out_plus.is_null(),
            out_minus.is_null(),
        ) else {
            return fail(ChemoStatusNullPointer, "handle, edges, or an output is null");
        };
        if n_edges < 2 {
            return fail(ChemoStatusInvalidArgument, "need at least two bin edges");
        }
        let edges = unsafe { std::slice::from_raw_parts(edges, n_edges) };
        match h.0.activity_histogram(edges) {
            Ok((dp, dm)) => {
                unsafe {
                    ptr::copy_nonoverlapping(dp.as_ptr(), out_plus, dp.len());
                    ptr::copy_nonoverlapping(dm.as_ptr(), out_minus, dm.len());
                }
                ChemoStatusOk
            }
            Err(e) => fail_with(e),
        }
    })
}

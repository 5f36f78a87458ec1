//! C ABI over the toolkit: opaque handles, integer status codes, and a
//! per-thread error message.
//!
//! Ownership rules: every `*mut RdslineSystem` produced here must be released
//! with `rdsline_system_free`. Strings returned by `rdsline_system_label`
//! live as long as the handle; the string from `rdsline_last_error` lives
//! until the next failing call on the same thread. No call unwinds across
//! the boundary; a caught panic reports `RDSLINE_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rdsline::config::SystemConfig;
use rdsline::monster::{self, Variant};
use rdsline::seed::trial_seed;
use rdsline::system::RandomSystem;
use rdsline::walk::{classify_system, estimate_phi_batch, ClassVerdict, SimParams};

pub const RDSLINE_OK: i32 = 0;
/// A required pointer argument was null.
pub const RDSLINE_NULL_ARG: i32 = 1;
/// The computation ran but declined to certify a result; see the error text.
pub const RDSLINE_REFUSED: i32 = 2;
/// Unparseable input or invalid parameters.
pub const RDSLINE_PARSE: i32 = 3;
/// A bug: panic or other invariant failure inside the library.
pub const RDSLINE_INTERNAL: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> =
        RefCell::new(CString::new("").expect("empty string has no NUL"));
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("NULs stripped above");
    });
}

fn fail(code: i32, msg: impl Into<String>) -> i32 {
    set_error(msg);
    code
}

/// Runs `body` with panics converted to `RDSLINE_INTERNAL`.
fn guarded(body: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".to_string());
            fail(RDSLINE_INTERNAL, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// An increasing random system, built once and reused across calls.
pub struct RdslineSystem {
    sys: RandomSystem,
    label: CString,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rdsline_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread; empty until
/// a call fails. The pointer is invalidated by the next failing call.
#[no_mangle]
pub extern "C" fn rdsline_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parses a system description (the `system` object of a run config:
/// `label`, `maps`, `probs`) and returns an owned handle through `out`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rdsline_system_from_json(
    json: *const c_char,
    out: *mut *mut RdslineSystem,
) -> i32 {
    guarded(|| {
        if out.is_null() {
            return fail(RDSLINE_NULL_ARG, "out pointer is null");
        }
        *out = ptr::null_mut();
        let Some(text) = read_str(json) else {
            return fail(RDSLINE_NULL_ARG, "json pointer is null or not UTF-8");
        };
        let cfg: SystemConfig = match serde_json::from_str(text) {
            Ok(cfg) => cfg,
            Err(e) => return fail(RDSLINE_PARSE, format!("system config: {e}")),
        };
        let sys = match cfg.build() {
            Ok(sys) => sys,
            Err(e) => return fail(RDSLINE_PARSE, e.to_string()),
        };
        let label = CString::new(sys.label().replace('\0', " ")).expect("NULs stripped");
        *out = Box::into_raw(Box::new(RdslineSystem { sys, label }));
        RDSLINE_OK
    })
}

/// Releases a handle from `rdsline_system_from_json`. Null is allowed.
///
/// # Safety
/// `sys` must be null or a pointer this library returned, freed only once.
#[no_mangle]
pub unsafe extern "C" fn rdsline_system_free(sys: *mut RdslineSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// The system's label; owned by the handle. Null handle gives null.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rdsline_system_label(sys: *const RdslineSystem) -> *const c_char {
    match sys.as_ref() {
        Some(h) => h.label.as_ptr(),
        None => ptr::null(),
    }
}

/// Number of maps in the system; 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rdsline_system_map_count(sys: *const RdslineSystem) -> usize {
    sys.as_ref().map_or(0, |h| h.sys.len())
}

fn sim_params(master_seed: u64, trials: u64, horizon: u64, escape: f64) -> SimParams {
    let mut params = SimParams { master_seed, ..SimParams::default() };
    if trials > 0 {
        params.trials = trials;
    }
    if horizon > 0 {
        params.horizon = horizon;
    }
    if escape > 0.0 {
        params.escape_threshold = escape;
    }
    params
}

/// Classifies the system into one of the four behavior classes.
///
/// Pass 0 for `trials`, `horizon`, or `escape` to use the standard budgets,
/// and a `tau` of 0.0 for the standard margin. On `RDSLINE_OK` the class
/// (1..=4) and the flip/swap normalization flags are written; on
/// `RDSLINE_REFUSED` the reason is in `rdsline_last_error`.
///
/// # Safety
/// `sys` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rdsline_classify(
    sys: *const RdslineSystem,
    master_seed: u64,
    trials: u64,
    horizon: u64,
    escape: f64,
    tau: f64,
    out_class: *mut u8,
    out_flipped: *mut bool,
    out_swapped: *mut bool,
) -> i32 {
    guarded(|| {
        let Some(handle) = sys.as_ref() else {
            return fail(RDSLINE_NULL_ARG, "system handle is null");
        };
        if out_class.is_null() || out_flipped.is_null() || out_swapped.is_null() {
            return fail(RDSLINE_NULL_ARG, "classification out pointer is null");
        }
        let params = sim_params(master_seed, trials, horizon, escape);
        if let Err(e) = params.validate() {
            return fail(RDSLINE_PARSE, e.to_string());
        }
        let tau = if tau > 0.0 { tau } else { 0.1 };
        let probes = [-20.0, -5.0, 0.0, 5.0, 20.0];
        match classify_system(&handle.sys, &probes, &params, tau) {
            Ok(ClassVerdict::Classified { class, flipped, swapped, .. }) => {
                *out_class = class;
                *out_flipped = flipped;
                *out_swapped = swapped;
                RDSLINE_OK
            }
            Ok(ClassVerdict::Refused { reason, .. }) => fail(RDSLINE_REFUSED, reason),
            Err(e) => fail(RDSLINE_PARSE, e.to_string()),
        }
    })
}

/// Estimates the three escape probabilities at `x` plus a 95% confidence
/// halfwidth. Pass 0 for `trials`/`horizon`/`escape` for standard budgets.
///
/// # Safety
/// `sys` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rdsline_phi(
    sys: *const RdslineSystem,
    x: f64,
    master_seed: u64,
    trials: u64,
    horizon: u64,
    escape: f64,
    out_plus: *mut f64,
    out_minus: *mut f64,
    out_zero: *mut f64,
    out_ci: *mut f64,
) -> i32 {
    guarded(|| {
        let Some(handle) = sys.as_ref() else {
            return fail(RDSLINE_NULL_ARG, "system handle is null");
        };
        if out_plus.is_null() || out_minus.is_null() || out_zero.is_null() || out_ci.is_null() {
            return fail(RDSLINE_NULL_ARG, "phi out pointer is null");
        }
        let params = sim_params(master_seed, trials, horizon, escape);
        if let Err(e) = params.validate() {
            return fail(RDSLINE_PARSE, e.to_string());
        }
        match estimate_phi_batch(&handle.sys, &[x], &params) {
            Ok(estimates) => {
                let e = &estimates[0];
                *out_plus = e.phi_plus();
                *out_minus = e.phi_minus();
                *out_zero = e.phi_zero();
                *out_ci = e.ci_halfwidth();
                RDSLINE_OK
            }
            Err(e) => fail(RDSLINE_PARSE, e.to_string()),
        }
    })
}

/// Runs the rank-tower system for `steps` steps and reports interval visits.
///
/// `variant` is 0 for the alternating signs, 1 for coin-flip signs. The
/// watched interval is `[lo, hi]`. On success `out_last_inside` holds the
/// last step whose position verdict was inside (or -1 if none) and
/// `out_max_rank` the largest applied rank. The seed stream matches the CLI:
/// a single-seed run derives its stream from (master_seed, 0).
///
/// # Safety
/// The out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rdsline_monster_escape(
    variant: i32,
    steps: u64,
    master_seed: u64,
    lo: f64,
    hi: f64,
    out_last_inside: *mut i64,
    out_max_rank: *mut u64,
) -> i32 {
    guarded(|| {
        if out_last_inside.is_null() || out_max_rank.is_null() {
            return fail(RDSLINE_NULL_ARG, "monster out pointer is null");
        }
        let variant = match variant {
            0 => Variant::Alternating,
            1 => Variant::Symmetric,
            other => return fail(RDSLINE_PARSE, format!("unknown variant {other}")),
        };
        match monster::run_monster(variant, steps, trial_seed(master_seed, 0), (lo, hi), 0.0) {
            Ok(run) => {
                *out_last_inside = run.trace.last_visit().map_or(-1, |s| s as i64);
                *out_max_rank = run.trace.running_max_at(steps).unwrap_or(0);
                RDSLINE_OK
            }
            Err(e) => fail(RDSLINE_PARSE, e.to_string()),
        }
    })
}

//! C ABI over the seeknet simulator.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a
//! [`SeeknetStatus`] and, on failure, leaves a message readable through
//! [`seeknet_last_error`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use seeknet::metrics::FlowSummary;
use seeknet::scenario::{load_scenario, ValidatedScenario};
use seeknet::sim::{run, RunOutput};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeeknetStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The scenario JSON is malformed or fails validation.
    InvalidScenario = 3,
    /// An index was past the end.
    OutOfRange = 4,
    /// The simulator panicked. This is a bug.
    Internal = 5,
}

/// A validated scenario.
pub struct SeeknetScenario(ValidatedScenario);

/// The result of one simulation run.
pub struct SeeknetRun(RunOutput);

/// Per-flow figures. `reliability_pct` is NaN when nothing was sent.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeeknetFlowSummary {
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub reliability_pct: f64,
    pub goodput_bps: f64,
    pub normalized_throughput: f64,
}

impl From<&FlowSummary> for SeeknetFlowSummary {
    fn from(f: &FlowSummary) -> Self {
        SeeknetFlowSummary {
            sent: f.sent,
            received: f.received,
            dropped: f.dropped,
            in_flight: f.in_flight,
            reliability_pct: f.reliability_pct.unwrap_or(f64::NAN),
            goodput_bps: f.goodput_bps,
            normalized_throughput: f.normalized_throughput,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SeeknetStatus, msg: impl Into<String>) -> SeeknetStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> SeeknetStatus) -> SeeknetStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SeeknetStatus::Internal, "simulator panicked"))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn seeknet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seeknet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a scenario document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn seeknet_scenario_from_json(
    json: *const c_char,
    out: *mut *mut SeeknetScenario,
) -> SeeknetStatus {
    guarded(|| {
        if json.is_null() || out.is_null() {
            return fail(SeeknetStatus::NullArgument, "json and out must not be null");
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(SeeknetStatus::InvalidUtf8, e.to_string()),
        };
        match load_scenario(text) {
            Ok(sc) => {
                *out = Box::into_raw(Box::new(SeeknetScenario(sc)));
                SeeknetStatus::Ok
            }
            Err(e) => fail(SeeknetStatus::InvalidScenario, e.to_string()),
        }
    })
}

/// Number of traffic sessions in the scenario.
///
/// # Safety
/// `scenario` must come from [`seeknet_scenario_from_json`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seeknet_scenario_session_count(
    scenario: *const SeeknetScenario,
    out: *mut usize,
) -> SeeknetStatus {
    guarded(|| {
        if scenario.is_null() || out.is_null() {
            return fail(SeeknetStatus::NullArgument, "scenario and out must not be null");
        }
        *out = (*scenario).0.sessions.len();
        SeeknetStatus::Ok
    })
}

/// Seed stored in the scenario document.
///
/// # Safety
/// As for [`seeknet_scenario_session_count`].
#[no_mangle]
pub unsafe extern "C" fn seeknet_scenario_seed(scenario: *const SeeknetScenario, out: *mut u64) -> SeeknetStatus {
    guarded(|| {
        if scenario.is_null() || out.is_null() {
            return fail(SeeknetStatus::NullArgument, "scenario and out must not be null");
        }
        *out = (*scenario).0.sim.seed;
        SeeknetStatus::Ok
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from [`seeknet_scenario_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn seeknet_scenario_free(scenario: *mut SeeknetScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario to completion with `seed`.
///
/// # Safety
/// `scenario` must be a live scenario handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn seeknet_run(
    scenario: *const SeeknetScenario,
    seed: u64,
    out: *mut *mut SeeknetRun,
) -> SeeknetStatus {
    guarded(|| {
        if scenario.is_null() || out.is_null() {
            return fail(SeeknetStatus::NullArgument, "scenario and out must not be null");
        }
        let result = run(&(*scenario).0, seed);
        *out = Box::into_raw(Box::new(SeeknetRun(result)));
        SeeknetStatus::Ok
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from [`seeknet_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn seeknet_run_free(run: *mut SeeknetRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// FNV-1a 64 digest of the run's event trace.
///
/// # Safety
/// `run` must be a live run handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn seeknet_run_trace_digest(run: *const SeeknetRun, out: *mut u64) -> SeeknetStatus {
    guarded(|| {
        if run.is_null() || out.is_null() {
            return fail(SeeknetStatus::NullArgument, "run and out must not be null");
        }
        *out = (*run).0.trace.digest;
        SeeknetStatus::Ok
    })
}

/// Summary of session `index`, or of the aggregate when `index` equals the
/// session count.
///
/// # Safety
/// `run` must be a live run handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn seeknet_run_flow(
    run: *const SeeknetRun,
    index: usize,
    out: *mut SeeknetFlowSummary,
) -> SeeknetStatus {
    guarded(|| {
        if run.is_null() || out.is_null() {
            return fail(SeeknetStatus::NullArgument, "run and out must not be null");
        }
        let report = &(*run).0.report;
        let flow = match index.cmp(&report.sessions.len()) {
            std::cmp::Ordering::Less => &report.sessions[index],
            std::cmp::Ordering::Equal => &report.aggregate,
            std::cmp::Ordering::Greater => {
                return fail(
                    SeeknetStatus::OutOfRange,
                    format!("flow {index} out of range (0..={})", report.sessions.len()),
                )
            }
        };
        *out = flow.into();
        SeeknetStatus::Ok
    })
}

/// The full metrics report as a JSON string. Free it with
/// [`seeknet_string_free`].
///
/// # Safety
/// `run` must be a live run handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn seeknet_run_report_json(run: *const SeeknetRun, out: *mut *mut c_char) -> SeeknetStatus {
    guarded(|| {
        if run.is_null() || out.is_null() {
            return fail(SeeknetStatus::NullArgument, "run and out must not be null");
        }
        let text = serde_json::to_string(&(*run).0.report).expect("report serializes");
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        SeeknetStatus::Ok
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn seeknet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

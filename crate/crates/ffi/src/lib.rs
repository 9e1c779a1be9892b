//! C interface to the segrid engine.
//!
//! Every fallible function returns a [`SegridStatus`]. On failure the
//! message is available through [`segrid_last_error_message`] on the same
//! thread. Handles are opaque and owned by the caller until passed to the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use segrid::engine::{run_algorithm1, EquilibriumReport, RunStatus};
use segrid::follower::check_pda_convergence;
use segrid::scenario::ScenarioConfig;

/// Result code of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegridStatus {
    Ok = 0,
    /// The scenario could not be parsed or violates a model invariant.
    InvalidInput = 1,
    /// The solver failed for a reason other than bad input.
    SolverError = 2,
    NullPointer = 3,
    /// The output buffer is shorter than the value; the required length
    /// was written to `len_out`.
    BufferTooSmall = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

/// Outcome of a completed run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegridRunStatus {
    Converged = 0,
    InnerNotConverged = 1,
    LeaderNotConverged = 2,
    FinalNotConverged = 3,
    NotEquilibrium = 4,
}

impl From<RunStatus> for SegridRunStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => Self::Converged,
            RunStatus::InnerNotConverged => Self::InnerNotConverged,
            RunStatus::LeaderNotConverged => Self::LeaderNotConverged,
            RunStatus::FinalNotConverged => Self::FinalNotConverged,
            RunStatus::NotEquilibrium => Self::NotEquilibrium,
        }
    }
}

/// A parsed and validated scenario.
pub struct SegridScenario(ScenarioConfig);

/// The result of [`segrid_run`].
pub struct SegridReport(EquilibriumReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SegridStatus, msg: impl Into<String>) -> SegridStatus {
    set_error(msg);
    status
}

fn from_core(err: segrid::Error) -> SegridStatus {
    let status = if err.is_invalid_input() {
        SegridStatus::InvalidInput
    } else {
        SegridStatus::SolverError
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> SegridStatus) -> SegridStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SegridStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, SegridStatus> {
    if p.is_null() {
        return Err(fail(SegridStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(SegridStatus::InvalidUtf8, e.to_string()))
}

macro_rules! deref {
    ($p:expr, $name:literal) => {
        match $p.as_ref() {
            Some(v) => v,
            None => return fail(SegridStatus::NullPointer, concat!($name, " is null")),
        }
    };
}

/// Message of the last failed call on this thread, or null if the last
/// call succeeded. The pointer stays valid until the next call on the
/// same thread.
#[no_mangle]
pub extern "C" fn segrid_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn segrid_scenario_from_toml(toml: *const c_char, out: *mut *mut SegridScenario) -> SegridStatus {
    guard(|| {
        if out.is_null() {
            return fail(SegridStatus::NullPointer, "out is null");
        }
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_toml_str(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(SegridScenario(cfg)));
                SegridStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Reads a scenario from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn segrid_scenario_from_path(path: *const c_char, out: *mut *mut SegridScenario) -> SegridStatus {
    guard(|| {
        if out.is_null() {
            return fail(SegridStatus::NullPointer, "out is null");
        }
        let path = match read_str(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_path(path) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(SegridScenario(cfg)));
                SegridStatus::Ok
            }
            Err(segrid::Error::Io(e)) => fail(SegridStatus::InvalidInput, format!("{path}: {e}")),
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `scenario` must come from a `segrid_scenario_from_*` call and not be
/// freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn segrid_scenario_free(scenario: *mut SegridScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of microgrid and generator buses.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn segrid_scenario_dims(
    scenario: *const SegridScenario,
    n_microgrids: *mut usize,
    n_generators: *mut usize,
) -> SegridStatus {
    guard(|| {
        let s = deref!(scenario, "scenario");
        if n_microgrids.is_null() || n_generators.is_null() {
            return fail(SegridStatus::NullPointer, "output pointer is null");
        }
        *n_microgrids = s.0.network.n_d();
        *n_generators = s.0.network.n_g();
        SegridStatus::Ok
    })
}

/// Overrides the random seed used by subsequent runs.
///
/// # Safety
/// `scenario` must be valid.
#[no_mangle]
pub unsafe extern "C" fn segrid_scenario_set_seed(scenario: *mut SegridScenario, seed: u64) -> SegridStatus {
    guard(|| {
        let s = match scenario.as_mut() {
            Some(s) => s,
            None => return fail(SegridStatus::NullPointer, "scenario is null"),
        };
        s.0.solver.seed = seed;
        s.0.file.solver.seed = seed;
        SegridStatus::Ok
    })
}

/// Evaluates the follower step condition. `lhs < rhs` iff satisfied.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn segrid_check_pda(
    scenario: *const SegridScenario,
    lhs: *mut f64,
    rhs: *mut f64,
    satisfied: *mut bool,
) -> SegridStatus {
    guard(|| {
        let s = deref!(scenario, "scenario");
        if lhs.is_null() || rhs.is_null() || satisfied.is_null() {
            return fail(SegridStatus::NullPointer, "output pointer is null");
        }
        let r = check_pda_convergence(&s.0.network, &s.0.microgrids);
        *lhs = r.lhs;
        *rhs = r.rhs;
        *satisfied = r.satisfied;
        SegridStatus::Ok
    })
}

/// Searches for the equilibrium. A run that does not converge still
/// returns `Ok`; inspect [`segrid_report_status`].
///
/// # Safety
/// `scenario` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn segrid_run(scenario: *const SegridScenario, out: *mut *mut SegridReport) -> SegridStatus {
    guard(|| {
        let s = deref!(scenario, "scenario");
        if out.is_null() {
            return fail(SegridStatus::NullPointer, "out is null");
        }
        match run_algorithm1(&s.0) {
            Ok(rep) => {
                *out = Box::into_raw(Box::new(SegridReport(rep)));
                SegridStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `report` must come from [`segrid_run`] and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn segrid_report_free(report: *mut SegridReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn segrid_report_status(report: *const SegridReport, out: *mut SegridRunStatus) -> SegridStatus {
    guard(|| {
        let r = deref!(report, "report");
        if out.is_null() {
            return fail(SegridStatus::NullPointer, "out is null");
        }
        *out = r.0.status.into();
        SegridStatus::Ok
    })
}

/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn segrid_report_leader_cost(report: *const SegridReport, out: *mut f64) -> SegridStatus {
    guard(|| {
        let r = deref!(report, "report");
        if out.is_null() {
            return fail(SegridStatus::NullPointer, "out is null");
        }
        *out = r.0.leader_cost;
        SegridStatus::Ok
    })
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, cap: usize, len_out: *mut usize) -> SegridStatus {
    if len_out.is_null() {
        return fail(SegridStatus::NullPointer, "len_out is null");
    }
    *len_out = values.len();
    if cap < values.len() {
        return fail(
            SegridStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", values.len()),
        );
    }
    if !values.is_empty() {
        if buf.is_null() {
            return fail(SegridStatus::NullPointer, "buf is null");
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    }
    SegridStatus::Ok
}

/// Generator outputs in scenario generator order, MW. Pass `cap = 0` to
/// query the length.
///
/// # Safety
/// `buf` must hold `cap` doubles; `len_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn segrid_report_p_g(
    report: *const SegridReport,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> SegridStatus {
    guard(|| copy_out(&deref!(report, "report").0.p_g_star, buf, cap, len_out))
}

/// Microgrid net injections, MW.
///
/// # Safety
/// As for [`segrid_report_p_g`].
#[no_mangle]
pub unsafe extern "C" fn segrid_report_p_d(
    report: *const SegridReport,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> SegridStatus {
    guard(|| copy_out(&deref!(report, "report").0.p_d_star, buf, cap, len_out))
}

/// Microgrid renewable generation, MW.
///
/// # Safety
/// As for [`segrid_report_p_g`].
#[no_mangle]
pub unsafe extern "C" fn segrid_report_p_dg(
    report: *const SegridReport,
    buf: *mut f64,
    cap: usize,
    len_out: *mut usize,
) -> SegridStatus {
    guard(|| copy_out(&deref!(report, "report").0.p_dg_star, buf, cap, len_out))
}

/// Serializes the report as JSON. Release the string with
/// [`segrid_string_free`].
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn segrid_report_to_json(report: *const SegridReport, out: *mut *mut c_char) -> SegridStatus {
    guard(|| {
        let r = deref!(report, "report");
        if out.is_null() {
            return fail(SegridStatus::NullPointer, "out is null");
        }
        match serde_json::to_string_pretty(&r.0) {
            Ok(json) => match CString::new(json) {
                Ok(c) => {
                    *out = c.into_raw();
                    SegridStatus::Ok
                }
                Err(e) => fail(SegridStatus::SolverError, e.to_string()),
            },
            Err(e) => fail(SegridStatus::SolverError, e.to_string()),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn segrid_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

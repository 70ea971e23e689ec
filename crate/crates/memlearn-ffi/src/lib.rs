//! C ABI for the simulator: opaque handles, integer status codes, and
//! caller-freed strings. The generated header lands in `include/memlearn.h`.
//!
//! Conventions:
//! - Functions return `ML_OK` (0) on success; nonzero codes mirror the CLI
//!   exit codes (2 config error, 3 trace error).
//! - Out-parameters receive owned handles; release them with the matching
//!   `*_free` function.
//! - `ml_last_error` returns a borrowed NUL-terminated message describing the
//!   most recent failure on the calling thread; it stays valid until the next
//!   failing call on that thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use memlearn::harness::config::{load_config, parse_config};
use memlearn::harness::report::MetricsReport;
use memlearn::harness::sim::{paired_run, run_simulation, SimError};
use memlearn::trace::{generate, write_trace, SyntheticSpec};
use memlearn::SimConfig;

pub const ML_OK: i32 = 0;
pub const ML_ERR_RUNTIME: i32 = 1;
pub const ML_ERR_CONFIG: i32 = 2;
pub const ML_ERR_TRACE: i32 = 3;
pub const ML_ERR_ARGUMENT: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn sim_error_code(e: &SimError) -> i32 {
    match e {
        SimError::Config(_) => ML_ERR_CONFIG,
        SimError::Trace(_) => ML_ERR_TRACE,
    }
}

/// Opaque simulation configuration handle.
pub struct MlConfig(SimConfig);

/// Opaque metrics report handle.
pub struct MlReport(MetricsReport);

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        set_error("null pointer argument");
        return Err(ML_ERR_ARGUMENT);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        ML_ERR_ARGUMENT
    })
}

fn guarded<F: FnOnce() -> i32>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            ML_ERR_RUNTIME
        }
    }
}

/// Borrowed message for the last error on this thread.
#[no_mangle]
pub extern "C" fn ml_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a TOML configuration file into a new handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_config_load(path: *const c_char, out: *mut *mut MlConfig) -> i32 {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return ML_ERR_ARGUMENT;
        }
        let path = match cstr_arg(path) {
            Ok(p) => PathBuf::from(p),
            Err(code) => return code,
        };
        match load_config(&path) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(MlConfig(cfg)));
                ML_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                ML_ERR_CONFIG
            }
        }
    })
}

/// Parse a TOML configuration string into a new handle.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_config_parse(text: *const c_char, out: *mut *mut MlConfig) -> i32 {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return ML_ERR_ARGUMENT;
        }
        let text = match cstr_arg(text) {
            Ok(t) => t,
            Err(code) => return code,
        };
        match parse_config(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(MlConfig(cfg)));
                ML_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                ML_ERR_CONFIG
            }
        }
    })
}

/// Override the seed of a configuration.
///
/// # Safety
/// `cfg` must be a live handle from `ml_config_load`/`ml_config_parse`.
#[no_mangle]
pub unsafe extern "C" fn ml_config_set_seed(cfg: *mut MlConfig, seed: u64) -> i32 {
    guarded(|| {
        if cfg.is_null() {
            set_error("null config handle");
            return ML_ERR_ARGUMENT;
        }
        (*cfg).0.seed = seed;
        ML_OK
    })
}

/// Point the configuration at a trace file, replacing any synthetic source.
///
/// # Safety
/// `cfg` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ml_config_set_trace_path(cfg: *mut MlConfig, path: *const c_char) -> i32 {
    guarded(|| {
        if cfg.is_null() {
            set_error("null config handle");
            return ML_ERR_ARGUMENT;
        }
        let path = match cstr_arg(path) {
            Ok(p) => PathBuf::from(p),
            Err(code) => return code,
        };
        (*cfg).0.trace.path = Some(path);
        (*cfg).0.trace.synthetic = None;
        ML_OK
    })
}

/// # Safety
/// `cfg` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_config_free(cfg: *mut MlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run one simulation; on success `out` receives an owned report handle.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_simulate(cfg: *const MlConfig, out: *mut *mut MlReport) -> i32 {
    guarded(|| {
        if cfg.is_null() || out.is_null() {
            set_error("null argument");
            return ML_ERR_ARGUMENT;
        }
        match run_simulation((*cfg).0.clone()) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(MlReport(report)));
                ML_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                sim_error_code(&e)
            }
        }
    })
}

/// Run the baseline/with-mechanisms pair; on success `out_json` receives the
/// paired report as an owned JSON string (free with `ml_string_free`).
///
/// # Safety
/// `cfg` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_paired_run(cfg: *const MlConfig, out_json: *mut *mut c_char) -> i32 {
    guarded(|| {
        if cfg.is_null() || out_json.is_null() {
            set_error("null argument");
            return ML_ERR_ARGUMENT;
        }
        match paired_run((*cfg).0.clone()) {
            Ok(paired) => {
                let json = CString::new(paired.to_canonical_json()).expect("no NUL in json");
                *out_json = json.into_raw();
                ML_OK
            }
            Err(e) => {
                set_error(&e.to_string());
                sim_error_code(&e)
            }
        }
    })
}

/// Canonical JSON of a report as an owned string (free with `ml_string_free`).
///
/// # Safety
/// `report` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_report_json(report: *const MlReport, out_json: *mut *mut c_char) -> i32 {
    guarded(|| {
        if report.is_null() || out_json.is_null() {
            set_error("null argument");
            return ML_ERR_ARGUMENT;
        }
        let json = CString::new((*report).0.to_canonical_json()).expect("no NUL in json");
        *out_json = json.into_raw();
        ML_OK
    })
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_report_total_cycles(report: *const MlReport) -> u64 {
    if report.is_null() {
        return 0;
    }
    (*report).0.total_cycles
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_report_llc_misses(report: *const MlReport) -> u64 {
    if report.is_null() {
        return 0;
    }
    (*report).0.counters.demand_misses_llc
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ml_report_instructions(report: *const MlReport) -> u64 {
    if report.is_null() {
        return 0;
    }
    (*report).0.instructions
}

/// # Safety
/// `report` must be a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ml_report_free(report: *mut MlReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Generate a synthetic trace file from an inline key=val spec.
///
/// # Safety
/// `spec` and `out_path` must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ml_gen_trace(spec: *const c_char, out_path: *const c_char) -> i32 {
    guarded(|| {
        let spec = match cstr_arg(spec) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let out_path = match cstr_arg(out_path) {
            Ok(p) => PathBuf::from(p),
            Err(code) => return code,
        };
        let spec = match SyntheticSpec::parse_inline(spec) {
            Ok(s) => s,
            Err(e) => {
                set_error(&e.to_string());
                return ML_ERR_TRACE;
            }
        };
        let records = match generate(&spec) {
            Ok(r) => r,
            Err(e) => {
                set_error(&e.to_string());
                return ML_ERR_TRACE;
            }
        };
        match write_trace(&out_path, records) {
            Ok(_) => ML_OK,
            Err(e) => {
                set_error(&e.to_string());
                ML_ERR_TRACE
            }
        }
    })
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must originate from a `*_json` out-parameter of this library.
#[no_mangle]
pub unsafe extern "C" fn ml_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

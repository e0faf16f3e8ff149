//! C ABI over the roughfolio library.
//!
//! Objects cross the boundary as opaque handles created by `rf_*_new`/`rf_*_parse`/
//! generator functions and released by the matching `rf_*_free`. Every fallible call
//! returns an [`RfStatus`]; the message of the last failure on the calling thread is
//! available through [`rf_last_error`]. Panics are caught and reported as
//! [`RfStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use roughfolio::grid::{p_variation, SampledPath};
use roughfolio::lab::commands;
use roughfolio::lab::{Config, ExperimentReport};
use roughfolio::noise::{generate, NoiseKind, NoiseSpec};
use roughfolio::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Config = 4,
    Numerical = 5,
    InsufficientRefinement = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Flat `key = value` configuration.
pub struct RfConfig {
    inner: Config,
}

/// Sampled path on a time grid, stored row-major (`len × dim`).
pub struct RfPath {
    inner: SampledPath,
}

/// Result of a subcommand run.
pub struct RfReport {
    inner: ExperimentReport,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> RfStatus {
    match err {
        Error::InvalidInput(_)
        | Error::GridMismatch(_)
        | Error::DimensionMismatch(_)
        | Error::PartitionNotInGrid { .. }
        | Error::UnknownKind(_) => RfStatus::InvalidInput,
        Error::Config(_) => RfStatus::Config,
        Error::NonFinite { .. }
        | Error::Singular { .. }
        | Error::DetFloor { .. }
        | Error::Diverged { .. }
        | Error::Positivity { .. }
        | Error::BracketJump { .. } => RfStatus::Numerical,
        Error::InsufficientRefinement { .. } => RfStatus::InsufficientRefinement,
        Error::Io(_) | Error::Json(_) => RfStatus::Io,
        Error::Tagged { source, .. } => status_of(source),
    }
}

fn guard(f: impl FnOnce() -> Result<(), RfStatus>) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            RfStatus::Panic
        }
    }
}

fn lib<T>(r: roughfolio::Result<T>) -> Result<T, RfStatus> {
    r.map_err(|e| {
        set_last_error(e.to_string());
        status_of(&e)
    })
}

fn null_error(what: &str) -> RfStatus {
    set_last_error(format!("{what} is null"));
    RfStatus::NullPointer
}

/// # Safety
/// `s` must be null or a NUL-terminated string valid for reads.
unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, RfStatus> {
    if s.is_null() {
        return Err(null_error(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_last_error(format!("{what} is not valid UTF-8"));
        RfStatus::InvalidUtf8
    })
}

fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), RfStatus> {
    if out.is_null() {
        return Err(null_error("output pointer"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Copies `src` plus a NUL into `buf` when it fits. Returns the size needed including
/// the NUL.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes of writes.
unsafe fn copy_c_string(src: &CStr, buf: *mut c_char, cap: usize) -> usize {
    let bytes = src.to_bytes_with_nul();
    if !buf.is_null() && cap >= bytes.len() {
        ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
    }
    bytes.len()
}

/// Copies the last error message of this thread into `buf` (when `cap` suffices) and
/// returns the buffer size it needs, including the terminating NUL.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn rf_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| copy_c_string(&e.borrow(), buf, cap))
}

/// Creates an empty configuration.
#[no_mangle]
pub extern "C" fn rf_config_new() -> *mut RfConfig {
    Box::into_raw(Box::new(RfConfig { inner: Config::default() }))
}

/// Parses `key = value` text into a new configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_config_parse(text: *const c_char, out: *mut *mut RfConfig) -> RfStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let inner = lib(Config::parse(text))?;
        out_ptr(out, RfConfig { inner })
    })
}

/// Sets one key, replacing any previous value.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rf_config_set(cfg: *mut RfConfig, key: *const c_char, value: *const c_char) -> RfStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null_error("config"))?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        cfg.inner.set(key, value);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rf_config_free(cfg: *mut RfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Generates a driving path. `kind` is `brownian`, `zero`, `identity` or `sin`.
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_noise_generate(
    kind: *const c_char,
    dim: usize,
    horizon: f64,
    level: u32,
    seed: u64,
    out: *mut *mut RfPath,
) -> RfStatus {
    guard(|| {
        let kind: NoiseKind = lib(str_arg(kind, "kind")?.parse())?;
        let inner = lib(generate(&NoiseSpec { kind, dim, horizon, level, seed }))?;
        out_ptr(out, RfPath { inner })
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `path` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rf_path_len(path: *const RfPath) -> usize {
    path.as_ref().map_or(0, |p| p.inner.len())
}

/// Dimension, or 0 for a null handle.
///
/// # Safety
/// `path` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rf_path_dim(path: *const RfPath) -> usize {
    path.as_ref().map_or(0, |p| p.inner.dim())
}

/// Copies the sample times (`len` values) into `times`.
///
/// # Safety
/// `path` must come from this library; `times` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn rf_path_times(path: *const RfPath, times: *mut f64, cap: usize) -> RfStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null_error("path"))?;
        copy_values(p.inner.times(), times, cap)
    })
}

/// Copies the values row-major (`len × dim`) into `values`.
///
/// # Safety
/// `path` must come from this library; `values` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn rf_path_values(path: *const RfPath, values: *mut f64, cap: usize) -> RfStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null_error("path"))?;
        copy_values(p.inner.values(), values, cap)
    })
}

unsafe fn copy_values(src: &[f64], dst: *mut f64, cap: usize) -> Result<(), RfStatus> {
    if dst.is_null() {
        return Err(null_error("buffer"));
    }
    if cap < src.len() {
        set_last_error(format!("buffer holds {cap} values, {} needed", src.len()));
        return Err(RfStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// `p`-variation of the path over all of its samples (subsampled above 4096).
///
/// # Safety
/// `path` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_path_p_variation(path: *const RfPath, p: f64, out: *mut f64) -> RfStatus {
    guard(|| {
        let path = path.as_ref().ok_or_else(|| null_error("path"))?;
        let out = out.as_mut().ok_or_else(|| null_error("output pointer"))?;
        *out = lib(p_variation(&path.inner, p, None))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rf_path_free(path: *mut RfPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Runs a subcommand (`gen-noise`, `lift`, `solve`, `portfolio`, `stability`,
/// `discretize`, `selftest`) writing its artifacts into `out_dir`.
///
/// # Safety
/// `command` and `out_dir` must be NUL-terminated strings, `cfg` null or from this
/// library, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rf_run(command: *const c_char, cfg: *const RfConfig, out_dir: *const c_char, out: *mut *mut RfReport) -> RfStatus {
    guard(|| {
        let command = str_arg(command, "command")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let default = Config::default();
        let cfg = cfg.as_ref().map_or(&default, |c| &c.inner);
        let inner = lib(commands::run(command, cfg, Path::new(dir)))?;
        let json = lib(inner.to_json())?;
        let json = CString::new(json).map_err(|_| RfStatus::InvalidUtf8)?;
        out_ptr(out, RfReport { inner, json })
    })
}

/// 1 when every acceptance window of the report passed, 0 otherwise or for null.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rf_report_passed(report: *const RfReport) -> c_int {
    report.as_ref().map_or(0, |r| c_int::from(r.inner.passed))
}

/// Copies the report JSON into `buf` (when `cap` suffices) and returns the size it
/// needs including the NUL, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or come from this library; `buf` null or valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn rf_report_json(report: *const RfReport, buf: *mut c_char, cap: usize) -> usize {
    report.as_ref().map_or(0, |r| copy_c_string(&r.json, buf, cap))
}

/// # Safety
/// `report` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rf_report_free(report: *mut RfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

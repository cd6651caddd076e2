//! C ABI over the refinement pipeline.
//!
//! Objects are opaque handles created by `gsr_*_new`/`gsr_*_load` functions
//! and released with the matching `gsr_*_free`. Every fallible call returns a
//! [`GsrStatus`]; on failure `gsr_last_error` describes the cause for the
//! calling thread. Strings returned by the library are released with
//! `gsr_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gsr_core::config::RunConfig;
use gsr_core::pipeline::{prepare_dataset, ExperimentReport, Pipeline, Variant};
use gsr_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Io = 4,
    Format = 5,
    Compute = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// A loaded or generated dataset together with its stage cache.
pub struct GsrDataset {
    pipeline: Pipeline,
}

pub struct GsrConfig {
    config: RunConfig,
}

pub struct GsrReport {
    report: ExperimentReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GsrStatus {
    match e.root() {
        Error::InvalidConfig(_) => GsrStatus::InvalidConfig,
        Error::Io { .. } => GsrStatus::Io,
        Error::Format { .. } => GsrStatus::Format,
        Error::NodeOutOfRange { .. } => GsrStatus::OutOfRange,
        _ => GsrStatus::Compute,
    }
}

struct Failure(GsrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GsrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GsrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GsrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(GsrStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GsrStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(GsrStatus::NullArgument, format!("{name} is null")))
}

fn out_arg<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(GsrStatus::NullArgument, "output pointer is null".into()));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn string_out(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(GsrStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Failure(GsrStatus::Compute, "string contains nul".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library; valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn gsr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn gsr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsr_config_new(out: *mut *mut GsrConfig) -> GsrStatus {
    guard(|| out_arg(out, GsrConfig { config: RunConfig::default() }))
}

/// Parses a TOML configuration document.
///
/// # Safety
/// `toml` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsr_config_from_toml(toml: *const c_char, out: *mut *mut GsrConfig) -> GsrStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        out_arg(out, GsrConfig { config: RunConfig::from_toml(text, &[])? })
    })
}

/// Applies one dotted `key=value` override, e.g. `pretrain.alpha=1.0`.
/// The configuration is unchanged on failure.
///
/// # Safety
/// `config` must be a live handle and `assignment` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gsr_config_set(config: *mut GsrConfig, assignment: *const c_char) -> GsrStatus {
    guard(|| {
        let cfg = config
            .as_mut()
            .ok_or_else(|| Failure(GsrStatus::NullArgument, "config is null".into()))?;
        let a = str_arg(assignment, "assignment")?;
        cfg.config = RunConfig::from_toml(&cfg.config.to_toml(), &[a.to_string()])?;
        Ok(())
    })
}

/// The configuration as TOML; release with `gsr_string_free`.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsr_config_to_toml(config: *const GsrConfig, out: *mut *mut c_char) -> GsrStatus {
    guard(|| string_out(out, ref_arg(config, "config")?.config.to_toml()))
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gsr_config_free(config: *mut GsrConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Loads a dataset from a manifest path, directory or registered name.
///
/// # Safety
/// `source` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsr_dataset_load(source: *const c_char, out: *mut *mut GsrDataset) -> GsrStatus {
    guard(|| {
        let src = str_arg(source, "source")?;
        let mut cfg = RunConfig::default();
        cfg.dataset.source = Some(src.to_string());
        let data = prepare_dataset(&cfg.dataset)?;
        out_arg(out, GsrDataset { pipeline: Pipeline::new(data) })
    })
}

/// Loads or generates the dataset named by the configuration's dataset section.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsr_dataset_from_config(config: *const GsrConfig, out: *mut *mut GsrDataset) -> GsrStatus {
    guard(|| {
        let cfg = ref_arg(config, "config")?;
        let data = prepare_dataset(&cfg.config.dataset)?;
        out_arg(out, GsrDataset { pipeline: Pipeline::new(data) })
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsr_dataset_num_nodes(dataset: *const GsrDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.pipeline.data.graph().num_nodes())
}

/// Undirected edge count, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsr_dataset_num_edges(dataset: *const GsrDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.pipeline.data.graph().num_edges())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gsr_dataset_free(dataset: *mut GsrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Runs the configured pipeline over every seed. `variant` is null for the
/// configuration as given, or one of `gcn`, `full`, `no-inter`,
/// `random-init`, `orig-graph`, `feat-graph`, `struct-graph`.
///
/// # Safety
/// Handles must be live, `variant` null or nul-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gsr_run(
    dataset: *const GsrDataset,
    config: *const GsrConfig,
    variant: *const c_char,
    out: *mut *mut GsrReport,
) -> GsrStatus {
    guard(|| {
        let d = ref_arg(dataset, "dataset")?;
        let cfg = ref_arg(config, "config")?;
        let report = if variant.is_null() {
            d.pipeline.run(&cfg.config, "run")?
        } else {
            let v: Variant = str_arg(variant, "variant")?.parse()?;
            d.pipeline.run_ablation(&cfg.config, v)?
        };
        out_arg(out, GsrReport { report })
    })
}

/// Mean test accuracy over seeds, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsr_report_mean_accuracy(report: *const GsrReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.mean_acc)
}

/// Population standard deviation of test accuracy, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsr_report_std_accuracy(report: *const GsrReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.std_acc)
}

/// Number of seeds run, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gsr_report_num_runs(report: *const GsrReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.runs.len())
}

/// Test accuracy of run `index`.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsr_report_run_accuracy(report: *const GsrReport, index: usize, out: *mut f64) -> GsrStatus {
    guard(|| {
        let r = ref_arg(report, "report")?;
        let run = r.report.runs.get(index).ok_or_else(|| {
            Failure(
                GsrStatus::OutOfRange,
                format!("run {index} out of range for {} runs", r.report.runs.len()),
            )
        })?;
        if out.is_null() {
            return Err(Failure(GsrStatus::NullArgument, "output pointer is null".into()));
        }
        *out = run.test_acc;
        Ok(())
    })
}

/// Hex fingerprint identifying the report's results; release with
/// `gsr_string_free`.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsr_report_fingerprint(report: *const GsrReport, out: *mut *mut c_char) -> GsrStatus {
    guard(|| string_out(out, ref_arg(report, "report")?.report.fingerprint.clone()))
}

/// The full report as JSON; release with `gsr_string_free`.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gsr_report_to_json(report: *const GsrReport, out: *mut *mut c_char) -> GsrStatus {
    guard(|| {
        string_out(out, ref_arg(report, "report")?.report.to_json())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gsr_report_free(report: *mut GsrReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

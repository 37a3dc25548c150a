//! C ABI for the linear-autoencoder library.
//!
//! Conventions: every fallible call returns a [`LaeStatus`]; out-parameters
//! are written only on `Ok`. Handles are opaque and freed with the matching
//! `*_free`. The last error message for the calling thread is available via
//! [`lae_last_error_message`] until the next fallible call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lae_core::data::{
    load_dataset, make_synthetic, spectrum_of, DataMatrix, DatasetFormat, Spectrum, SyntheticSpec,
};
use lae_core::error::Error;
use lae_core::harness::{resolve_run_config, trace_to_csv, RunSection};
use lae_core::landscape::{nd_cond_lower_bound, nonuniform_cond_lower_bound};
use lae_core::metrics::axis_alignment_distance;
use lae_core::optim::{train, TrainOutcome};
use lae_core::Mat;

/// Status codes shared by every fallible call.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaeStatus {
    Ok = 0,
    NullPointer = 1,
    Utf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Numerical = 5,
    Diverged = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> LaeStatus {
    match err {
        Error::Io { .. } => LaeStatus::Io,
        Error::Parse { .. } | Error::IdxTruncated { .. } | Error::IdxBadMagic { .. } => {
            LaeStatus::Io
        }
        Error::Diverged { .. } => LaeStatus::Diverged,
        Error::DegenerateSpectrum { .. }
        | Error::DuplicateSingularValues { .. }
        | Error::NonFinite { .. }
        | Error::RankDeficient { .. }
        | Error::NotStationary { .. }
        | Error::FdStepUnderflow { .. }
        | Error::ZeroColumn(_) => LaeStatus::Numerical,
        _ => LaeStatus::InvalidArgument,
    }
}

fn fail(err: Error) -> LaeStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

fn fail_msg(status: LaeStatus, msg: &str) -> LaeStatus {
    set_error(msg);
    status
}

/// Guard against panics crossing the ABI boundary.
fn guarded(f: impl FnOnce() -> LaeStatus) -> LaeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail_msg(LaeStatus::Numerical, "internal panic"),
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, LaeStatus> {
    if ptr.is_null() {
        return Err(fail_msg(LaeStatus::NullPointer, "null string pointer"));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail_msg(LaeStatus::Utf8, "string is not valid UTF-8"))
}

/// Dataset plus its oracle spectrum.
pub struct LaeDataset {
    data: DataMatrix,
    spectrum: Spectrum,
}

/// Weights and metric trace produced by one training run.
pub struct LaeTrainResult {
    outcome: TrainOutcome,
}

/// Last error message for this thread (empty when no error occurred).
/// The pointer stays valid until the next fallible call on this thread.
#[no_mangle]
pub extern "C" fn lae_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Build a synthetic dataset with prescribed data singular values
/// (descending, `len = min(m, n)`) and keep the top-`k` oracle spectrum.
///
/// # Safety
/// `singular_values` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_dataset_synthetic(
    m: usize,
    n: usize,
    k: usize,
    seed: u64,
    singular_values: *const f64,
    len: usize,
    out: *mut *mut LaeDataset,
) -> LaeStatus {
    guarded(|| {
        if out.is_null() || singular_values.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null out-parameter");
        }
        let sv = unsafe { std::slice::from_raw_parts(singular_values, len) }.to_vec();
        let spec = SyntheticSpec {
            m,
            n,
            k,
            singular_values: sv,
            seed,
        };
        match make_synthetic(&spec) {
            Ok((data, spectrum)) => {
                unsafe {
                    *out = Box::into_raw(Box::new(LaeDataset { data, spectrum }));
                }
                LaeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn dataset_from_file(
    path: *const c_char,
    format: DatasetFormat,
    k: usize,
    out: *mut *mut LaeDataset,
) -> LaeStatus {
    if out.is_null() {
        return fail_msg(LaeStatus::NullPointer, "null out-parameter");
    }
    let path = match unsafe { cstr(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    let loaded = load_dataset(path, format).map(|d| d.center());
    match loaded.and_then(|data| spectrum_of(&data, k).map(|s| (data, s))) {
        Ok((data, spectrum)) => {
            unsafe {
                *out = Box::into_raw(Box::new(LaeDataset { data, spectrum }));
            }
            LaeStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Load a CSV dataset (one sample per column), center it, and decompose the
/// top-`k` spectrum.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_dataset_from_csv(
    path: *const c_char,
    k: usize,
    out: *mut *mut LaeDataset,
) -> LaeStatus {
    guarded(|| unsafe { dataset_from_file(path, DatasetFormat::CsvColumns, k, out) })
}

/// Load an IDX image dataset, center it, and decompose the top-`k` spectrum.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_dataset_from_idx(
    path: *const c_char,
    k: usize,
    out: *mut *mut LaeDataset,
) -> LaeStatus {
    guarded(|| unsafe { dataset_from_file(path, DatasetFormat::IdxImages, k, out) })
}

/// # Safety
/// `handle` must come from a dataset constructor (or be null).
#[no_mangle]
pub unsafe extern "C" fn lae_dataset_free(handle: *mut LaeDataset) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Fetch `(features, samples, spectrum size)`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_dataset_dims(
    handle: *const LaeDataset,
    m: *mut usize,
    n: *mut usize,
    k: *mut usize,
) -> LaeStatus {
    guarded(|| {
        if handle.is_null() || m.is_null() || n.is_null() || k.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null pointer");
        }
        let d = unsafe { &*handle };
        unsafe {
            *m = d.data.m();
            *n = d.data.n();
            *k = d.spectrum.k();
        }
        LaeStatus::Ok
    })
}

/// Eigenvalue `σ²_index` (zero-based) of the oracle spectrum.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_dataset_eigenvalue(
    handle: *const LaeDataset,
    index: usize,
    out: *mut f64,
) -> LaeStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null pointer");
        }
        let d = unsafe { &*handle };
        if index >= d.spectrum.k() {
            return fail_msg(LaeStatus::InvalidArgument, "eigenvalue index out of range");
        }
        unsafe {
            *out = d.spectrum.sigma2()[index];
        }
        LaeStatus::Ok
    })
}

/// Train on a dataset. `run_toml` holds the same keys as the `[run]` section
/// of an experiment config, e.g.
/// `k = 4\nscheme = "rag"\nalpha = 0.1\nepochs = 500\nseed = 0`.
///
/// # Safety
/// `handle` and `out` must be valid; `run_toml` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lae_train_toml(
    handle: *const LaeDataset,
    run_toml: *const c_char,
    out: *mut *mut LaeTrainResult,
) -> LaeStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null pointer");
        }
        let text = match unsafe { cstr(run_toml) } {
            Ok(t) => t,
            Err(status) => return status,
        };
        let run: RunSection = match toml::from_str(text) {
            Ok(r) => r,
            Err(e) => return fail_msg(LaeStatus::InvalidArgument, &format!("run config: {e}")),
        };
        let d = unsafe { &*handle };
        let result = (|| -> Result<TrainOutcome, Error> {
            let spectrum = d.spectrum.truncate(run.k)?;
            let config = resolve_run_config(&run)?;
            train(&d.data, &spectrum, &config)
        })();
        match result {
            Ok(outcome) => {
                unsafe {
                    *out = Box::into_raw(Box::new(LaeTrainResult { outcome }));
                }
                LaeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `handle` must come from [`lae_train_toml`] (or be null).
#[no_mangle]
pub unsafe extern "C" fn lae_result_free(handle: *mut LaeTrainResult) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of recorded trace rows.
///
/// # Safety
/// `handle` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_result_trace_len(handle: *const LaeTrainResult) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.outcome.trace.rows().len()
}

/// Read one trace cell. Columns: 0 epoch, 1 recon_loss, 2 total_loss,
/// 3 d_align, 4 d_sub, 5 nd, 6 balance_residual, 7 wall_time_s.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_result_trace_value(
    handle: *const LaeTrainResult,
    row: usize,
    col: usize,
    out: *mut f64,
) -> LaeStatus {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null pointer");
        }
        let rows = unsafe { &*handle }.outcome.trace.rows();
        let Some(r) = rows.get(row) else {
            return fail_msg(LaeStatus::InvalidArgument, "trace row out of range");
        };
        let value = match col {
            0 => r.epoch as f64,
            1 => r.recon_loss,
            2 => r.total_loss,
            3 => r.d_align,
            4 => r.d_sub,
            5 => r.nd,
            6 => r.balance_residual,
            7 => r.wall_time_s,
            _ => return fail_msg(LaeStatus::InvalidArgument, "trace column out of range"),
        };
        unsafe {
            *out = value;
        }
        LaeStatus::Ok
    })
}

/// Epoch at which the run diverged, or -1 when it completed.
///
/// # Safety
/// `handle` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_result_diverged_epoch(handle: *const LaeTrainResult) -> i64 {
    if handle.is_null() {
        return -1;
    }
    unsafe { &*handle }
        .outcome
        .diverged_at
        .map(|e| e as i64)
        .unwrap_or(-1)
}

/// Axis-alignment distance of the trained decoder against the dataset's
/// top-`k` oracle directions (`k` = latent size of the run).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_result_alignment(
    handle: *const LaeTrainResult,
    dataset: *const LaeDataset,
    out: *mut f64,
) -> LaeStatus {
    guarded(|| {
        if handle.is_null() || dataset.is_null() || out.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null pointer");
        }
        let r = unsafe { &*handle };
        let d = unsafe { &*dataset };
        let k = r.outcome.weights.k();
        let spectrum = match d.spectrum.truncate(k) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        match axis_alignment_distance(r.outcome.weights.w2(), spectrum.u()) {
            Ok(v) => {
                unsafe {
                    *out = v;
                }
                LaeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Write the run's trace CSV (fixed columns, deterministic bytes unless
/// `include_timing` is set).
///
/// # Safety
/// `handle` valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lae_result_write_trace_csv(
    handle: *const LaeTrainResult,
    path: *const c_char,
    include_timing: bool,
) -> LaeStatus {
    guarded(|| {
        if handle.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null pointer");
        }
        let path = match unsafe { cstr(path) } {
            Ok(p) => p,
            Err(status) => return status,
        };
        let csv = trace_to_csv(&unsafe { &*handle }.outcome.trace, include_timing);
        match std::fs::write(path, csv) {
            Ok(_) => LaeStatus::Ok,
            Err(e) => fail(Error::Io {
                path: path.to_string(),
                source: e,
            }),
        }
    })
}

fn formula_spectrum(sigma2: &[f64]) -> Result<Spectrum, Error> {
    let k = sigma2.len();
    let mut u = Mat::zeros(k, k);
    for i in 0..k {
        u[(i, i)] = 1.0;
    }
    Spectrum::new(sigma2.to_vec(), u)
}

/// Condition-number lower bound of the non-uniform objective from a
/// descending eigenvalue list (`σ²`, not singular values).
///
/// # Safety
/// `sigma2` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_nonuniform_cond_lower_bound(
    sigma2: *const f64,
    len: usize,
    k: usize,
    out: *mut f64,
) -> LaeStatus {
    guarded(|| {
        if sigma2.is_null() || out.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null pointer");
        }
        let vals = unsafe { std::slice::from_raw_parts(sigma2, len) };
        match formula_spectrum(vals).and_then(|s| nonuniform_cond_lower_bound(&s, k)) {
            Ok(v) => {
                unsafe {
                    *out = v;
                }
                LaeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Condition-number lower bound of deterministic nested dropout from a
/// descending eigenvalue list.
///
/// # Safety
/// `sigma2` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lae_nd_cond_lower_bound(
    sigma2: *const f64,
    len: usize,
    k: usize,
    out: *mut f64,
) -> LaeStatus {
    guarded(|| {
        if sigma2.is_null() || out.is_null() {
            return fail_msg(LaeStatus::NullPointer, "null pointer");
        }
        let vals = unsafe { std::slice::from_raw_parts(sigma2, len) };
        match formula_spectrum(vals).and_then(|s| nd_cond_lower_bound(&s, k)) {
            Ok(v) => {
                unsafe {
                    *out = v;
                }
                LaeStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

//! C ABI over the weak-supervision pipeline core.
//!
//! Conventions: objects are opaque handles created and freed by this
//! library; every fallible function returns a [`wsg_status`] and writes its
//! result through an out-pointer; on failure a thread-local message is
//! available from [`wsg_last_error_message`] until the next failing call on
//! the same thread. Votes cross the boundary as `int8_t` using the CSV
//! encoding: `1` positive, `0` negative, `-1` abstain.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use wsgully_core::data::{read_label_matrix, LabelMatrix, WeakLabel};
use wsgully_core::label_model::{
    fit, majority_vote, CorrelationSet, LabelModelConfig, TrainedLabelModel,
};
use wsgully_core::lf::parse_binary_answer;
use wsgully_core::metrics::{compute_metrics, ConfusionMatrix};
use wsgully_core::student::patch_size_for_gsd;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum wsg_status {
    WSG_OK = 0,
    WSG_NULL_POINTER = 1,
    WSG_INVALID_UTF8 = 2,
    WSG_IO_ERROR = 3,
    WSG_PARSE_ERROR = 4,
    WSG_INVALID_ARGUMENT = 5,
    WSG_MISALIGNED = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: wsg_status, message: impl AsRef<str>) -> wsg_status {
    let text = CString::new(message.as_ref().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
    status
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wsg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn wsg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn path_from(ptr: *const c_char) -> Result<&'static Path, wsg_status> {
    if ptr.is_null() {
        return Err(fail(wsg_status::WSG_NULL_POINTER, "null path"));
    }
    let text = unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|e| fail(wsg_status::WSG_INVALID_UTF8, e.to_string()))?;
    Ok(Path::new(text))
}

/// Opaque weak-vote matrix handle.
pub struct wsg_label_matrix(LabelMatrix);

/// Opaque fitted label-model handle.
pub struct wsg_label_model(TrainedLabelModel);

/// Reads a label-matrix CSV (`location_id,<lf...>` header; cells 1/0/-1).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_matrix_read(
    path: *const c_char,
    out: *mut *mut wsg_label_matrix,
) -> wsg_status {
    if out.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null out pointer");
    }
    let path = match unsafe { path_from(path) } {
        Ok(path) => path,
        Err(status) => return status,
    };
    match read_label_matrix(path) {
        Ok(matrix) => {
            unsafe { *out = Box::into_raw(Box::new(wsg_label_matrix(matrix))) };
            wsg_status::WSG_OK
        }
        Err(e) => fail(wsg_status::WSG_PARSE_ERROR, e.to_string()),
    }
}

/// Frees a matrix handle; a null pointer is a no-op.
///
/// # Safety
/// `matrix` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_matrix_free(matrix: *mut wsg_label_matrix) {
    if !matrix.is_null() {
        drop(unsafe { Box::from_raw(matrix) });
    }
}

/// Number of locations (rows); 0 for a null handle.
///
/// # Safety
/// `matrix` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_matrix_rows(matrix: *const wsg_label_matrix) -> u32 {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.0.n_locations() as u32)
}

/// Number of labeling functions (columns); 0 for a null handle.
///
/// # Safety
/// `matrix` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_matrix_cols(matrix: *const wsg_label_matrix) -> u32 {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.0.n_lfs() as u32)
}

/// Per-row majority vote with ties and all-abstain rows going positive;
/// writes one 0/1 label per row into `labels_out`.
///
/// # Safety
/// `labels_out` must point to at least `wsg_label_matrix_rows` bytes.
#[no_mangle]
pub unsafe extern "C" fn wsg_majority_vote(
    matrix: *const wsg_label_matrix,
    labels_out: *mut i8,
) -> wsg_status {
    let Some(matrix) = (unsafe { matrix.as_ref() }) else {
        return fail(wsg_status::WSG_NULL_POINTER, "null matrix");
    };
    if labels_out.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null labels_out");
    }
    let voted = majority_vote(&matrix.0);
    for (index, label) in voted.labels().iter().enumerate() {
        unsafe {
            *labels_out.add(index) = match label {
                wsgully_core::data::ClassLabel::Positive => 1,
                wsgully_core::data::ClassLabel::Negative => 0,
            };
        }
    }
    wsg_status::WSG_OK
}

/// Fits the generative label model. `corr_pairs` is a flattened array of
/// `n_pairs` (j, d) column pairs with `j < d`, or null when `n_pairs` is 0.
///
/// # Safety
/// Pointers must be valid; `corr_pairs` must hold `2 * n_pairs` entries.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_model_fit(
    matrix: *const wsg_label_matrix,
    epochs: u32,
    learning_rate: f64,
    corr_pairs: *const u32,
    n_pairs: usize,
    out: *mut *mut wsg_label_model,
) -> wsg_status {
    let Some(matrix) = (unsafe { matrix.as_ref() }) else {
        return fail(wsg_status::WSG_NULL_POINTER, "null matrix");
    };
    if out.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null out pointer");
    }
    if n_pairs > 0 && corr_pairs.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null corr_pairs");
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for index in 0..n_pairs {
        let j = unsafe { *corr_pairs.add(2 * index) } as usize;
        let d = unsafe { *corr_pairs.add(2 * index + 1) } as usize;
        pairs.push((j, d));
    }
    let correlations = match CorrelationSet::new(pairs) {
        Ok(set) => set,
        Err(e) => return fail(wsg_status::WSG_INVALID_ARGUMENT, e.to_string()),
    };
    let config = LabelModelConfig {
        epochs: epochs as usize,
        learning_rate,
        correlations,
        ..LabelModelConfig::default()
    };
    match fit(&matrix.0, &config) {
        Ok(model) => {
            unsafe { *out = Box::into_raw(Box::new(wsg_label_model(model))) };
            wsg_status::WSG_OK
        }
        Err(e) => fail(wsg_status::WSG_INVALID_ARGUMENT, e.to_string()),
    }
}

/// Frees a model handle; a null pointer is a no-op.
///
/// # Safety
/// `model` must come from this library and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_model_free(model: *mut wsg_label_model) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of labeling functions the model was fit on; 0 for null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_model_n_lfs(model: *const wsg_label_model) -> u32 {
    unsafe { model.as_ref() }.map_or(0, |m| m.0.n_lfs() as u32)
}

/// Final negative log marginal likelihood of the fit; NaN for null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_model_final_nll(model: *const wsg_label_model) -> f64 {
    unsafe { model.as_ref() }.map_or(f64::NAN, |m| m.0.final_nll)
}

/// Saves the model checkpoint JSON.
///
/// # Safety
/// `model` and `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_model_save(
    model: *const wsg_label_model,
    path: *const c_char,
) -> wsg_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return fail(wsg_status::WSG_NULL_POINTER, "null model");
    };
    let path = match unsafe { path_from(path) } {
        Ok(path) => path,
        Err(status) => return status,
    };
    match model.0.save(path) {
        Ok(()) => wsg_status::WSG_OK,
        Err(e) => fail(wsg_status::WSG_IO_ERROR, e.to_string()),
    }
}

/// Loads a model checkpoint JSON.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_model_load(
    path: *const c_char,
    out: *mut *mut wsg_label_model,
) -> wsg_status {
    if out.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null out pointer");
    }
    let path = match unsafe { path_from(path) } {
        Ok(path) => path,
        Err(status) => return status,
    };
    match TrainedLabelModel::load(path) {
        Ok(model) => {
            unsafe { *out = Box::into_raw(Box::new(wsg_label_model(model))) };
            wsg_status::WSG_OK
        }
        Err(e) => fail(wsg_status::WSG_PARSE_ERROR, e.to_string()),
    }
}

fn decode_votes(votes: &[i8]) -> Result<Vec<WeakLabel>, wsg_status> {
    votes
        .iter()
        .map(|&v| match v {
            1 => Ok(WeakLabel::Positive),
            0 => Ok(WeakLabel::Negative),
            -1 => Ok(WeakLabel::Abstain),
            other => Err(fail(
                wsg_status::WSG_INVALID_ARGUMENT,
                format!("invalid vote {other}; expected 1, 0 or -1"),
            )),
        })
        .collect()
}

/// Posterior positive probability for one votes row of length `m`.
///
/// # Safety
/// `votes` must hold `m` entries; `p_pos_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_model_predict(
    model: *const wsg_label_model,
    votes: *const i8,
    m: usize,
    p_pos_out: *mut f64,
) -> wsg_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return fail(wsg_status::WSG_NULL_POINTER, "null model");
    };
    if votes.is_null() || p_pos_out.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null votes or out pointer");
    }
    if m != model.0.n_lfs() {
        return fail(
            wsg_status::WSG_MISALIGNED,
            format!("{m} votes for a model with {} labeling functions", model.0.n_lfs()),
        );
    }
    let row = match decode_votes(unsafe { std::slice::from_raw_parts(votes, m) }) {
        Ok(row) => row,
        Err(status) => return status,
    };
    unsafe { *p_pos_out = model.0.predict_proba(&row).p_pos() };
    wsg_status::WSG_OK
}

/// Posterior positive probabilities for every matrix row, written in row
/// order to `p_pos_out`.
///
/// # Safety
/// `p_pos_out` must point to at least `wsg_label_matrix_rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn wsg_label_model_predict_matrix(
    model: *const wsg_label_model,
    matrix: *const wsg_label_matrix,
    p_pos_out: *mut f64,
) -> wsg_status {
    let Some(model) = (unsafe { model.as_ref() }) else {
        return fail(wsg_status::WSG_NULL_POINTER, "null model");
    };
    let Some(matrix) = (unsafe { matrix.as_ref() }) else {
        return fail(wsg_status::WSG_NULL_POINTER, "null matrix");
    };
    if p_pos_out.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null out pointer");
    }
    match model.0.predict_all(&matrix.0) {
        Ok(pseudo) => {
            for (index, dist) in pseudo.distributions().iter().enumerate() {
                unsafe { *p_pos_out.add(index) = dist.p_pos() };
            }
            wsg_status::WSG_OK
        }
        Err(e) => fail(wsg_status::WSG_MISALIGNED, e.to_string()),
    }
}

/// The five confusion metrics; an undefined (0/0) metric has its `*_defined`
/// flag cleared and its value set to NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct wsg_metrics {
    pub npv: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub npv_defined: bool,
    pub recall_defined: bool,
    pub precision_defined: bool,
    pub f1_defined: bool,
    pub accuracy_defined: bool,
}

/// Computes metrics from raw confusion counts.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wsg_compute_metrics(
    true_positive: u64,
    false_positive: u64,
    true_negative: u64,
    false_negative: u64,
    out: *mut wsg_metrics,
) -> wsg_status {
    if out.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null out pointer");
    }
    let cm = ConfusionMatrix {
        true_positive,
        false_positive,
        true_negative,
        false_negative,
    };
    match compute_metrics(&cm) {
        Ok(report) => {
            let unpack = |value: Option<f64>| (value.unwrap_or(f64::NAN), value.is_some());
            let (npv, npv_defined) = unpack(report.npv);
            let (recall, recall_defined) = unpack(report.recall);
            let (precision, precision_defined) = unpack(report.precision);
            let (f1, f1_defined) = unpack(report.f1);
            let (accuracy, accuracy_defined) = unpack(report.accuracy);
            unsafe {
                *out = wsg_metrics {
                    npv,
                    recall,
                    precision,
                    f1,
                    accuracy,
                    npv_defined,
                    recall_defined,
                    precision_defined,
                    f1_defined,
                    accuracy_defined,
                };
            }
            wsg_status::WSG_OK
        }
        Err(e) => fail(wsg_status::WSG_INVALID_ARGUMENT, e.to_string()),
    }
}

/// Patch edge (pixels) covering the same ground extent at `gsd_cm` as
/// `ref_patch_px` does at `ref_gsd_cm`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wsg_patch_size_for_gsd(
    gsd_cm: f64,
    ref_gsd_cm: f64,
    ref_patch_px: u32,
    out: *mut u32,
) -> wsg_status {
    if out.is_null() {
        return fail(wsg_status::WSG_NULL_POINTER, "null out pointer");
    }
    match patch_size_for_gsd(gsd_cm, ref_gsd_cm, ref_patch_px) {
        Ok(size) => {
            unsafe { *out = size };
            wsg_status::WSG_OK
        }
        Err(e) => fail(wsg_status::WSG_INVALID_ARGUMENT, e.to_string()),
    }
}

/// Parses free text for the first standalone yes/no token: returns 1 for
/// yes, 0 for no, -1 when neither appears (or the pointer is null/invalid).
///
/// # Safety
/// `text` must be NUL-terminated when non-null.
#[no_mangle]
pub unsafe extern "C" fn wsg_parse_binary_answer(text: *const c_char) -> i8 {
    if text.is_null() {
        return -1;
    }
    let Ok(text) = unsafe { CStr::from_ptr(text) }.to_str() else {
        return -1;
    };
    match parse_binary_answer(text) {
        WeakLabel::Positive => 1,
        WeakLabel::Negative => 0,
        WeakLabel::Abstain => -1,
    }
}

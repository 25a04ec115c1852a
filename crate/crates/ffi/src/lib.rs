//! C ABI over `ham-core`: load a trained checkpoint and a dataset, then
//! score or rank candidates for a user and a context of recent items.
//!
//! Every function returns a [`HamStatus`]; on failure a description is
//! available from [`ham_last_error_message`] on the same thread. Handles
//! are opaque and must be released with the matching `*_free` function.
//! Panics never cross the boundary; they surface as `HAM_STATUS_PANIC`.

use std::cell::RefCell;
use std::collections::HashSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ham_core::cli::{load_checkpoint, load_dataset};
use ham_core::data::{context_window, Dataset};
use ham_core::evaluation::top_k;
use ham_core::model::{score_all, Checkpoint};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Checkpoint = 5,
    Shape = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// A trained model: parameters plus the hyperparameters needed to score.
pub struct HamModel {
    ckpt: Checkpoint,
}

/// A preprocessed dataset with per-user item sequences.
pub struct HamDataset {
    dataset: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(HamStatus, String);

type FfiResult = Result<(), Failure>;

fn fail<T>(status: HamStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

impl From<ham_core::Error> for Failure {
    fn from(e: ham_core::Error) -> Self {
        let status = match e.category() {
            "io" => HamStatus::Io,
            "parse" | "data" => HamStatus::Parse,
            "checkpoint" => HamStatus::Checkpoint,
            "shape" => HamStatus::Shape,
            _ => HamStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn guard(body: impl FnOnce() -> FfiResult) -> HamStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            HamStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HamStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(HamStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(HamStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(HamStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(HamStatus::InvalidArgument, "path is not valid UTF-8"),
    }
}

/// Description of the last failure on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn ham_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code, for logging.
#[no_mangle]
pub extern "C" fn ham_status_name(status: HamStatus) -> *const c_char {
    let name: &'static CStr = match status {
        HamStatus::Ok => c"ok",
        HamStatus::NullPointer => c"null pointer",
        HamStatus::InvalidArgument => c"invalid argument",
        HamStatus::Io => c"io error",
        HamStatus::Parse => c"parse error",
        HamStatus::Checkpoint => c"invalid checkpoint",
        HamStatus::Shape => c"shape mismatch",
        HamStatus::OutOfRange => c"out of range",
        HamStatus::Panic => c"internal panic",
    };
    name.as_ptr()
}

/// Loads a checkpoint written by `ham train`. On success `*out` owns a new
/// handle; on failure it is set to null.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ham_model_load(path: *const c_char, out: *mut *mut HamModel) -> HamStatus {
    guard(|| {
        if out.is_null() {
            return fail(HamStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let ckpt = load_checkpoint(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(HamModel { ckpt }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`ham_model_load`] and not be freed twice. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn ham_model_free(model: *mut HamModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ham_model_num_users(model: *const HamModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.params.num_users())
}

/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ham_model_num_items(model: *const HamModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.params.num_items())
}

/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ham_model_dim(model: *const HamModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.params.dim())
}

/// Length of the context window the model reads; longer contexts are
/// truncated to their most recent items, shorter ones are padded.
///
/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ham_model_context_length(model: *const HamModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.hyper.n_h)
}

fn scores_for(model: &HamModel, user: usize, context: &[usize]) -> Result<Vec<f64>, Failure> {
    let params = &model.ckpt.params;
    if user >= params.num_users() {
        return fail(
            HamStatus::OutOfRange,
            format!(
                "user {user} out of range (model has {})",
                params.num_users()
            ),
        );
    }
    if let Some(&bad) = context.iter().find(|&&j| j >= params.num_items()) {
        return fail(
            HamStatus::OutOfRange,
            format!("item {bad} out of range (model has {})", params.num_items()),
        );
    }
    let (window, pad_count) = context_window(context, model.ckpt.hyper.n_h, params.pad_id());
    score_all(user, &window, pad_count, params, &model.ckpt.hyper)
        .map_err(|e| Failure(HamStatus::InvalidArgument, e.to_string()))
}

/// Scores every item for `user` given `context` (oldest first). Writes
/// `ham_model_num_items` values to `out_scores`, whose capacity is
/// `out_len`.
///
/// # Safety
/// `model` must be a live handle; `context` must point to `context_len`
/// ids; `out_scores` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ham_model_score_all(
    model: *const HamModel,
    user: usize,
    context: *const usize,
    context_len: usize,
    out_scores: *mut f64,
    out_len: usize,
) -> HamStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        let context = slice(context, context_len, "context")?;
        let n = model.ckpt.params.num_items();
        if out_scores.is_null() {
            return fail(HamStatus::NullPointer, "out_scores is null");
        }
        if out_len < n {
            return fail(
                HamStatus::InvalidArgument,
                format!("out_len {out_len} is smaller than the item count {n}"),
            );
        }
        let scores = scores_for(model, user, context)?;
        std::slice::from_raw_parts_mut(out_scores, n).copy_from_slice(&scores);
        Ok(())
    })
}

/// Writes the `k` highest-scoring item ids (best first, ties by lower id)
/// to `out_items`, skipping the `exclude_len` ids in `exclude`.
///
/// # Safety
/// `model` must be a live handle; `context` and `exclude` must point to
/// the given number of ids (or be null with length 0); `out_items` must
/// point to `k` writable ids.
#[no_mangle]
pub unsafe extern "C" fn ham_model_top_k(
    model: *const HamModel,
    user: usize,
    context: *const usize,
    context_len: usize,
    exclude: *const usize,
    exclude_len: usize,
    k: usize,
    out_items: *mut usize,
) -> HamStatus {
    guard(|| {
        let model = non_null(model, "model")?;
        let context = slice(context, context_len, "context")?;
        let exclude: HashSet<usize> = slice(exclude, exclude_len, "exclude")?
            .iter()
            .copied()
            .collect();
        if k > 0 && out_items.is_null() {
            return fail(HamStatus::NullPointer, "out_items is null");
        }
        let scores = scores_for(model, user, context)?;
        let ranked = match top_k(&scores, k, &exclude) {
            Ok(r) => r,
            Err(e) => return fail(HamStatus::InvalidArgument, e.to_string()),
        };
        if k > 0 {
            std::slice::from_raw_parts_mut(out_items, k).copy_from_slice(&ranked);
        }
        Ok(())
    })
}

/// Loads a dataset file written by `ham preprocess`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ham_dataset_load(
    path: *const c_char,
    out: *mut *mut HamDataset,
) -> HamStatus {
    guard(|| {
        if out.is_null() {
            return fail(HamStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let dataset = load_dataset(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(HamDataset { dataset }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`ham_dataset_load`] and not be freed twice.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ham_dataset_free(dataset: *mut HamDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `dataset` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ham_dataset_num_users(dataset: *const HamDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.dataset.num_users())
}

/// # Safety
/// `dataset` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ham_dataset_num_items(dataset: *const HamDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.dataset.num_items())
}

/// Borrows a user's chronological item sequence. The pointer stays valid
/// while the dataset handle lives.
///
/// # Safety
/// `dataset` must be a live handle; `out_items` and `out_len` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ham_dataset_sequence(
    dataset: *const HamDataset,
    user: usize,
    out_items: *mut *const usize,
    out_len: *mut usize,
) -> HamStatus {
    guard(|| {
        let dataset = &non_null(dataset, "dataset")?.dataset;
        if out_items.is_null() || out_len.is_null() {
            return fail(HamStatus::NullPointer, "output pointer is null");
        }
        if user >= dataset.num_users() {
            return fail(
                HamStatus::OutOfRange,
                format!(
                    "user {user} out of range (dataset has {})",
                    dataset.num_users()
                ),
            );
        }
        let seq = dataset.sequence(user);
        *out_items = seq.as_ptr();
        *out_len = seq.len();
        Ok(())
    })
}

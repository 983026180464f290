//! C interface to trained wallcast models.
//!
//! Models are opaque handles created by a `*_load` call and released with
//! the matching `*_free`. Every fallible call returns a [`WcStatus`]; on
//! failure [`wc_last_error`] describes what went wrong on the calling thread.
//! Output buffers are caller-owned and their lengths are checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use wallcast::convlstm::{count_params_for_plan, ConvLstmStack};
use wallcast::ensemble::MetaNet;
use wallcast::{forecast, metrics, weights, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WcStatus {
    Ok = 0,
    /// Bad argument, including a buffer of the wrong length.
    InvalidArgument = 1,
    /// Unreadable, missing or malformed input.
    Data = 2,
    /// A non-finite value or a degenerate computation.
    Numerical = 3,
    NullPointer = 4,
    /// An internal panic was caught at the boundary.
    Internal = 5,
}

/// A trained single-step ConvLSTM forecaster.
pub struct WcBaseModel {
    inner: ConvLstmStack,
}

/// A trained meta-learner combining three base forecasts.
pub struct WcMetaModel {
    inner: MetaNet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> WcStatus {
    match err {
        Error::InvalidArgument(_) | Error::Shape(_) => WcStatus::InvalidArgument,
        Error::NonFinite(_) | Error::Numerical(_) => WcStatus::Numerical,
        _ => WcStatus::Data,
    }
}

fn fail(status: WcStatus, msg: impl Into<String>) -> WcStatus {
    set_last_error(msg.into());
    status
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), WcStatus>) -> WcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => WcStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(WcStatus::Internal, "internal panic"),
    }
}

fn lift<T>(r: wallcast::Result<T>) -> Result<T, WcStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], WcStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(WcStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], WcStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(WcStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, WcStatus> {
    p.as_ref().ok_or_else(|| fail(WcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, WcStatus> {
    if p.is_null() {
        return Err(fail(WcStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(WcStatus::InvalidArgument, "path is not valid UTF-8"))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), WcStatus> {
    if got == want {
        Ok(())
    } else {
        Err(fail(WcStatus::InvalidArgument, format!("{what} has length {got}, expected {want}")))
    }
}

/// The message for the last failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Trainable parameters of a ConvLSTM stack with the given channel plan
/// (input channels first) and spatial size, including the dense head.
///
/// # Safety
/// `channels` must point to `n_channels` readable values.
#[no_mangle]
pub unsafe extern "C" fn wc_count_params(
    channels: *const usize,
    n_channels: usize,
    spatial: usize,
    out: *mut usize,
) -> WcStatus {
    guard(|| {
        if channels.is_null() || out.is_null() {
            return Err(fail(WcStatus::NullPointer, "channels or out is null"));
        }
        let plan = std::slice::from_raw_parts(channels, n_channels);
        if plan.len() < 2 || plan.contains(&0) || spatial == 0 {
            return Err(fail(WcStatus::InvalidArgument, "need at least two positive channel counts and a positive spatial size"));
        }
        *out = count_params_for_plan(plan, spatial);
        Ok(())
    })
}

/// Loads a base model saved by the command line tool.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wc_base_model_load(path: *const c_char, out: *mut *mut WcBaseModel) -> WcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(WcStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let inner = lift(weights::load_stack(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(WcBaseModel { inner }));
        Ok(())
    })
}

/// Releases a base model. Null is ignored.
///
/// # Safety
/// `model` must come from [`wc_base_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wc_base_model_free(model: *mut WcBaseModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of past profiles the model reads; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wc_base_model_resolution(model: *const WcBaseModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.resolution())
}

/// Points per profile; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wc_base_model_points(model: *const WcBaseModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.spatial())
}

/// Trainable parameters; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wc_base_model_param_count(model: *const WcBaseModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.count_params())
}

/// Predicts the next profile from `resolution` past profiles stored
/// oldest first, row by row. Displacements are in metres.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn wc_base_model_predict(
    model: *const WcBaseModel,
    window: *const f64,
    window_len: usize,
    out: *mut f64,
    out_len: usize,
) -> WcStatus {
    guard(|| {
        let m = &reference(model, "model")?.inner;
        check_len(window_len, m.resolution() * m.spatial(), "window")?;
        check_len(out_len, m.spatial(), "out")?;
        let next = lift(m.predict(slice(window, window_len, "window")?))?;
        slice_mut(out, out_len, "out")?.copy_from_slice(&next);
        Ok(())
    })
}

/// Recursively forecasts `horizon` profiles from the end of `history`
/// (whole profiles, oldest first). `out` receives `horizon * points` values.
///
/// # Safety
/// Buffers must hold the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn wc_base_model_rollout(
    model: *const WcBaseModel,
    history: *const f64,
    history_len: usize,
    horizon: usize,
    out: *mut f64,
    out_len: usize,
) -> WcStatus {
    guard(|| {
        let m = &reference(model, "model")?.inner;
        check_len(out_len, horizon * m.spatial(), "out")?;
        let r = lift(forecast::rollout(m, "ffi", slice(history, history_len, "history")?, horizon))?;
        slice_mut(out, out_len, "out")?.copy_from_slice(&r.predictions);
        Ok(())
    })
}

/// Loads a meta-learner saved by the command line tool.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wc_meta_model_load(path: *const c_char, out: *mut *mut WcMetaModel) -> WcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(WcStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let inner = lift(weights::load_meta(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(WcMetaModel { inner }));
        Ok(())
    })
}

/// Releases a meta-learner. Null is ignored.
///
/// # Safety
/// `model` must come from [`wc_meta_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn wc_meta_model_free(model: *mut WcMetaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trainable parameters; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wc_meta_model_param_count(model: *const WcMetaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.count_params())
}

/// Combines base forecasts pointwise. `inputs` holds `n` triples, one
/// value per base model in resolution order; `out` receives `n` values.
///
/// # Safety
/// `inputs` must hold `3 * n` values and `out` must hold `n`.
#[no_mangle]
pub unsafe extern "C" fn wc_meta_model_predict(
    model: *const WcMetaModel,
    inputs: *const f64,
    n: usize,
    out: *mut f64,
) -> WcStatus {
    guard(|| {
        let m = &reference(model, "model")?.inner;
        let flat = slice(inputs, 3 * n, "inputs")?;
        let xs: Vec<[f64; 3]> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let ys = lift(m.predict_many(&xs))?;
        slice_mut(out, n, "out")?.copy_from_slice(&ys);
        Ok(())
    })
}

/// Goodness of fit between predictions and observations.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WcScores {
    pub mae: f64,
    pub r2: f64,
    /// Willmott's index of agreement.
    pub ioa: f64,
}

/// Scores `n` paired values.
///
/// # Safety
/// `pred` and `obs` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wc_score(pred: *const f64, obs: *const f64, n: usize, out: *mut WcScores) -> WcStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(WcStatus::NullPointer, "out is null"));
        }
        let (p, o) = (slice(pred, n, "pred")?, slice(obs, n, "obs")?);
        *out = WcScores {
            mae: lift(metrics::mae(p, o))?,
            r2: lift(metrics::r2(p, o))?,
            ioa: lift(metrics::ioa(p, o))?,
        };
        Ok(())
    })
}

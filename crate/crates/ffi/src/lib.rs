//! C ABI over `equisr`.
//!
//! Images and models are opaque heap handles released with their `_free`
//! function. Every fallible call returns an [`EquisrStatus`]; on failure the
//! message is kept per thread and read back with [`equisr_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use equisr::config::RunConfig;
use equisr::data::{read_image, write_image};
use equisr::group::Image;
use equisr::harness::{equivariance_error, load_checkpoint};
use equisr::inr::InrModel;
use equisr::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquisrStatus {
    Ok = 0,
    /// Null pointer, non-UTF-8 string or overflowing size.
    InvalidArgument = 1,
    Config = 2,
    Io = 3,
    Parse = 4,
    Checkpoint = 5,
    Shape = 6,
    Domain = 7,
    UndefinedMetric = 8,
    /// Non-finite values or a failed evaluation.
    Numeric = 9,
    /// Internal invariant broken, including caught panics.
    Internal = 10,
}

/// A height × width × channels image of 64-bit samples.
pub struct EquisrImage {
    inner: Image,
}

/// Parameters and architecture of a super-resolution model.
pub struct EquisrModel {
    inner: InrModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> EquisrStatus {
    match err {
        Error::Config(_) | Error::InvalidOrder(_) => EquisrStatus::Config,
        Error::Io { .. } => EquisrStatus::Io,
        Error::Parse { .. } => EquisrStatus::Parse,
        Error::Checkpoint(_) => EquisrStatus::Checkpoint,
        Error::Shape(_)
        | Error::GroupIndex { .. }
        | Error::GroupMismatch { .. }
        | Error::Matrix(_) => EquisrStatus::Shape,
        Error::Domain(_) => EquisrStatus::Domain,
        Error::UndefinedMetric(_) => EquisrStatus::UndefinedMetric,
        Error::NonFinite { .. } | Error::Evaluation(_) => EquisrStatus::Numeric,
        Error::Catalogue(_) | Error::Contract(_) => EquisrStatus::Internal,
    }
}

struct Failure(EquisrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(EquisrStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EquisrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EquisrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            EquisrStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn equisr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn equisr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `h * w * c` samples, laid out row-major with channels last.
///
/// # Safety
/// `data` must point to `h * w * c` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equisr_image_new(
    h: usize,
    w: usize,
    c: usize,
    data: *const f64,
    out: *mut *mut EquisrImage,
) -> EquisrStatus {
    guard(|| {
        if data.is_null() {
            return Err(invalid("data is null"));
        }
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| invalid("image size overflows"))?;
        let samples = std::slice::from_raw_parts(data, n).to_vec();
        put(
            out,
            EquisrImage {
                inner: Image::from_vec(h, w, c, samples)?,
            },
        )
    })
}

/// Reads a binary PPM (P6) or PGM (P5) file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equisr_image_read(
    path: *const c_char,
    out: *mut *mut EquisrImage,
) -> EquisrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(
            out,
            EquisrImage {
                inner: read_image(path)?,
            },
        )
    })
}

/// Writes a 1-channel image as PGM and a 3-channel image as PPM.
///
/// # Safety
/// `img` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn equisr_image_write(
    img: *const EquisrImage,
    path: *const c_char,
) -> EquisrStatus {
    guard(|| {
        let img = ref_arg(img, "image")?;
        let path = str_arg(path, "path")?;
        write_image(path, &img.inner)?;
        Ok(())
    })
}

/// Height, width and channel count; any output pointer may be null.
///
/// # Safety
/// `img` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn equisr_image_shape(
    img: *const EquisrImage,
    h: *mut usize,
    w: *mut usize,
    c: *mut usize,
) -> EquisrStatus {
    guard(|| {
        let img = &ref_arg(img, "image")?.inner;
        for (p, v) in [(h, img.h), (w, img.w), (c, img.c)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Borrowed view of the samples, valid until the image is freed.
/// Returns null for a null handle.
///
/// # Safety
/// `img` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn equisr_image_data(img: *const EquisrImage) -> *const f64 {
    img.as_ref().map_or(ptr::null(), |i| i.inner.data.as_ptr())
}

/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn equisr_image_free(img: *mut EquisrImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Randomly initialized model from a run configuration in the JSON format
/// of the command-line `--config` file; null selects the defaults.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equisr_model_random(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut EquisrModel,
) -> EquisrStatus {
    guard(|| {
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_json(str_arg(config_json, "config")?)?
        };
        put(
            out,
            EquisrModel {
                inner: InrModel::new(cfg.model_config()?, seed)?,
            },
        )
    })
}

/// Loads a checkpoint manifest written by `equisr train`.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn equisr_model_load(
    path: *const c_char,
    out: *mut *mut EquisrModel,
) -> EquisrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(
            out,
            EquisrModel {
                inner: load_checkpoint(path.as_ref())?,
            },
        )
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn equisr_model_free(model: *mut EquisrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Upscales `img` by `scale` (≥ 1); the output side is `round(scale * side)`.
///
/// # Safety
/// `model` and `img` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn equisr_super_resolve(
    model: *const EquisrModel,
    img: *const EquisrImage,
    scale: f64,
    out: *mut *mut EquisrImage,
) -> EquisrStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let img = ref_arg(img, "image")?;
        put(
            out,
            EquisrImage {
                inner: model.inner.super_resolve(&img.inner, scale)?,
            },
        )
    })
}

/// NMSE and NMAE between `SR(rotate(img))` and `rotate(SR(img))`. The
/// inscribed-disk mask applies when `angle_rad` is not a right-angle multiple.
///
/// # Safety
/// `model` and `img` must be live handles; `nmse` and `nmae` may be null.
#[no_mangle]
pub unsafe extern "C" fn equisr_equivariance_error(
    model: *const EquisrModel,
    img: *const EquisrImage,
    angle_rad: f64,
    scale: f64,
    nmse: *mut f64,
    nmae: *mut f64,
) -> EquisrStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let img = ref_arg(img, "image")?;
        let eps = model.inner.config().inr.eps;
        let e = equivariance_error(&model.inner, &img.inner, angle_rad, scale, eps, None)?;
        if !nmse.is_null() {
            *nmse = e.nmse;
        }
        if !nmae.is_null() {
            *nmae = e.nmae;
        }
        Ok(())
    })
}

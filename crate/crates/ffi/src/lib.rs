//! C interface to the pansharpening toolkit.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`ThatStatus`]; on failure, [`that_last_error_message`] describes the
//! problem until the next failing call on the same thread. Cube values are
//! `float` arrays in band-major order (`band`, `row`, `column`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use that_core::metrics::{evaluate, MetricsReport};
use that_core::model::{load_checkpoint, save_checkpoint, ModelConfig, That};
use that_core::nn::parameter_count;
use that_core::training::predict;
use that_core::wald::{load_cube, make_synthetic_scene, save_cube, wald_degrade, HyperCube, PanImage, WaldConfig};
use that_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Dimension = 4,
    Format = 5,
    Io = 6,
    Numerical = 7,
    Internal = 8,
}

/// A hyperspectral cube (a pan image is a one-band cube).
pub struct ThatCube(HyperCube);

/// A network with single-precision weights.
pub struct ThatModel(That<f32>);

/// Fusion quality scores with per-band PSNR.
pub struct ThatReport(MetricsReport);

/// Scalar scores of a [`ThatReport`].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ThatMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
    pub sam_deg: f64,
    pub ergas: f64,
    pub scc: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(e: &Error) -> ThatStatus {
    match e {
        Error::Config(_) => ThatStatus::Config,
        Error::Dimension(_) | Error::EmptySelection(_) | Error::DegenerateReference(_) => ThatStatus::Dimension,
        Error::Format { .. } => ThatStatus::Format,
        Error::Io { .. } => ThatStatus::Io,
        Error::Numerical(_) | Error::DegenerateSlice { .. } => ThatStatus::Numerical,
        Error::Contract(_) => ThatStatus::InvalidArgument,
    }
}

/// Failure carried through a call body before it becomes a status.
struct Fail(ThatStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ThatStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(ThatStatus::InvalidArgument, msg.into())
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> ThatStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ThatStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal error: {msg}"));
            ThatStatus::Internal
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slot<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, Fail> {
    let slot = p.as_mut().ok_or_else(|| null("output pointer"))?;
    *slot = ptr::null_mut();
    Ok(slot)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn that_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn that_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a cube from `height·width·bands` band-major values.
///
/// # Safety
/// `values` must point to `height·width·bands` readable floats and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn that_cube_new(
    height: usize,
    width: usize,
    bands: usize,
    values: *const f32,
    out: *mut *mut ThatCube,
) -> ThatStatus {
    guard(|| {
        let slot = out_slot(out)?;
        if values.is_null() {
            return Err(null("values"));
        }
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(bands))
            .ok_or_else(|| invalid("cube size overflows"))?;
        let data = std::slice::from_raw_parts(values, n).to_vec();
        *slot = boxed(ThatCube(HyperCube::new(height, width, bands, data, None)?));
        Ok(())
    })
}

/// Loads an HSC1 cube file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn that_cube_load(path: *const c_char, out: *mut *mut ThatCube) -> ThatStatus {
    guard(|| {
        let slot = out_slot(out)?;
        *slot = boxed(ThatCube(load_cube(&path_arg(path)?)?));
        Ok(())
    })
}

/// Writes a cube as an HSC1 file.
///
/// # Safety
/// `cube` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn that_cube_save(cube: *const ThatCube, path: *const c_char) -> ThatStatus {
    guard(|| {
        let c = handle(cube, "cube")?;
        save_cube(&c.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// Deterministic synthetic scene of `size×size` pixels.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn that_cube_synthetic(
    seed: u64,
    size: usize,
    bands: usize,
    out: *mut *mut ThatCube,
) -> ThatStatus {
    guard(|| {
        let slot = out_slot(out)?;
        *slot = boxed(ThatCube(make_synthetic_scene(seed, size, size, bands)?));
        Ok(())
    })
}

/// Extents of a cube. Any output pointer may be null.
///
/// # Safety
/// `cube` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn that_cube_dims(
    cube: *const ThatCube,
    height: *mut usize,
    width: *mut usize,
    bands: *mut usize,
) -> ThatStatus {
    guard(|| {
        let c = &handle(cube, "cube")?.0;
        for (p, v) in [(height, c.height()), (width, c.width()), (bands, c.bands())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the band-major values into `buf`, which must hold exactly
/// `height·width·bands` floats (`len`).
///
/// # Safety
/// `cube` must be a live handle and `buf` must have room for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn that_cube_copy_values(cube: *const ThatCube, buf: *mut f32, len: usize) -> ThatStatus {
    guard(|| {
        let data = handle(cube, "cube")?.0.values().data();
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len != data.len() {
            return Err(invalid(format!("buffer holds {len} floats, cube has {}", data.len())));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(data);
        Ok(())
    })
}

/// Releases a cube. Null is ignored.
///
/// # Safety
/// `cube` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn that_cube_free(cube: *mut ThatCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// Reduced-resolution pair of a reference cube: blurred and decimated LR
/// cube plus the synthesized pan image, with the default blur for `scale`.
///
/// # Safety
/// `reference` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn that_wald_degrade(
    reference: *const ThatCube,
    scale: usize,
    out_lr: *mut *mut ThatCube,
    out_pan: *mut *mut ThatCube,
) -> ThatStatus {
    guard(|| {
        let r = handle(reference, "reference")?;
        let lr_slot = out_slot(out_lr)?;
        let pan_slot = out_slot(out_pan)?;
        let (lr, pan) = wald_degrade(&r.0, &WaldConfig::for_scale(scale))?;
        *lr_slot = boxed(ThatCube(lr));
        *pan_slot = boxed(ThatCube(pan.to_cube()));
        Ok(())
    })
}

/// Fresh network with the given sizes and every block component enabled.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn that_model_new(
    bands: usize,
    channels: usize,
    blocks: usize,
    heads: usize,
    window: usize,
    scale: usize,
    seed: u64,
    out: *mut *mut ThatModel,
) -> ThatStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let cfg = ModelConfig {
            bands,
            channels,
            blocks,
            heads,
            window,
            scale,
            ..ModelConfig::default()
        };
        *slot = boxed(ThatModel(That::new(cfg, seed)?));
        Ok(())
    })
}

/// Loads a checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn that_model_load(path: *const c_char, out: *mut *mut ThatModel) -> ThatStatus {
    guard(|| {
        let slot = out_slot(out)?;
        *slot = boxed(ThatModel(load_checkpoint(&path_arg(path)?)?));
        Ok(())
    })
}

/// Writes a checkpoint.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn that_model_save(model: *const ThatModel, path: *const c_char) -> ThatStatus {
    guard(|| {
        save_checkpoint(&handle(model, "model")?.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// Number of learnable scalars, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn that_model_param_count(model: *const ThatModel) -> u64 {
    model.as_ref().map_or(0, |m| parameter_count(&m.0) as u64)
}

/// Fuses an LR cube with a one-band pan cube.
///
/// # Safety
/// Handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn that_model_predict(
    model: *const ThatModel,
    lr: *const ThatCube,
    pan: *const ThatCube,
    out: *mut *mut ThatCube,
) -> ThatStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let y = handle(lr, "lr")?;
        let x = PanImage::from_cube(&handle(pan, "pan")?.0)?;
        let slot = out_slot(out)?;
        *slot = boxed(ThatCube(predict(&m.0, &y.0, &x)?));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn that_model_free(model: *mut ThatModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores `pred` against `reference` at resolution ratio `scale`.
///
/// # Safety
/// Handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn that_evaluate(
    pred: *const ThatCube,
    reference: *const ThatCube,
    scale: usize,
    out: *mut *mut ThatReport,
) -> ThatStatus {
    guard(|| {
        let p = handle(pred, "pred")?;
        let r = handle(reference, "reference")?;
        let slot = out_slot(out)?;
        *slot = boxed(ThatReport(evaluate(&p.0, &r.0, scale)?));
        Ok(())
    })
}

/// Scalar scores of a report.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn that_report_metrics(report: *const ThatReport, out: *mut ThatMetrics) -> ThatStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        let o = out.as_mut().ok_or_else(|| null("output pointer"))?;
        *o = ThatMetrics {
            psnr_db: r.psnr_db,
            ssim: r.ssim,
            sam_deg: r.sam_deg,
            ergas: r.ergas,
            scc: r.scc,
        };
        Ok(())
    })
}

/// Number of per-band PSNR entries, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn that_report_band_count(report: *const ThatReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.psnr_per_band.len())
}

/// Copies per-band PSNR into `buf` of exactly `len` doubles.
///
/// # Safety
/// `report` must be a live handle and `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn that_report_band_psnr(report: *const ThatReport, buf: *mut f64, len: usize) -> ThatStatus {
    guard(|| {
        let bands = &handle(report, "report")?.0.psnr_per_band;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len != bands.len() {
            return Err(invalid(format!(
                "buffer holds {len} values, report has {}",
                bands.len()
            )));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(bands);
        Ok(())
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn that_report_free(report: *mut ThatReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

//! C interface to `irt_rank`.
//!
//! Sequences and curves are opaque handles owned by the caller and released
//! with their `_free` function. Every call returns an [`IrtStatus`]; on failure
//! [`irt_last_error_message`] describes the error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use irt_rank::curve::MetricCurve;
use irt_rank::hi::{hi_curve, HiConfig};
use irt_rank::model::{load_sequence, AxisKind, Frame, Sequence};
use irt_rank::ppt::ppt_transform;
use irt_rank::rea_tve::{rea_tve_curve, ReaTveConfig};
use irt_rank::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Dimension = 5,
    OutOfBounds = 6,
    Config = 7,
    Numeric = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrtAxisKind {
    Time = 0,
    Frequency = 1,
    Coefficient = 2,
}

impl From<IrtAxisKind> for AxisKind {
    fn from(k: IrtAxisKind) -> Self {
        match k {
            IrtAxisKind::Time => AxisKind::Time,
            IrtAxisKind::Frequency => AxisKind::Frequency,
            IrtAxisKind::Coefficient => AxisKind::Coefficient,
        }
    }
}

/// Image sequence handle.
pub struct IrtSequence(Sequence);

/// Metric curve handle.
pub struct IrtCurve(MetricCurve);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> IrtStatus {
    match e {
        Error::Io { .. } => IrtStatus::Io,
        Error::Format(_) => IrtStatus::Format,
        Error::Dimension(_) => IrtStatus::Dimension,
        Error::OutOfBounds(_) => IrtStatus::OutOfBounds,
        Error::InvalidArgument(_) => IrtStatus::InvalidArgument,
        Error::Config(_) => IrtStatus::Config,
        Error::Numeric(_) => IrtStatus::Numeric,
    }
}

/// Run `f`, turning errors and panics into a status and the thread's message.
fn guard(f: impl FnOnce() -> Result<(), (IrtStatus, String)>) -> IrtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IrtStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            IrtStatus::Panic
        }
    }
}

fn lib<T>(r: irt_rank::Result<T>) -> Result<T, (IrtStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (IrtStatus, String) {
    (IrtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn seq_ref<'a>(s: *const IrtSequence) -> Result<&'a Sequence, (IrtStatus, String)> {
    s.as_ref().map(|s| &s.0).ok_or_else(|| null("sequence"))
}

unsafe fn put<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn irt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn irt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Load a stack directory (`header.json` + `data.raw`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irt_sequence_load(path: *const c_char, out: *mut *mut IrtSequence) -> IrtStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (IrtStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let seq = lib(load_sequence(Path::new(p)))?;
        put(out, IrtSequence(seq));
        Ok(())
    })
}

/// Build a sequence from `n_frames * height * width` values, frame-major and
/// row-major, and `n_frames` strictly increasing axis values.
///
/// # Safety
/// `data` and `axis_values` must point to that many doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn irt_sequence_from_data(
    data: *const f64,
    width: usize,
    height: usize,
    n_frames: usize,
    axis_kind: IrtAxisKind,
    axis_values: *const f64,
    out: *mut *mut IrtSequence,
) -> IrtStatus {
    guard(|| {
        if data.is_null() || axis_values.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let px = width
            .checked_mul(height)
            .filter(|&p| p > 0 && n_frames > 0)
            .ok_or((IrtStatus::Dimension, format!("{width}x{height}x{n_frames} is empty or too large")))?;
        let total = px
            .checked_mul(n_frames)
            .ok_or((IrtStatus::Dimension, "sequence too large".to_string()))?;
        let values = std::slice::from_raw_parts(data, total);
        let frames = values
            .chunks_exact(px)
            .map(|c| Frame::new(width, height, c.to_vec()))
            .collect::<irt_rank::Result<Vec<_>>>();
        let axis = std::slice::from_raw_parts(axis_values, n_frames).to_vec();
        let seq = lib(frames.and_then(|f| Sequence::new(f, axis_kind.into(), axis)))?;
        put(out, IrtSequence(seq));
        Ok(())
    })
}

/// # Safety
/// `seq` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn irt_sequence_free(seq: *mut IrtSequence) {
    if !seq.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(seq))));
    }
}

/// # Safety
/// `seq` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn irt_sequence_dims(
    seq: *const IrtSequence,
    width: *mut usize,
    height: *mut usize,
    n_frames: *mut usize,
) -> IrtStatus {
    guard(|| {
        let s = seq_ref(seq)?;
        for (p, v) in [(width, s.width()), (height, s.height()), (n_frames, s.len())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copy frame `index` into `buf`, which holds `len >= width * height` doubles.
///
/// # Safety
/// `seq` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn irt_sequence_copy_frame(
    seq: *const IrtSequence,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> IrtStatus {
    guard(|| {
        let s = seq_ref(seq)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if index >= s.len() {
            return Err((IrtStatus::OutOfBounds, format!("frame {index} of {}", s.len())));
        }
        let v = s.frame(index).values();
        if len < v.len() {
            return Err((IrtStatus::Dimension, format!("buffer holds {len}, frame has {}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// HI curve with automatic bin count and cell size.
///
/// # Safety
/// `seq` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn irt_hi_curve(seq: *const IrtSequence, out: *mut *mut IrtCurve) -> IrtStatus {
    guard(|| {
        let s = seq_ref(seq)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = lib(hi_curve(s, &HiConfig::default()))?;
        put(out, IrtCurve(c));
        Ok(())
    })
}

/// TVE and REA curves with `phi` phases, `nos` windows per size and `seed`.
/// Zero for `phi` or `nos` selects the default.
///
/// # Safety
/// `seq` must be a live handle and both outputs valid.
#[no_mangle]
pub unsafe extern "C" fn irt_rea_tve_curves(
    seq: *const IrtSequence,
    phi: usize,
    nos: usize,
    seed: u64,
    out_tve: *mut *mut IrtCurve,
    out_rea: *mut *mut IrtCurve,
) -> IrtStatus {
    guard(|| {
        let s = seq_ref(seq)?;
        if out_tve.is_null() || out_rea.is_null() {
            return Err(null("out"));
        }
        let d = ReaTveConfig::default();
        let cfg = ReaTveConfig {
            phi: if phi == 0 { d.phi } else { phi },
            nos_set: if nos == 0 { d.nos_set } else { nos },
            seed,
            ..d
        };
        if !(2..=255).contains(&cfg.phi) {
            return Err((IrtStatus::InvalidArgument, format!("phi must be in 2..=255, got {phi}")));
        }
        let (tve, rea) = lib(rea_tve_curve(s, &cfg))?;
        put(out_tve, IrtCurve(tve));
        put(out_rea, IrtCurve(rea));
        Ok(())
    })
}

/// Amplitude and phase stacks of a time sequence.
///
/// # Safety
/// `seq` must be a live handle and both outputs valid.
#[no_mangle]
pub unsafe extern "C" fn irt_ppt(
    seq: *const IrtSequence,
    out_amplitude: *mut *mut IrtSequence,
    out_phase: *mut *mut IrtSequence,
) -> IrtStatus {
    guard(|| {
        let s = seq_ref(seq)?;
        if out_amplitude.is_null() || out_phase.is_null() {
            return Err(null("out"));
        }
        let pair = lib(ppt_transform(s))?;
        put(out_amplitude, IrtSequence(pair.amplitude));
        put(out_phase, IrtSequence(pair.phase));
        Ok(())
    })
}

/// Number of points, 0 for a null handle.
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irt_curve_len(curve: *const IrtCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.0.len())
}

/// Curve values, valid while the handle lives; null for a null handle.
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irt_curve_values(curve: *const IrtCurve) -> *const f64 {
    curve.as_ref().map_or(ptr::null(), |c| c.0.values.as_ptr())
}

/// Axis values (s or Hz) matching [`irt_curve_values`].
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irt_curve_axis(curve: *const IrtCurve) -> *const f64 {
    curve.as_ref().map_or(ptr::null(), |c| c.0.axis_values.as_ptr())
}

/// # Safety
/// `curve` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn irt_curve_free(curve: *mut IrtCurve) {
    if !curve.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(curve))));
    }
}

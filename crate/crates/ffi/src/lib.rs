//! C ABI over the leafx front-end.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `_free` function. Every fallible call returns a [`LeafxStatus`]
//! and leaves a message retrievable with [`leafx_last_error_message`] on the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use leafx::{cli, textio, Error, FeatureContainer, FrontendConfig, FrontendParams, Waveform};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    InvalidConfig = 10,
    InvalidParam = 11,
    SignalTooShort = 12,
    ShapeMismatch = 13,
    NegativePower = 14,
    Precondition = 15,
    NonSmooth = 16,
    UnsupportedFormat = 17,
    Format = 18,
    Io = 19,
    Panic = 99,
}

impl From<&Error> for LeafxStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidConfig(_) => LeafxStatus::InvalidConfig,
            Error::InvalidParam(_) => LeafxStatus::InvalidParam,
            Error::SignalTooShort { .. } => LeafxStatus::SignalTooShort,
            Error::ShapeMismatch(_) => LeafxStatus::ShapeMismatch,
            Error::NegativePower { .. } => LeafxStatus::NegativePower,
            Error::Precondition(_) => LeafxStatus::Precondition,
            Error::NonSmooth(_) => LeafxStatus::NonSmooth,
            Error::UnsupportedFormat(_) => LeafxStatus::UnsupportedFormat,
            Error::Format(_) => LeafxStatus::Format,
            Error::Io(_) => LeafxStatus::Io,
        }
    }
}

/// Configuration plus optional explicit parameters.
pub struct LeafxFrontend {
    config: FrontendConfig,
    /// `None` means mel-spaced defaults derived from the sample rate at extraction.
    params: Option<FrontendParams>,
}

/// Extracted feature planes in storage precision.
pub struct LeafxFeatures {
    container: FeatureContainer,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(LeafxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(LeafxStatus::from(&e), e.to_string())
    }
}

fn fail<T>(status: LeafxStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LeafxStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LeafxStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            LeafxStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(LeafxStatus::NullPointer, format!("{what} is NULL"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(LeafxStatus::InvalidArgument, format!("{what} is not valid UTF-8")),
    }
}

unsafe fn features_ref<'a>(f: *const LeafxFeatures) -> Result<&'a LeafxFeatures, Failure> {
    f.as_ref().map_or_else(|| fail(LeafxStatus::NullPointer, "features handle is NULL"), Ok)
}

fn channel_index(f: &LeafxFeatures, index: usize) -> Result<usize, Failure> {
    if index >= f.container.num_channels() {
        return fail(
            LeafxStatus::OutOfRange,
            format!("channel {index} out of range, have {}", f.container.num_channels()),
        );
    }
    Ok(index)
}

fn boxed_frontend(out: *mut *mut LeafxFrontend, fe: LeafxFrontend) -> Result<(), Failure> {
    // SAFETY: checked non-null by the caller of this helper.
    unsafe { *out = Box::into_raw(Box::new(fe)) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn leafx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL after a success.
/// The pointer stays valid until the next leafx call on the same thread.
#[no_mangle]
pub extern "C" fn leafx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Front-end with the default configuration and mel-spaced parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn leafx_frontend_new_default(out: *mut *mut LeafxFrontend) -> LeafxStatus {
    guard(|| {
        if out.is_null() {
            return fail(LeafxStatus::NullPointer, "out is NULL");
        }
        boxed_frontend(out, LeafxFrontend { config: leafx::default_config(), params: None })
    })
}

/// Front-end from text files. Either path may be NULL: a NULL config selects the
/// defaults and a NULL params file selects mel-spaced parameters.
///
/// # Safety
/// Non-NULL paths must be NUL-terminated strings. `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn leafx_frontend_from_files(
    config_path: *const c_char,
    params_path: *const c_char,
    out: *mut *mut LeafxFrontend,
) -> LeafxStatus {
    guard(|| {
        if out.is_null() {
            return fail(LeafxStatus::NullPointer, "out is NULL");
        }
        let config = match config_path.is_null() {
            true => leafx::default_config(),
            false => textio::read_config(&path_arg(config_path, "config_path")?)?,
        };
        config.validate()?;
        let params = match params_path.is_null() {
            true => None,
            false => {
                let p = textio::read_params(&path_arg(params_path, "params_path")?)?;
                p.validate(&config)?;
                Some(p)
            }
        };
        boxed_frontend(out, LeafxFrontend { config, params })
    })
}

/// Number of filterbank bins M.
///
/// # Safety
/// `frontend` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn leafx_frontend_num_bins(frontend: *const LeafxFrontend) -> usize {
    frontend.as_ref().map_or(0, |f| f.config.num_bins)
}

/// # Safety
/// `frontend` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leafx_frontend_free(frontend: *mut LeafxFrontend) {
    if !frontend.is_null() {
        drop(Box::from_raw(frontend));
    }
}

/// Run the front-end on mono samples.
///
/// # Safety
/// `samples` must point to `len` readable doubles (it may be NULL when `len`
/// is 0). `frontend` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn leafx_extract(
    frontend: *const LeafxFrontend,
    samples: *const f64,
    len: usize,
    sample_rate: f64,
    out: *mut *mut LeafxFeatures,
) -> LeafxStatus {
    guard(|| {
        let Some(fe) = frontend.as_ref() else {
            return fail(LeafxStatus::NullPointer, "frontend handle is NULL");
        };
        if out.is_null() {
            return fail(LeafxStatus::NullPointer, "out is NULL");
        }
        let samples = match (samples.is_null(), len) {
            (_, 0) => Vec::new(),
            (true, _) => return fail(LeafxStatus::NullPointer, "samples is NULL"),
            (false, _) => std::slice::from_raw_parts(samples, len).to_vec(),
        };
        let wave = Waveform::new(samples, sample_rate)?;
        let mut config = fe.config.clone();
        config.sample_rate_hint = sample_rate;
        let params = match &fe.params {
            Some(p) => p.clone(),
            None => cli::default_params(&config)?,
        };
        let bundle = leafx::extract_features(&wave, &params, &config)?;
        let container = FeatureContainer::from_bundle(&bundle);
        let names = container
            .names
            .iter()
            .map(|n| CString::new(n.as_str()).expect("channel names contain no NUL"))
            .collect();
        *out = Box::into_raw(Box::new(LeafxFeatures { container, names }));
        Ok(())
    })
}

/// Channel count C, bins M and frames L. Any output pointer may be NULL.
///
/// # Safety
/// `features` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn leafx_features_dims(
    features: *const LeafxFeatures,
    channels: *mut usize,
    bins: *mut usize,
    frames: *mut usize,
) -> LeafxStatus {
    guard(|| {
        let f = features_ref(features)?;
        for (dst, v) in [(channels, f.container.num_channels()), (bins, f.container.bins), (frames, f.container.frames)] {
            if let Some(d) = dst.as_mut() {
                *d = v;
            }
        }
        Ok(())
    })
}

/// Name of channel `index`, or NULL when out of range. Owned by the handle.
///
/// # Safety
/// `features` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn leafx_features_channel_name(features: *const LeafxFeatures, index: usize) -> *const c_char {
    features.as_ref().and_then(|f| f.names.get(index)).map_or(ptr::null(), |n| n.as_ptr())
}

/// Copy plane `index` into `dst`, row-major `[bin][frame]`. `len` must equal M·L.
/// Undefined elements are 0.
///
/// # Safety
/// `dst` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn leafx_features_copy_plane(
    features: *const LeafxFeatures,
    index: usize,
    dst: *mut f32,
    len: usize,
) -> LeafxStatus {
    guard(|| {
        let f = features_ref(features)?;
        let plane = &f.container.planes[channel_index(f, index)?];
        if dst.is_null() {
            return fail(LeafxStatus::NullPointer, "dst is NULL");
        }
        if len != plane.len() {
            return fail(LeafxStatus::InvalidArgument, format!("buffer holds {len} values, plane has {}", plane.len()));
        }
        ptr::copy_nonoverlapping(plane.as_ptr(), dst, len);
        Ok(())
    })
}

/// Copy the definedness mask of channel `index`, one byte per element (1 = defined).
///
/// # Safety
/// `dst` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn leafx_features_copy_mask(
    features: *const LeafxFeatures,
    index: usize,
    dst: *mut u8,
    len: usize,
) -> LeafxStatus {
    guard(|| {
        let f = features_ref(features)?;
        let mask = &f.container.masks[channel_index(f, index)?];
        if dst.is_null() {
            return fail(LeafxStatus::NullPointer, "dst is NULL");
        }
        if len != mask.len() {
            return fail(LeafxStatus::InvalidArgument, format!("buffer holds {len} bytes, mask has {}", mask.len()));
        }
        let out = std::slice::from_raw_parts_mut(dst, len);
        for (o, &m) in out.iter_mut().zip(mask) {
            *o = m as u8;
        }
        Ok(())
    })
}

/// Write the features as an `LFX1` container file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn leafx_features_write(features: *const LeafxFeatures, path: *const c_char) -> LeafxStatus {
    guard(|| {
        let f = features_ref(features)?;
        f.container.write(&path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `features` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn leafx_features_free(features: *mut LeafxFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

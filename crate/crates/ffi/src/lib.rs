//! C ABI over the bulbnet model.
//!
//! Every function returns a [`BulbnetStatus`]. On failure the message is
//! available from [`bulbnet_last_error`] on the same thread. Models are
//! opaque handles released with [`bulbnet_model_free`]; strings handed out
//! by the library are released with [`bulbnet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bulbnet::model::{Model, ModelConfig};
use bulbnet::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BulbnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad configuration, or the label was already trained.
    Config = 3,
    /// Missing, malformed, non-finite or mismatched input data or checkpoint.
    Data = 4,
    /// Numeric blow-up, empty inputs or a network that cannot be built.
    Numeric = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Opaque trained or untrained network.
pub struct BulbnetModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BulbnetStatus {
    match e.exit_code() {
        2 => BulbnetStatus::Config,
        3 => BulbnetStatus::Data,
        _ => BulbnetStatus::Numeric,
    }
}

struct Fail(BulbnetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BulbnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BulbnetStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            BulbnetStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(BulbnetStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BulbnetStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_ref<'a>(m: *const BulbnetModel) -> Result<&'a Model, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

fn hand_out(model: Model, out: *mut *mut BulbnetModel) {
    unsafe { *out = Box::into_raw(Box::new(BulbnetModel { inner: model })) };
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bulbnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bulbnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a naive network whose preprocessing is fitted on `n_samples`
/// row-major reference samples of length `dim`.
///
/// `config_json` may be null for the defaults; otherwise it is a JSON
/// model configuration where missing fields take their defaults. `seed`
/// overrides both random streams of the configuration.
///
/// # Safety
/// `reference` must point to `n_samples * dim` doubles, `config_json` must
/// be null or NUL-terminated, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_model_new(
    config_json: *const c_char,
    reference: *const f64,
    n_samples: usize,
    dim: usize,
    seed: u64,
    out: *mut *mut BulbnetModel,
) -> BulbnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = if config_json.is_null() {
            ModelConfig::default()
        } else {
            let text = str_arg(config_json, "config_json")?;
            serde_json::from_str(text).map_err(|e| Fail(BulbnetStatus::Config, format!("config_json: {e}")))?
        };
        let total = n_samples
            .checked_mul(dim)
            .ok_or_else(|| Fail(BulbnetStatus::Data, "reference size overflows".into()))?;
        let data = slice_arg(reference, total, "reference")?;
        let rows: Vec<&[f64]> = if dim == 0 { Vec::new() } else { data.chunks(dim).collect() };
        let model = Model::new(config.with_seed(seed), &rows)?;
        hand_out(model, out);
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_model_free(model: *mut BulbnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimension the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_model_dimension(model: *const BulbnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dimension())
}

/// Number of stored classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_model_class_count(model: *const BulbnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.epl.store.len())
}

/// Learns one sample under `label` in a single exposure.
///
/// # Safety
/// `model` must be a live handle, `sample` must point to `dim` doubles and
/// `label` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_model_train(
    model: *mut BulbnetModel,
    sample: *const f64,
    dim: usize,
    label: *const c_char,
) -> BulbnetStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        let sample = slice_arg(sample, dim, "sample")?;
        let label = str_arg(label, "label")?;
        m.inner.train(sample, label)?;
        Ok(())
    })
}

/// Classifies one sample. On success `*label_out` receives a string to be
/// released with [`bulbnet_string_free`] and `*similarity_out`, when not
/// null, the winning similarity.
///
/// # Safety
/// `model` must be a live handle, `sample` must point to `dim` doubles,
/// `label_out` must be writable and `similarity_out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_model_predict(
    model: *const BulbnetModel,
    sample: *const f64,
    dim: usize,
    label_out: *mut *mut c_char,
    similarity_out: *mut f64,
) -> BulbnetStatus {
    guard(|| {
        if label_out.is_null() {
            return Err(null("label_out"));
        }
        let m = model_ref(model)?;
        let sample = slice_arg(sample, dim, "sample")?;
        let p = m.predict(sample)?;
        let label = CString::new(p.label).map_err(|_| Fail(BulbnetStatus::Data, "label contains NUL".into()))?;
        *label_out = label.into_raw();
        if !similarity_out.is_null() {
            *similarity_out = p.similarity;
        }
        Ok(())
    })
}

/// Writes a JSON checkpoint to `path`.
///
/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_model_save(model: *const BulbnetModel, path: *const c_char) -> BulbnetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = str_arg(path, "path")?;
        m.save(Path::new(path))?;
        Ok(())
    })
}

/// Restores a model from a checkpoint written by [`bulbnet_model_save`].
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_model_load(path: *const c_char, out: *mut *mut BulbnetModel) -> BulbnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        hand_out(Model::load(Path::new(path))?, out);
        Ok(())
    })
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bulbnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

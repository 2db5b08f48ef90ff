//! C interface to cl4ac: load a checkpoint, caption audio, score captions.
//!
//! Every function returns a [`Cl4acStatus`]. On failure the message is
//! available from [`cl4ac_last_error_message`] on the same thread. Strings
//! returned through `out` pointers are owned by the caller and released with
//! [`cl4ac_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cl4ac::data::{load_checkpoint, Checkpoint};
use cl4ac::dsp::{log_mel_with, AudioClip};
use cl4ac::metrics::{evaluate_all, EvalCorpus, EvalItem};
use cl4ac::model::greedy_decode;
use cl4ac::Error;
use serde::Deserialize;

/// Result of every call. The numeric values of `Internal`, `Input` and
/// `Numeric` match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cl4acStatus {
    Ok = 0,
    Internal = 1,
    Input = 2,
    Numeric = 3,
    NullArgument = 10,
    InvalidUtf8 = 11,
    Panic = 12,
}

/// A loaded checkpoint: model weights, vocabulary and feature settings.
pub struct Cl4acModel {
    ckpt: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(Cl4acStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Numeric(_) => Cl4acStatus::Numeric,
            e if e.is_input_error() => Cl4acStatus::Input,
            _ => Cl4acStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Cl4acStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            Cl4acStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            Cl4acStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(Cl4acStatus::NullArgument, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(Cl4acStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(Cl4acStatus::Internal, "output contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn model_ref<'a>(model: *const Cl4acModel) -> Result<&'a Cl4acModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn cl4ac_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file into `*out`. Release with [`cl4ac_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl4ac_model_load(path: *const c_char, out: *mut *mut Cl4acModel) -> Cl4acStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = text(path, "path")?;
        let ckpt = load_checkpoint(Path::new(path), None)?;
        *out = Box::into_raw(Box::new(Cl4acModel { ckpt }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`cl4ac_model_load`] and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn cl4ac_model_free(model: *mut Cl4acModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size including the four reserved tokens, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl4ac_model_vocab_size(model: *const Cl4acModel) -> usize {
    model.as_ref().map_or(0, |m| m.ckpt.vocab.len())
}

/// Greedy caption for mono samples in [-1, 1]. `max_len` 0 means 35.
///
/// # Safety
/// `samples` must point to `len` floats; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl4ac_caption_samples(
    model: *const Cl4acModel,
    samples: *const f32,
    len: usize,
    sample_rate: u32,
    max_len: usize,
    out: *mut *mut c_char,
) -> Cl4acStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model_ref(model)?;
        if samples.is_null() {
            return Err(null("samples"));
        }
        let clip = AudioClip::new(std::slice::from_raw_parts(samples, len).to_vec(), sample_rate)?;
        let mel = log_mel_with(&clip, &m.ckpt.config.dsp)?;
        let max_len = if max_len == 0 { 35 } else { max_len };
        let ids = greedy_decode(&m.ckpt.model, &mel, max_len)?;
        put_string(out, m.ckpt.vocab.decode(&ids))
    })
}

/// Greedy caption for a PCM WAV file. `max_len` 0 means 35.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl4ac_caption_wav(
    model: *const Cl4acModel,
    path: *const c_char,
    max_len: usize,
    out: *mut *mut c_char,
) -> Cl4acStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = model_ref(model)?;
        let path = text(path, "path")?;
        let max_len = if max_len == 0 { 35 } else { max_len };
        put_string(out, cl4ac::cli::caption_wav(&m.ckpt, Path::new(path), max_len)?)
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemJson {
    candidate: String,
    references: Vec<String>,
}

/// Scores captions. `items_json` is an array of
/// `{"candidate": "...", "references": ["...", ...]}`; `*out` receives the
/// metric report as JSON (unavailable metrics are null).
///
/// # Safety
/// `items_json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cl4ac_evaluate_json(items_json: *const c_char, out: *mut *mut c_char) -> Cl4acStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let items: Vec<ItemJson> = serde_json::from_str(text(items_json, "items_json")?)
            .map_err(|e| Failure(Cl4acStatus::Input, format!("items_json: {e}")))?;
        let items = items.iter().map(|i| EvalItem::from_text(&i.candidate, &i.references)).collect();
        let report = evaluate_all(&EvalCorpus::new(items)?)?;
        put_string(out, report.to_json())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn cl4ac_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

//! C ABI over trained valta checkpoints.
//!
//! Every fallible call returns a [`ValtaStatus`]; on failure the message is
//! available from [`valta_last_error`] on the same thread. Handles are
//! opaque and released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use valta::checkpoint::{self, Checkpoint};
use valta::{evaluation, model, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValtaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Corrupt = 5,
    VersionMismatch = 6,
    EmptyInput = 7,
    Panic = 8,
}

/// A loaded model. Opaque to C.
pub struct ValtaModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> ValtaStatus {
    match e {
        Error::Io { .. } => ValtaStatus::Io,
        Error::Corrupt(_) | Error::Json(_) => ValtaStatus::Corrupt,
        Error::VersionMismatch { .. } => ValtaStatus::VersionMismatch,
        Error::EmptyBagOfWords => ValtaStatus::EmptyInput,
        _ => ValtaStatus::InvalidArgument,
    }
}

fn fail(status: ValtaStatus, msg: impl Into<String>) -> ValtaStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), ValtaStatus>) -> ValtaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ValtaStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(ValtaStatus::Panic, "internal panic"),
    }
}

fn from_error(e: Error) -> ValtaStatus {
    fail(status_of(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, ValtaStatus> {
    if p.is_null() {
        return Err(fail(ValtaStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ValtaStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn model_arg<'a>(m: *const ValtaModel) -> Result<&'a ValtaModel, ValtaStatus> {
    m.as_ref().ok_or_else(|| fail(ValtaStatus::NullPointer, "model is null"))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, ValtaStatus> {
    // SAFETY: callers pass either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| fail(ValtaStatus::NullPointer, format!("{name} is null")))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn valta_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn valta_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn valta_model_load(path: *const c_char, out: *mut *mut ValtaModel) -> ValtaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let checkpoint = checkpoint::checkpoint_load(Path::new(path)).map_err(from_error)?;
        *out = Box::into_raw(Box::new(ValtaModel { checkpoint }));
        Ok(())
    })
}

/// Releases a handle from [`valta_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must come from [`valta_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn valta_model_free(model: *mut ValtaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size, aspect count and sub-aspects per aspect.
///
/// # Safety
/// `model` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn valta_model_dims(
    model: *const ValtaModel,
    vocab_size: *mut usize,
    aspects: *mut usize,
    sub_aspects: *mut usize,
) -> ValtaStatus {
    guard(|| {
        let m = model_arg(model)?;
        let cfg = m.checkpoint.params.config;
        *out_arg(vocab_size, "vocab_size")? = cfg.vocab_size;
        *out_arg(aspects, "aspects")? = cfg.aspects;
        *out_arg(sub_aspects, "sub_aspects")? = cfg.sub_aspects;
        Ok(())
    })
}

/// Predicts the rating of `user_id` for `item_id` from the concatenated
/// text of each side's review history. Unknown ids contribute zero bias.
/// When `aspect_importance` is non-null it receives `aspects` weights.
///
/// # Safety
/// String arguments must be NUL-terminated; `rating` must be writable;
/// `aspect_importance`, if non-null, must hold `aspects` doubles.
#[no_mangle]
pub unsafe extern "C" fn valta_predict_rating(
    model: *const ValtaModel,
    user_id: *const c_char,
    item_id: *const c_char,
    user_text: *const c_char,
    item_text: *const c_char,
    rating: *mut f64,
    aspect_importance: *mut f64,
    aspects: usize,
) -> ValtaStatus {
    guard(|| {
        let m = model_arg(model)?;
        let vocab = &m.checkpoint.vocabulary;
        let user_bow = vocab.bag_of_words(str_arg(user_text, "user_text")?);
        let item_bow = vocab.bag_of_words(str_arg(item_text, "item_text")?);
        let (u, i) = (str_arg(user_id, "user_id")?, str_arg(item_id, "item_id")?);
        let out = out_arg(rating, "rating")?;
        let p = model::predict_rating(u, i, &user_bow, &item_bow, &m.checkpoint.params).map_err(from_error)?;
        if !aspect_importance.is_null() {
            if aspects != p.importance.len() {
                return Err(fail(
                    ValtaStatus::InvalidArgument,
                    format!("aspect buffer holds {aspects}, model has {}", p.importance.len()),
                ));
            }
            std::slice::from_raw_parts_mut(aspect_importance, aspects).copy_from_slice(&p.importance);
        }
        *out = p.rating;
        Ok(())
    })
}

/// Noise-free aspect of one sentence.
///
/// # Safety
/// `sentence` must be NUL-terminated; `aspect` must be writable.
#[no_mangle]
pub unsafe extern "C" fn valta_sentence_aspect(
    model: *const ValtaModel,
    sentence: *const c_char,
    aspect: *mut usize,
) -> ValtaStatus {
    guard(|| {
        let m = model_arg(model)?;
        let bow = m.checkpoint.vocabulary.bag_of_words(str_arg(sentence, "sentence")?);
        let out = out_arg(aspect, "aspect")?;
        *out = evaluation::assign_aspect(&bow, &m.checkpoint.params).map_err(from_error)?;
        Ok(())
    })
}

/// Top `top` words of topic (`aspect`, `sub_aspect`), newline separated.
/// `*out` receives a string to release with [`valta_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn valta_top_words(
    model: *const ValtaModel,
    aspect: usize,
    sub_aspect: usize,
    top: usize,
    out: *mut *mut c_char,
) -> ValtaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = model_arg(model)?;
        let cfg = m.checkpoint.params.config;
        if aspect >= cfg.aspects || sub_aspect >= cfg.sub_aspects {
            return Err(fail(
                ValtaStatus::InvalidArgument,
                format!("topic ({aspect}, {sub_aspect}) outside {}x{}", cfg.aspects, cfg.sub_aspects),
            ));
        }
        let lists = evaluation::top_words(&m.checkpoint.params, &m.checkpoint.vocabulary, top);
        let words = lists[aspect * cfg.sub_aspects + sub_aspect].words.join("\n");
        *out = CString::new(words).expect("tokens have no NUL").into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn valta_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

//! C ABI over the `stairward` core.
//!
//! Every fallible function returns an [`SwStatus`]; on failure the message
//! is available from [`sw_last_error_message`] on the same thread. Objects
//! are opaque handles released with their `*_free` function. Panics never
//! cross the boundary; they surface as `SW_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use stairward::benchmark::{fit_logistic, krocc, plcc, srocc, LogisticParams};
use stairward::{
    compute_stair_reward, crop_center_box, default_rules, morpheme_weights, split_prompt, stair_lengths,
    AblationMode, Error, ImageRef, PromptText, Raster, Scorer, ScorerDescriptor, SegmentationRules,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwStatus {
    Ok = 0,
    /// A required pointer was NULL.
    NullArgument = 1,
    /// A value broke a precondition (bad count, box length, prompt, ...).
    InvalidArgument = 2,
    /// Input data could not be used (statistics undefined, decode failure, ...).
    DataError = 3,
    ConfigError = 4,
    /// The scorer failed or returned a non-finite score.
    BackendError = 5,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwAblationMode {
    None = 0,
    Word = 1,
    Image = 2,
    All = 3,
}

impl From<SwAblationMode> for AblationMode {
    fn from(m: SwAblationMode) -> Self {
        match m {
            SwAblationMode::None => AblationMode::None,
            SwAblationMode::Word => AblationMode::Word,
            SwAblationMode::Image => AblationMode::Image,
            SwAblationMode::All => AblationMode::All,
        }
    }
}

/// Segmentation rules.
pub struct SwRules(SegmentationRules);

/// A prompt split into morphemes.
pub struct SwDecomposition {
    morphemes: Vec<CString>,
}

/// 8-bit RGB image.
pub struct SwRaster(Raster);

/// An alignment scorer.
pub struct SwScorer(Scorer);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> SwStatus {
    match e {
        Error::Invalid(_)
        | Error::DegeneratePrompt(_)
        | Error::InvalidMorphemeCount(_)
        | Error::BoxLengthOutOfRange(_) => SwStatus::InvalidArgument,
        Error::Config(_) => SwStatus::ConfigError,
        Error::Backend(_) | Error::InvalidScore(_) => SwStatus::BackendError,
        Error::BatchElement { source, .. } => status_of(source),
        _ => SwStatus::DataError,
    }
}

struct Failure(SwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SwStatus::NullArgument, format!("{what} is NULL"))
}

/// Runs `f`, records any failure and converts it into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SwStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SwStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SwStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn doubles<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_list(values: &[f64], out: *mut f64, capacity: usize, out_len: *mut usize) -> Result<(), Failure> {
    write_out(out_len, values.len(), "out_len")?;
    if capacity < values.len() {
        return Err(Failure(
            SwStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", values.len()),
        ));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or NULL after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Stair box lengths for `count` morphemes. Writes the count to `out_len`;
/// fails with `SW_STATUS_BUFFER_TOO_SMALL` when `capacity` is short.
#[no_mangle]
pub unsafe extern "C" fn sw_stair_lengths(count: i64, out: *mut f64, capacity: usize, out_len: *mut usize) -> SwStatus {
    guard(|| {
        let spec = stair_lengths(count)?;
        copy_list(spec.lengths(), out, capacity, out_len)
    })
}

/// Morpheme weights for `count` morphemes; buffer rules as for
/// [`sw_stair_lengths`].
#[no_mangle]
pub unsafe extern "C" fn sw_morpheme_weights(count: i64, out: *mut f64, capacity: usize, out_len: *mut usize) -> SwStatus {
    guard(|| {
        let weights = morpheme_weights(count)?;
        copy_list(&weights, out, capacity, out_len)
    })
}

type Correlation = fn(&[f64], &[f64]) -> stairward::Result<f64>;

unsafe fn correlation(f: Correlation, x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SwStatus {
    guard(|| {
        let value = f(doubles(x, n, "x")?, doubles(y, n, "y")?)?;
        write_out(out, value, "out")
    })
}

/// Spearman rank correlation of `n` pairs.
#[no_mangle]
pub unsafe extern "C" fn sw_srocc(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SwStatus {
    correlation(srocc, x, y, n, out)
}

/// Kendall tau-b of `n` pairs.
#[no_mangle]
pub unsafe extern "C" fn sw_krocc(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SwStatus {
    correlation(krocc, x, y, n, out)
}

/// Pearson correlation of `n` pairs.
#[no_mangle]
pub unsafe extern "C" fn sw_plcc(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SwStatus {
    correlation(plcc, x, y, n, out)
}

/// Fits the five-parameter logistic map from `x` to `y`. `out_params`
/// receives 5 values; `out_sse` and `out_converged` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sw_fit_logistic(
    x: *const f64,
    y: *const f64,
    n: usize,
    out_params: *mut f64,
    out_sse: *mut f64,
    out_converged: *mut bool,
) -> SwStatus {
    guard(|| {
        if out_params.is_null() {
            return Err(null("out_params"));
        }
        let fit = fit_logistic(doubles(x, n, "x")?, doubles(y, n, "y")?)?;
        ptr::copy_nonoverlapping(fit.params.to_array().as_ptr(), out_params, 5);
        if !out_sse.is_null() {
            out_sse.write(fit.sse);
        }
        if !out_converged.is_null() {
            out_converged.write(fit.converged);
        }
        Ok(())
    })
}

/// Evaluates the logistic map with 5 `params` at `x`.
#[no_mangle]
pub unsafe extern "C" fn sw_logistic_eval(params: *const f64, x: f64, out: *mut f64) -> SwStatus {
    guard(|| {
        let p = doubles(params, 5, "params")?;
        let params = LogisticParams::from_array([p[0], p[1], p[2], p[3], p[4]]);
        write_out(out, params.eval(x), "out")
    })
}

/// Built-in segmentation rules.
#[no_mangle]
pub unsafe extern "C" fn sw_rules_default(out: *mut *mut SwRules) -> SwStatus {
    guard(|| write_out(out, boxed(SwRules(default_rules())), "out"))
}

/// Rules parsed from the text of a rules file.
#[no_mangle]
pub unsafe extern "C" fn sw_rules_parse(source: *const c_char, out: *mut *mut SwRules) -> SwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rules = SegmentationRules::parse(text(source, "source")?)?;
        out.write(boxed(SwRules(rules)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sw_rules_free(rules: *mut SwRules) {
    if !rules.is_null() {
        drop(Box::from_raw(rules));
    }
}

/// Splits `prompt` into morphemes.
#[no_mangle]
pub unsafe extern "C" fn sw_split_prompt(
    rules: *const SwRules,
    prompt: *const c_char,
    out: *mut *mut SwDecomposition,
) -> SwStatus {
    guard(|| {
        let rules = rules.as_ref().ok_or_else(|| null("rules"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let prompt = PromptText::new(text(prompt, "prompt")?)?;
        let d = split_prompt(&prompt, &rules.0)?;
        let morphemes = d
            .morphemes()
            .iter()
            .map(|m| CString::new(m.as_str()).map_err(|_| Failure(SwStatus::InvalidArgument, "NUL in prompt".into())))
            .collect::<Result<Vec<_>, _>>()?;
        out.write(boxed(SwDecomposition { morphemes }));
        Ok(())
    })
}

/// Number of morphemes, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn sw_decomposition_count(d: *const SwDecomposition) -> usize {
    d.as_ref().map_or(0, |d| d.morphemes.len())
}

/// Morpheme `index`, or NULL when out of range. Owned by the decomposition.
#[no_mangle]
pub unsafe extern "C" fn sw_decomposition_morpheme(d: *const SwDecomposition, index: usize) -> *const c_char {
    d.as_ref()
        .and_then(|d| d.morphemes.get(index))
        .map_or(ptr::null(), |m| m.as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn sw_decomposition_free(d: *mut SwDecomposition) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Copies `len` bytes of row-major RGB into a new raster.
#[no_mangle]
pub unsafe extern "C" fn sw_raster_new(
    width: u32,
    height: u32,
    rgb: *const u8,
    len: usize,
    out: *mut *mut SwRaster,
) -> SwStatus {
    guard(|| {
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let raster = Raster::new(width, height, slice::from_raw_parts(rgb, len).to_vec())?;
        out.write(boxed(SwRaster(raster)));
        Ok(())
    })
}

/// Width in pixels, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn sw_raster_width(r: *const SwRaster) -> u32 {
    r.as_ref().map_or(0, |r| r.0.width())
}

/// Height in pixels, 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn sw_raster_height(r: *const SwRaster) -> u32 {
    r.as_ref().map_or(0, |r| r.0.height())
}

/// Pixel bytes owned by the raster; `out_len` (may be NULL) receives the
/// byte count.
#[no_mangle]
pub unsafe extern "C" fn sw_raster_pixels(r: *const SwRaster, out_len: *mut usize) -> *const u8 {
    let Some(r) = r.as_ref() else { return ptr::null() };
    if !out_len.is_null() {
        out_len.write(r.0.pixels().len());
    }
    r.0.pixels().as_ptr()
}

/// Centered crop with side ratio `length` in (0, 1].
#[no_mangle]
pub unsafe extern "C" fn sw_raster_crop_center(r: *const SwRaster, length: f64, out: *mut *mut SwRaster) -> SwStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("raster"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(boxed(SwRaster(crop_center_box(&r.0, length)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sw_raster_free(r: *mut SwRaster) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

unsafe fn make_scorer(d: ScorerDescriptor, out: *mut *mut SwScorer) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(boxed(SwScorer(Scorer::new(&d)?)));
    Ok(())
}

/// Scorer returning `value` for every pair.
#[no_mangle]
pub unsafe extern "C" fn sw_scorer_constant(value: f64, out: *mut *mut SwScorer) -> SwStatus {
    guard(|| make_scorer(ScorerDescriptor::constant(value), out))
}

/// Caption-overlap scorer over `n` (image id, caption) pairs.
#[no_mangle]
pub unsafe extern "C" fn sw_scorer_lexical(
    image_ids: *const *const c_char,
    captions: *const *const c_char,
    n: usize,
    out: *mut *mut SwScorer,
) -> SwStatus {
    guard(|| {
        let mut map = HashMap::new();
        if n > 0 && (image_ids.is_null() || captions.is_null()) {
            return Err(null("image_ids or captions"));
        }
        for i in 0..n {
            let id = text(*image_ids.add(i), "image id")?;
            let caption = text(*captions.add(i), "caption")?;
            map.insert(id.to_string(), caption.to_string());
        }
        make_scorer(ScorerDescriptor::lexical(map), out)
    })
}

/// Scorer from a `--scorer` style spec: `constant:<c>` or the path of a
/// scorer TOML file.
#[no_mangle]
pub unsafe extern "C" fn sw_scorer_from_spec(spec: *const c_char, out: *mut *mut SwScorer) -> SwStatus {
    guard(|| {
        let d = ScorerDescriptor::from_spec(text(spec, "spec")?, &HashMap::new(), None)?;
        make_scorer(d, out)
    })
}

/// Releases a scorer; external scorer processes are shut down.
#[no_mangle]
pub unsafe extern "C" fn sw_scorer_free(s: *mut SwScorer) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// StairReward of (`prompt`, `image`). `image_id` may be NULL unless the
/// scorer needs it (the lexical scorer does).
#[no_mangle]
pub unsafe extern "C" fn sw_stair_reward(
    scorer: *const SwScorer,
    rules: *const SwRules,
    prompt: *const c_char,
    image: *const SwRaster,
    image_id: *const c_char,
    mode: SwAblationMode,
    out_score: *mut f64,
) -> SwStatus {
    guard(|| {
        let scorer = scorer.as_ref().ok_or_else(|| null("scorer"))?;
        let rules = rules.as_ref().ok_or_else(|| null("rules"))?;
        let image = image.as_ref().ok_or_else(|| null("image"))?;
        if out_score.is_null() {
            return Err(null("out_score"));
        }
        let prompt = PromptText::new(text(prompt, "prompt")?)?;
        let mut image_ref = ImageRef::new(image.0.clone());
        if !image_id.is_null() {
            image_ref = image_ref.with_id(text(image_id, "image_id")?);
        }
        let b = compute_stair_reward(&scorer.0, &prompt, &image_ref, &rules.0, mode.into())?;
        out_score.write(b.final_score.value());
        Ok(())
    })
}

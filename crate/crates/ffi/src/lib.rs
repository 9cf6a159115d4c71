//! C ABI over `lta-core`.
//!
//! Every fallible function returns an [`LtaStatus`]; on failure a message is
//! available from [`lta_last_error_message`] on the same thread. Matrices are
//! passed as row-major `double` buffers, sequences as `size_t` buffers and
//! actions as interleaved `(verb, noun)` pairs.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use lta_core::ensemble::{softmax_into, StepDistributions};
use lta_core::refine::{refine_noun_step, refine_verb_step, FirstStepPolicy, PredictionConfig, Refined};
use lta_core::stats::CoocStats;
use lta_core::vocab::{Action, Axis};
use lta_core::{Error, IndicatorMode, LogitsTensor, Matrix};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    InvalidArgument = 5,
    ShapeMismatch = 6,
    IndexOutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtaIndicatorMode {
    AsWritten = 0,
    StandardNpmi = 1,
}

impl From<LtaIndicatorMode> for IndicatorMode {
    fn from(m: LtaIndicatorMode) -> Self {
        match m {
            LtaIndicatorMode::AsWritten => IndicatorMode::AsWritten,
            LtaIndicatorMode::StandardNpmi => IndicatorMode::StandardNpmi,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtaAxis {
    Verb = 0,
    Noun = 1,
}

impl From<LtaAxis> for Axis {
    fn from(a: LtaAxis) -> Self {
        match a {
            LtaAxis::Verb => Axis::Verb,
            LtaAxis::Noun => Axis::Noun,
        }
    }
}

/// Pattern generation settings. `seed_verb`/`seed_noun` are read only when
/// `has_seed_action` is true.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LtaPredictionConfig {
    pub z: usize,
    pub k: usize,
    pub rng_seed: u64,
    pub mode: LtaIndicatorMode,
    pub has_seed_action: bool,
    pub seed_verb: usize,
    pub seed_noun: usize,
}

/// Opaque handle to co-occurrence statistics.
pub struct LtaStats {
    inner: CoocStats,
}

struct Failure {
    status: LtaStatus,
    message: String,
}

impl Failure {
    fn new(status: LtaStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } | Error::Json(_) => LtaStatus::Parse,
            Error::Io(_) => LtaStatus::Io,
            Error::ShapeMismatch { .. } | Error::LengthMismatch(..) | Error::ExampleIdMismatch { .. } => {
                LtaStatus::ShapeMismatch
            }
            Error::IndexOutOfRange { .. } => LtaStatus::IndexOutOfRange,
            _ => LtaStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LtaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LtaStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(_) => {
            set_last_error("internal panic");
            LtaStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(LtaStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn stats_ref<'a>(stats: *const LtaStats) -> Result<&'a CoocStats, Failure> {
    non_null(stats, "stats")?;
    Ok(&(*stats).inner)
}

unsafe fn c_str<'a>(s: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(s, name)?;
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::new(LtaStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn checked_len(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| Failure::new(LtaStatus::InvalidArgument, "buffer size overflows"))
}

fn check_class(index: usize, classes: usize, axis: Axis) -> Result<(), Failure> {
    if index < classes {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { axis, index, classes }.into())
    }
}

fn write_refined(r: Refined, out_probs: &mut [f64], out_fallback: *mut bool) {
    out_probs.copy_from_slice(&r.probs);
    if !out_fallback.is_null() {
        unsafe { *out_fallback = r.fallback_used };
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lta_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lta_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses statistics from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer. The
/// handle written to `out` must be released with [`lta_stats_free`].
#[no_mangle]
pub unsafe extern "C" fn lta_stats_from_json(json: *const c_char, out: *mut *mut LtaStats) -> LtaStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = c_str(json, "json")?;
        let inner: CoocStats = serde_json::from_str(text).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(LtaStats { inner }));
        Ok(())
    })
}

/// Loads statistics from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer. The
/// handle written to `out` must be released with [`lta_stats_free`].
#[no_mangle]
pub unsafe extern "C" fn lta_stats_load(path: *const c_char, out: *mut *mut LtaStats) -> LtaStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = c_str(path, "path")?;
        let inner: CoocStats = lta_core::io::read_json(Path::new(path))?;
        *out = Box::into_raw(Box::new(LtaStats { inner }));
        Ok(())
    })
}

/// # Safety
/// `stats` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lta_stats_free(stats: *mut LtaStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// # Safety
/// `stats` must be a live handle; `out_verbs` and `out_nouns` writable.
#[no_mangle]
pub unsafe extern "C" fn lta_stats_classes(
    stats: *const LtaStats,
    out_verbs: *mut usize,
    out_nouns: *mut usize,
) -> LtaStatus {
    guard(|| {
        let s = stats_ref(stats)?;
        non_null(out_verbs, "out_verbs")?;
        non_null(out_nouns, "out_nouns")?;
        *out_verbs = s.c_verb;
        *out_nouns = s.c_noun;
        Ok(())
    })
}

/// Co-occurrence score of `next` following `prev` on one axis.
///
/// # Safety
/// `stats` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lta_stats_transition_score(
    stats: *const LtaStats,
    axis: LtaAxis,
    prev: usize,
    next: usize,
    mode: LtaIndicatorMode,
    out: *mut f64,
) -> LtaStatus {
    guard(|| {
        let s = stats_ref(stats)?;
        non_null(out, "out")?;
        let axis = Axis::from(axis);
        let classes = s.classes(axis);
        check_class(prev, classes, axis)?;
        check_class(next, classes, axis)?;
        *out = s.transition_score(prev, next, axis, mode.into());
        Ok(())
    })
}

/// `p(verb | noun)`.
///
/// # Safety
/// `stats` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lta_stats_verb_given_noun(
    stats: *const LtaStats,
    verb: usize,
    noun: usize,
    out: *mut f64,
) -> LtaStatus {
    guard(|| {
        let s = stats_ref(stats)?;
        non_null(out, "out")?;
        check_class(verb, s.c_verb, Axis::Verb)?;
        check_class(noun, s.c_noun, Axis::Noun)?;
        *out = s.verb_given_noun(verb, noun);
        Ok(())
    })
}

/// Refines one step's noun distribution given the previous noun.
/// `out_fallback` may be null.
///
/// # Safety
/// `probs` and `out_probs` must hold `len` doubles; `len` must equal the
/// noun class count of `stats`.
#[no_mangle]
pub unsafe extern "C" fn lta_refine_noun_step(
    stats: *const LtaStats,
    probs: *const f64,
    len: usize,
    prev_noun: usize,
    mode: LtaIndicatorMode,
    out_probs: *mut f64,
    out_fallback: *mut bool,
) -> LtaStatus {
    guard(|| {
        let s = stats_ref(stats)?;
        if len != s.c_noun {
            return Err(Error::LengthMismatch(len, s.c_noun).into());
        }
        check_class(prev_noun, s.c_noun, Axis::Noun)?;
        let probs = input(probs, len, "probs")?;
        let out = output(out_probs, len, "out_probs")?;
        write_refined(refine_noun_step(probs, prev_noun, s, mode.into()), out, out_fallback);
        Ok(())
    })
}

/// Refines one step's verb distribution given the previous verb and the
/// noun chosen for this step. `out_fallback` may be null.
///
/// # Safety
/// `probs` and `out_probs` must hold `len` doubles; `len` must equal the
/// verb class count of `stats`.
#[no_mangle]
pub unsafe extern "C" fn lta_refine_verb_step(
    stats: *const LtaStats,
    probs: *const f64,
    len: usize,
    prev_verb: usize,
    selected_noun: usize,
    mode: LtaIndicatorMode,
    out_probs: *mut f64,
    out_fallback: *mut bool,
) -> LtaStatus {
    guard(|| {
        let s = stats_ref(stats)?;
        if len != s.c_verb {
            return Err(Error::LengthMismatch(len, s.c_verb).into());
        }
        check_class(prev_verb, s.c_verb, Axis::Verb)?;
        check_class(selected_noun, s.c_noun, Axis::Noun)?;
        let probs = input(probs, len, "probs")?;
        let out = output(out_probs, len, "out_probs")?;
        write_refined(
            refine_verb_step(probs, prev_verb, selected_noun, s, mode.into()),
            out,
            out_fallback,
        );
        Ok(())
    })
}

/// Row-wise softmax of a `rows x cols` matrix.
///
/// # Safety
/// `logits` and `out` must hold `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn lta_softmax_rows(logits: *const f64, rows: usize, cols: usize, out: *mut f64) -> LtaStatus {
    guard(|| {
        let n = checked_len(rows, cols)?;
        let src = input(logits, n, "logits")?;
        let dst = output(out, n, "out")?;
        if cols > 0 {
            for (r, o) in src.chunks_exact(cols).zip(dst.chunks_exact_mut(cols)) {
                softmax_into(r, o);
            }
        }
        Ok(())
    })
}

/// `alpha * a + beta * b` for both axes' `z x classes` logits.
///
/// # Safety
/// Verb buffers must hold `z * c_verb` doubles and noun buffers
/// `z * c_noun` doubles.
#[no_mangle]
pub unsafe extern "C" fn lta_combine_logits(
    a_verb: *const f64,
    a_noun: *const f64,
    b_verb: *const f64,
    b_noun: *const f64,
    z: usize,
    c_verb: usize,
    c_noun: usize,
    alpha: f64,
    beta: f64,
    out_verb: *mut f64,
    out_noun: *mut f64,
) -> LtaStatus {
    guard(|| {
        let nv = checked_len(z, c_verb)?;
        let nn = checked_len(z, c_noun)?;
        let tensor = |v: &[f64], n: &[f64]| {
            LogitsTensor::new(
                "",
                Matrix::from_vec(z, c_verb, v.to_vec())?,
                Matrix::from_vec(z, c_noun, n.to_vec())?,
            )
        };
        let a = tensor(input(a_verb, nv, "a_verb")?, input(a_noun, nn, "a_noun")?)?;
        let b = tensor(input(b_verb, nv, "b_verb")?, input(b_noun, nn, "b_noun")?)?;
        let c = lta_core::combine_logits(&a, &b, lta_core::EnsembleWeights::new(alpha, beta))?;
        output(out_verb, nv, "out_verb")?.copy_from_slice(c.verb_logits.as_slice());
        output(out_noun, nn, "out_noun")?.copy_from_slice(c.noun_logits.as_slice());
        Ok(())
    })
}

/// Generates `k` patterns of `z` actions from per-step distributions.
/// `out_actions` receives `k * z` interleaved `(verb, noun)` pairs, pattern
/// by pattern. `stats` may be null only when `k` is 1.
///
/// # Safety
/// `verb_probs` must hold `z * c_verb` doubles, `noun_probs` `z * c_noun`
/// doubles and `out_actions` `2 * k * z` values.
#[no_mangle]
pub unsafe extern "C" fn lta_generate_patterns(
    stats: *const LtaStats,
    verb_probs: *const f64,
    noun_probs: *const f64,
    c_verb: usize,
    c_noun: usize,
    config: LtaPredictionConfig,
    out_actions: *mut usize,
) -> LtaStatus {
    guard(|| {
        let z = config.z;
        let dists = StepDistributions {
            example_id: String::new(),
            verb_probs: Matrix::from_vec(
                z,
                c_verb,
                input(verb_probs, checked_len(z, c_verb)?, "verb_probs")?.to_vec(),
            )?,
            noun_probs: Matrix::from_vec(
                z,
                c_noun,
                input(noun_probs, checked_len(z, c_noun)?, "noun_probs")?.to_vec(),
            )?,
        };
        let cfg = PredictionConfig {
            z,
            k: config.k,
            rng_seed: config.rng_seed,
            mode: config.mode.into(),
            first_step_policy: if config.has_seed_action {
                FirstStepPolicy::SeedAction(Action::new(config.seed_verb, config.seed_noun))
            } else {
                FirstStepPolicy::Unrefined
            },
        };
        let set = if stats.is_null() {
            if config.k != 1 {
                return Err(Failure::new(LtaStatus::NullPointer, "stats is required when k > 1"));
            }
            cfg.validate()?;
            lta_core::refine::raw_prediction_set(&dists)
        } else {
            lta_core::generate_patterns(&dists, stats_ref(stats)?, &cfg)?
        };
        let out = output(out_actions, checked_len(checked_len(config.k, z)?, 2)?, "out_actions")?;
        for (slot, a) in out.chunks_exact_mut(2).zip(set.patterns.iter().flatten()) {
            slot[0] = a.verb;
            slot[1] = a.noun;
        }
        Ok(())
    })
}

/// Edit distance between two label sequences.
///
/// # Safety
/// `a` must hold `len_a` values, `b` `len_b` values, and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn lta_edit_distance(
    a: *const usize,
    len_a: usize,
    b: *const usize,
    len_b: usize,
    allow_transposition: bool,
    out: *mut usize,
) -> LtaStatus {
    guard(|| {
        non_null(out, "out")?;
        let a = input(a, len_a, "a")?;
        let b = input(b, len_b, "b")?;
        *out = lta_core::edit_distance(a, b, allow_transposition);
        Ok(())
    })
}

/// Smooths `z x classes` one-hot rows toward the sequence's mean label.
///
/// # Safety
/// `one_hot` and `out` must hold `z * classes` doubles.
#[no_mangle]
pub unsafe extern "C" fn lta_smooth_labels(one_hot: *const f64, z: usize, classes: usize, out: *mut f64) -> LtaStatus {
    guard(|| {
        let n = checked_len(z, classes)?;
        let m = Matrix::from_vec(z, classes, input(one_hot, n, "one_hot")?.to_vec())?;
        let smoothed = lta_core::smooth_labels(&m)?;
        output(out, n, "out")?.copy_from_slice(smoothed.as_slice());
        Ok(())
    })
}

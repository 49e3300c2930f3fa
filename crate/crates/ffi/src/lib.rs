//! C ABI over the eventground toolkit.
//!
//! Every fallible function returns an [`EgStatus`]; on failure the message
//! is available from [`eg_last_error`] on the same thread. Strings handed
//! out by the library are owned by the caller and released with
//! [`eg_string_free`]. Handles are released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use eventground::dataset::{candidate_pool, Mention, PoolMode};
use eventground::encoder::{featurize_mention, EncoderParams, FeaturizerConfig, LanguageMode, Tower};
use eventground::kb::{HierarchyForest, Kb};
use eventground::metrics::{recall_at_k, recall_at_min, set_metrics, EvalRecord};
use eventground::retrieval::{CandidateIndex, RetrievalResult};
use eventground::training::load_checkpoint;
use eventground::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Hierarchy = 6,
    UnknownEvent = 7,
    Checkpoint = 8,
    Metric = 9,
    Panic = 10,
}

impl From<&Error> for EgStatus {
    fn from(err: &Error) -> Self {
        match err {
            Error::Io { .. } => EgStatus::Io,
            Error::Parse { .. } | Error::Json(_) => EgStatus::Parse,
            Error::CycleDetected(_)
            | Error::MultipleParents { .. }
            | Error::HeightExceeded { .. }
            | Error::SelfLoop(_) => EgStatus::Hierarchy,
            Error::UnknownEvent(_) | Error::MissingLabel { .. } => EgStatus::UnknownEvent,
            Error::Checkpoint(_) | Error::DimensionMismatch { .. } => EgStatus::Checkpoint,
            Error::EmptyRecords | Error::UndefinedScore(_) => EgStatus::Metric,
            _ => EgStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(EgStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(EgStatus::from(&err), err.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Failure(EgStatus::Parse, err.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EgStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            EgStatus::Panic
        }
    }
}

fn non_null<T>(ptr: *const T, name: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        Err(Failure(EgStatus::NullArgument, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(ptr, name)?;
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure(EgStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

/// # Safety
/// `out` must be null or valid for a pointer write.
unsafe fn write_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    non_null(out, "out")?;
    let c = CString::new(value)
        .map_err(|_| Failure(EgStatus::InvalidArgument, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn eg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned through an `out_json` argument.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn eg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Knowledge base plus its hierarchy forest.
pub struct EgKb {
    kb: Kb,
    forest: HierarchyForest,
}

/// Loads `events.jsonl` and `relations.jsonl` and builds the forest.
///
/// # Safety
/// Path arguments must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_kb_load(
    events_path: *const c_char,
    relations_path: *const c_char,
    max_height: usize,
    out: *mut *mut EgKb,
) -> EgStatus {
    guard(|| {
        non_null(out, "out")?;
        let events = PathBuf::from(read_str(events_path, "events_path")?);
        let relations = PathBuf::from(read_str(relations_path, "relations_path")?);
        let mut kb = Kb::load(&events, &relations)?;
        let forest = kb.build_forest(max_height)?;
        *out = Box::into_raw(Box::new(EgKb { kb, forest }));
        Ok(())
    })
}

/// # Safety
/// `kb` must be null or a handle from [`eg_kb_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn eg_kb_free(kb: *mut EgKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Number of events in the knowledge base.
///
/// # Safety
/// `kb` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_kb_len(kb: *const EgKb, out: *mut usize) -> EgStatus {
    guard(|| {
        non_null(kb, "kb")?;
        non_null(out, "out")?;
        *out = (*kb).kb.len();
        Ok(())
    })
}

/// The event and its ancestors, nearest first, as a JSON array of ids.
///
/// # Safety
/// `kb` must be a live handle, `event_id` a NUL-terminated string and
/// `out_json` writable. Free the result with [`eg_string_free`].
#[no_mangle]
pub unsafe extern "C" fn eg_kb_ancestor_chain(
    kb: *const EgKb,
    event_id: *const c_char,
    out_json: *mut *mut c_char,
) -> EgStatus {
    guard(|| {
        non_null(kb, "kb")?;
        let id = read_str(event_id, "event_id")?;
        let chain = (*kb).forest.ancestor_chain(id)?;
        write_string(out_json, serde_json::to_string(&chain)?)
    })
}

/// Trained mention encoder plus an index over every KB event.
pub struct EgLinker {
    params: EncoderParams,
    index: CandidateIndex,
    featurizer: FeaturizerConfig,
}

/// Loads a checkpoint and indexes every event of `kb`. In multilingual
/// mode, `languages_json` lists the mention languages to index (a JSON
/// array of codes); it is ignored otherwise and may be null.
///
/// # Safety
/// `kb` must be a live handle, string arguments NUL-terminated (or null
/// where allowed) and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eg_linker_new(
    kb: *const EgKb,
    checkpoint_path: *const c_char,
    multilingual: bool,
    languages_json: *const c_char,
    out: *mut *mut EgLinker,
) -> EgStatus {
    guard(|| {
        non_null(kb, "kb")?;
        non_null(out, "out")?;
        let path = PathBuf::from(read_str(checkpoint_path, "checkpoint_path")?);
        let (mode, languages) = if multilingual {
            let langs: Vec<String> = serde_json::from_str(read_str(languages_json, "languages_json")?)?;
            (LanguageMode::Multilingual, langs)
        } else {
            (LanguageMode::Crosslingual, Vec::new())
        };
        let (params, _) = load_checkpoint(&path)?;
        let featurizer = FeaturizerConfig {
            features: params.features,
            ..FeaturizerConfig::default()
        };
        let kb = &*kb;
        let pool = candidate_pool(&kb.kb, &kb.forest, PoolMode::Inference, None);
        let index = CandidateIndex::build(&params, &kb.kb, &pool, mode, &languages, &featurizer)?;
        *out = Box::into_raw(Box::new(EgLinker {
            params,
            index,
            featurizer,
        }));
        Ok(())
    })
}

/// # Safety
/// `linker` must be null or a handle from [`eg_linker_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn eg_linker_free(linker: *mut EgLinker) {
    if !linker.is_null() {
        drop(Box::from_raw(linker));
    }
}

/// Top-`k` events for one mention given as a JSON object with `id`,
/// `language`, `context`, `span_start`, `span_end` and `anchor_event`
/// (the anchor may be any string). Writes a retrieval record as JSON.
///
/// # Safety
/// `linker` must be a live handle, `mention_json` NUL-terminated and
/// `out_json` writable. Free the result with [`eg_string_free`].
#[no_mangle]
pub unsafe extern "C" fn eg_linker_topk(
    linker: *const EgLinker,
    mention_json: *const c_char,
    k: usize,
    out_json: *mut *mut c_char,
) -> EgStatus {
    guard(|| {
        non_null(linker, "linker")?;
        let linker = &*linker;
        let mention: Mention = serde_json::from_str(read_str(mention_json, "mention_json")?)?;
        mention.validate()?;
        let fv = featurize_mention(&mention, &linker.featurizer);
        let query = linker.params.encode(&fv, Tower::Mention)?;
        let result = RetrievalResult {
            mention_id: mention.id.clone(),
            candidates: linker.index.topk(&query, &mention.language, k)?,
        };
        write_string(out_json, serde_json::to_string(&result)?)
    })
}

/// Metrics over a JSON array of evaluation records (`mention_id`, `gold`,
/// `atomic`, `retrieved`, optional `predicted` and `reranked`). Writes a
/// flat JSON object: Recall@min, Recall@k for every k up to the shortest
/// retrieval list, and set metrics when every record has a prediction.
///
/// # Safety
/// `records_json` must be NUL-terminated and `out_json` writable. Free the
/// result with [`eg_string_free`].
#[no_mangle]
pub unsafe extern "C" fn eg_evaluate_json(
    records_json: *const c_char,
    out_json: *mut *mut c_char,
) -> EgStatus {
    guard(|| {
        let records: Vec<EvalRecord> = serde_json::from_str(read_str(records_json, "records_json")?)?;
        let mut report = serde_json::Map::new();
        report.insert("recall@min".into(), recall_at_min(&records)?.into());
        let shortest = records.iter().map(|r| r.retrieved.len()).min().unwrap_or(0);
        for k in 1..=shortest {
            report.insert(format!("recall@{k}"), recall_at_k(&records, k, false)?.into());
        }
        if records.iter().all(|r| r.predicted.is_some()) {
            let m = set_metrics(&records)?;
            for (name, value) in [
                ("strict_acc", m.strict_acc),
                ("strict_acc_top_min", m.strict_acc_top_min),
                ("macro_f1", m.macro_f1),
                ("micro_f1", m.micro_f1),
            ] {
                report.insert(name.into(), value.into());
            }
        }
        write_string(out_json, serde_json::Value::Object(report).to_string())
    })
}

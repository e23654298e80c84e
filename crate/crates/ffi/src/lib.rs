//! C ABI over the ctxlens library.
//!
//! Objects cross the boundary as opaque handles created by `*_open`,
//! `*_load` or a computing function and released by the matching `*_free`.
//! Every fallible call returns a [`CtxlensStatus`]; on failure the message
//! is kept per thread and read back with [`ctxlens_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ctxlens::corpus::EmbeddingCorpus;
use ctxlens::lens::LensParameters;
use ctxlens::retrieval::{aligned_match_error, cosine_matrix, margin_score, mine_pairs, MarginConfig, MiningResult};
use ctxlens::vectors::{batch_encode, SentenceVectors};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CtxlensStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Shape = 5,
    Config = 6,
    Numeric = 7,
    UnknownId = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

impl CtxlensStatus {
    fn of(err: &ctxlens::Error) -> Self {
        match err.kind() {
            "io" => Self::Io,
            "parse" => Self::Parse,
            "shape" | "empty-sequence" => Self::Shape,
            "config" | "label" | "state" => Self::Config,
            "non-finite" | "zero-norm" | "divergence" | "undefined" => Self::Numeric,
            "unknown-id" => Self::UnknownId,
            _ => Self::Internal,
        }
    }
}

/// A CLEM embedding corpus.
pub struct CtxlensCorpus(EmbeddingCorpus);

/// A lens (mean pooling or trained parameters).
pub struct CtxlensLens(LensParameters);

/// Id-tagged sentence vectors.
pub struct CtxlensVectors(SentenceVectors);

/// Mined sentence pairs.
pub struct CtxlensMining(MiningResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(CtxlensStatus, String);

impl From<ctxlens::Error> for Failure {
    fn from(e: ctxlens::Error) -> Self {
        Failure(CtxlensStatus::of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CtxlensStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CtxlensStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtxlensStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CtxlensStatus::Internal
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(CtxlensStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ctxlens_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ctxlens_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_corpus_open(path: *const c_char, out: *mut *mut CtxlensCorpus) -> CtxlensStatus {
    guard(|| {
        let corpus = EmbeddingCorpus::read(path_arg(path)?)?;
        put(out, CtxlensCorpus(corpus))
    })
}

/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_corpus_len(corpus: *const CtxlensCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Embedding dimension K, or 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_corpus_dim(corpus: *const CtxlensCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.dim())
}

/// # Safety
/// `corpus` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_corpus_free(corpus: *mut CtxlensCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Loads a lens checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_lens_load(path: *const c_char, out: *mut *mut CtxlensLens) -> CtxlensStatus {
    guard(|| {
        let lens = LensParameters::load(path_arg(path)?)?;
        put(out, CtxlensLens(lens))
    })
}

/// Mean pooling over `dim`-dimensional embeddings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_lens_meanpool(dim: usize, out: *mut *mut CtxlensLens) -> CtxlensStatus {
    guard(|| {
        if dim == 0 {
            return Err(Failure(
                CtxlensStatus::InvalidArgument,
                "dimension must be positive".into(),
            ));
        }
        put(out, CtxlensLens(LensParameters::MeanPool { dim }))
    })
}

/// # Safety
/// `lens` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_lens_output_dim(lens: *const CtxlensLens) -> usize {
    lens.as_ref().map_or(0, |l| l.0.output_dim())
}

/// # Safety
/// `lens` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_lens_free(lens: *mut CtxlensLens) {
    if !lens.is_null() {
        drop(Box::from_raw(lens));
    }
}

/// Encodes every record of `corpus`. `threads` of 0 or 1 runs on the
/// calling thread.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_encode(
    corpus: *const CtxlensCorpus,
    lens: *const CtxlensLens,
    threads: usize,
    out: *mut *mut CtxlensVectors,
) -> CtxlensStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        let lens = handle(lens, "lens")?;
        put(out, CtxlensVectors(batch_encode(&corpus.0, &lens.0, threads)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_vectors_open(path: *const c_char, out: *mut *mut CtxlensVectors) -> CtxlensStatus {
    guard(|| {
        let v = SentenceVectors::read(path_arg(path)?)?;
        put(out, CtxlensVectors(v))
    })
}

/// # Safety
/// `vectors` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_vectors_save(vectors: *const CtxlensVectors, path: *const c_char) -> CtxlensStatus {
    guard(|| {
        let v = handle(vectors, "vectors")?;
        Ok(v.0.write(path_arg(path)?)?)
    })
}

/// # Safety
/// `vectors` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_vectors_len(vectors: *const CtxlensVectors) -> usize {
    vectors.as_ref().map_or(0, |v| v.0.len())
}

/// # Safety
/// `vectors` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_vectors_dim(vectors: *const CtxlensVectors) -> usize {
    vectors.as_ref().map_or(0, |v| v.0.dim())
}

/// Copies row `index` into `buf`, which must hold `dim` floats. Writes the
/// id to `id` when it is non-NULL.
///
/// # Safety
/// `vectors` must be live; `buf` must point to `buf_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_vectors_row(
    vectors: *const CtxlensVectors,
    index: usize,
    id: *mut u64,
    buf: *mut f32,
    buf_len: usize,
) -> CtxlensStatus {
    guard(|| {
        let v = &handle(vectors, "vectors")?.0;
        if index >= v.len() {
            return Err(Failure(
                CtxlensStatus::InvalidArgument,
                format!("row {index} out of range for {} rows", v.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if buf_len < v.dim() {
            return Err(Failure(
                CtxlensStatus::BufferTooSmall,
                format!("buffer holds {buf_len} floats, row needs {}", v.dim()),
            ));
        }
        ptr::copy_nonoverlapping(v.row(index).as_ptr(), buf, v.dim());
        if !id.is_null() {
            *id = v.ids()[index];
        }
        Ok(())
    })
}

/// # Safety
/// `vectors` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_vectors_free(vectors: *mut CtxlensVectors) {
    if !vectors.is_null() {
        drop(Box::from_raw(vectors));
    }
}

/// Fraction of gold pairs whose source does not retrieve its target as the
/// cosine nearest neighbour. Gold pairs are `(src_ids[i], tgt_ids[i])`.
///
/// # Safety
/// Handles must be live; id arrays must hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_match_error(
    src: *const CtxlensVectors,
    tgt: *const CtxlensVectors,
    src_ids: *const u64,
    tgt_ids: *const u64,
    n: usize,
    threads: usize,
    out: *mut f64,
) -> CtxlensStatus {
    guard(|| {
        let (src, tgt) = (handle(src, "src")?, handle(tgt, "tgt")?);
        if src_ids.is_null() || tgt_ids.is_null() {
            return Err(null("gold id array"));
        }
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let a = std::slice::from_raw_parts(src_ids, n);
        let b = std::slice::from_raw_parts(tgt_ids, n);
        let gold: Vec<(u64, u64)> = a.iter().copied().zip(b.iter().copied()).collect();
        *out = aligned_match_error(&src.0, &tgt.0, &gold, threads)?;
        Ok(())
    })
}

/// Mines one-to-one pairs whose ratio-margin score over `k` neighbours is
/// at least `threshold`.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_mine(
    src: *const CtxlensVectors,
    tgt: *const CtxlensVectors,
    k: usize,
    threshold: f64,
    threads: usize,
    out: *mut *mut CtxlensMining,
) -> CtxlensStatus {
    guard(|| {
        let (src, tgt) = (handle(src, "src")?, handle(tgt, "tgt")?);
        let s = cosine_matrix(&src.0, &tgt.0, threads)?;
        let margins = margin_score(
            &s,
            &MarginConfig {
                k,
                ..MarginConfig::default()
            },
        )?;
        put(out, CtxlensMining(mine_pairs(&margins.scores, threshold)))
    })
}

/// # Safety
/// `mining` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_mining_len(mining: *const CtxlensMining) -> usize {
    mining.as_ref().map_or(0, |m| m.0.candidates.len())
}

/// Reads candidate `index` (candidates are sorted by descending score).
///
/// # Safety
/// `mining` must be live; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_mining_get(
    mining: *const CtxlensMining,
    index: usize,
    src_id: *mut u64,
    tgt_id: *mut u64,
    score: *mut f32,
) -> CtxlensStatus {
    guard(|| {
        let m = &handle(mining, "mining")?.0;
        let c = m.candidates.get(index).ok_or_else(|| {
            Failure(
                CtxlensStatus::InvalidArgument,
                format!("candidate {index} out of range for {}", m.candidates.len()),
            )
        })?;
        if src_id.is_null() || tgt_id.is_null() || score.is_null() {
            return Err(null("output pointer"));
        }
        *src_id = c.src;
        *tgt_id = c.tgt;
        *score = c.score;
        Ok(())
    })
}

/// # Safety
/// `mining` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ctxlens_mining_free(mining: *mut CtxlensMining) {
    if !mining.is_null() {
        drop(Box::from_raw(mining));
    }
}

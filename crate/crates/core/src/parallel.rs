use crate::error::{Error, Result};

/// Runs `f` inside a dedicated rayon pool of `threads` workers (at least
/// one), so `par_iter` calls inside honour the caller's thread budget.
pub(crate) fn install<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

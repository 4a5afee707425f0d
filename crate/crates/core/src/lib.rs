//! Revisitation lab: attribute saves to later own-profile revisits, turn
//! them into labels and per-pin popularity features, train a multi-task
//! ranker with a save-and-revisit head, evaluate it offline, and compute
//! behavioral reports over event logs.
//!
//! Stages, in pipeline order:
//!
//! | module | role |
//! |--------|------|
//! | [`event`] | event records, day arithmetic, log codec |
//! | [`loggen`] | synthetic logs with configurable revisit curves |
//! | [`attribution`] | save/revisit join and revisitation labels |
//! | [`features`] | windowed per-pin revisitation counts |
//! | [`dataset`] | training rows with point-in-time features |
//! | [`ranker`] | shared-trunk multi-task model, loss, training, scoring |
//! | [`evaluator`] | NDCG, MAP, reciprocal rank, recall, pairwise accuracy, Hits@k |
//! | [`analyzer`] | revisit curves, activity splits, correlations, topic reports |
//! | [`pipeline`] | stage DAG runner and manifest |

#![allow(clippy::needless_range_loop)]

mod csvio;

pub mod analyzer;
pub mod attribution;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod event;
pub mod features;
pub mod loggen;
pub mod pipeline;
pub mod ranker;

pub use error::{Error, Result};
pub use event::{day_index, Action, DayIndex, EventRecord, Surface, TaskId, Topic};

/// Environment variable capping the worker thread count (0 = automatic).
pub const THREADS_ENV: &str = "REVISIT_LAB_THREADS";

/// A rayon pool sized by [`THREADS_ENV`].
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(raw) if !raw.trim().is_empty() => raw
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} = `{raw}` is not an integer")))?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Runs `f` inside a rayon pool sized by [`THREADS_ENV`].
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(thread_pool()?.install(f))
}

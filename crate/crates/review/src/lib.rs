//! Benchmark curation: three raters answer yes/no on the feedback, the
//! textual cue and the box of each instance, and only unanimously approved
//! instances are exported.
//!
//! Verdicts are appended to a JSONL log, one [`ReviewVerdict`] per line, and
//! all other state is derived from it on startup.

pub mod api;
mod store;

pub use store::{
    aggregate, Export, Histogram, ReviewAggregate, ReviewError, ReviewStore, ReviewVerdict, YesCounts,
    RATERS_PER_INSTANCE,
};

//! Field-aware sparse data: schema, instances, negative sampling, splitting
//! and batching.
//!
//! The text format is one instance per line,
//! `label field:feature:value field:feature:value ...`, with 0-based ids.

mod batch;
pub mod convert;
mod instance;
mod negative;
mod schema;
mod split;

pub use batch::{batch_iter, BatchPlan};
pub use instance::{
    format_instance, parse_instance, read_instances, read_instances_from, write_instances, Entry, SparseInstance,
};
pub use negative::{NegativeSampler, SamplingStats, DEFAULT_MAX_ATTEMPTS, DEFAULT_NEGATIVE_LABEL};
pub use schema::{build_schema, FieldSchema};
pub use split::{split_dataset, split_sizes, DatasetSplit, DEFAULT_RATIOS};

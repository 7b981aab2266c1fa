//! Trace-driven workload synthesis over support-benchmark query pools.
//!
//! This crate maps real query-log traces (per-query metadata rows) onto an
//! existing benchmark's SQL query pool, producing executable workloads
//! that preserve the trace's query repetition rate, its relative join
//! complexity over time, and (best effort) its table-access structure.
//! Fidelity reports quantify how well each workload preserves them.
//!
//! The pipeline: parse a trace, prefilter it down to mappable SELECTs,
//! reduce each user to their busiest working week, bucket users by
//! repetition rate and pick representatives, then replay each user's
//! timeline against the pool, reusing benchmark instances so that
//! repeated queries stay repeated.
//!
//! ## Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run -p redbench --example trace_profile     # parse + per-user repetition profile
//! cargo run -p redbench --example prefilter_trace   # elimination rules + busiest week
//! cargo run -p redbench --example index_pool        # scan/validate a SQL pool
//! cargo run -p redbench --example sample_users      # bucket + rank-sum selection
//! cargo run -p redbench --example map_workload      # map one user onto a pool
//! cargo run -p redbench --example fidelity_report   # preservation metrics
//! cargo run -p redbench --example synth_trace       # generate a synthetic trace
//! cargo run -p redbench --example end_to_end        # the whole pipeline into a directory
//! ```
//!
//! The same stages are exposed as subcommands of the `redbench` binary
//! (`index`, `prefilter`, `synth`, `generate`, `report`) with plain
//! CSV/JSON file interfaces, so any stage can be inspected or swapped.

pub mod cli;
pub mod error;
pub mod fidelity;
pub mod pool_index;
pub mod prefilter;
pub mod rng;
pub mod synth_trace;
pub mod trace_model;
pub mod user_sampler;
pub mod workload_mapper;

pub use error::{Error, Result};

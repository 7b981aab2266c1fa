//! Map one user's trace onto a support-benchmark pool and print every
//! mapping decision.
//!
//! ```text
//! cargo run -p redbench --example map_workload
//! ```

use std::path::PathBuf;

use redbench::pool_index::{scan_pool, DEFAULT_TEMPLATE_RULE};
use redbench::prefilter::prefilter_traces;
use redbench::trace_model::parse_trace;
use redbench::workload_mapper::generate_workload;

fn main() -> redbench::Result<()> {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let traces = parse_trace(&manifest.join("fixtures/traces/demo.csv"))?;
    let (survivors, _) = prefilter_traces(traces, 1000);
    let pool = scan_pool(
        &manifest.join("fixtures/pools/mini_imdb"),
        DEFAULT_TEMPLATE_RULE,
    )?;

    for trace in &survivors {
        let workload = generate_workload(trace, &pool, 0)?;
        println!(
            "user {} (bucket {}, stream seed {:#018x}):",
            workload.user_id, workload.bucket, workload.seed
        );
        println!("  seq  source       case             template  instance");
        for q in &workload.queries {
            println!(
                "  {:<4} {:<12} {:<16} {:<9} {}",
                q.seq,
                q.source_query_id,
                q.map_case.to_string(),
                q.template_id,
                q.instance_id
            );
        }
        println!(
            "  fallback: {} of {} queries",
            workload.fallback_count(),
            workload.len()
        );
        println!();
    }
    Ok(())
}

//! Run the elimination rules and busiest-week reduction on a trace and
//! print the audit counters.
//!
//! ```text
//! cargo run -p redbench --example prefilter_trace [trace.csv]
//! ```

use std::path::PathBuf;

use redbench::prefilter::prefilter_traces;
use redbench::trace_model::parse_trace;

fn main() -> redbench::Result<()> {
    let trace_path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/traces/demo.csv")
        });

    let traces = parse_trace(&trace_path)?;
    let (survivors, stats) = prefilter_traces(traces, 1000);

    println!("rule                       removed");
    for (rule, count) in stats.to_rows() {
        println!("{rule:<26} {count:>7}");
    }
    println!();
    println!(
        "select share {:.4}; conservation holds: {}",
        stats.select_share(),
        stats.conserves()
    );
    println!();
    for trace in &survivors {
        let (first, last) = (
            trace.records().first().unwrap().arrival_timestamp,
            trace.records().last().unwrap().arrival_timestamp,
        );
        println!(
            "kept {:<10} {:>4} record(s), busiest week {} .. {}",
            trace.user_id(),
            trace.len(),
            first,
            last
        );
    }
    Ok(())
}

//! Generate a synthetic trace with an exact target repetition rate and
//! verify the rate survives the whole parse/prefilter path.
//!
//! ```text
//! cargo run -p redbench --example synth_trace [out.csv]
//! ```

use std::path::PathBuf;

use redbench::prefilter::prefilter_traces;
use redbench::synth_trace::{synthesize, synthesize_to_file, SynthSpec};
use redbench::trace_model::{group_by_user, repetition_rate};

fn main() -> redbench::Result<()> {
    // a single-week span keeps the busiest-week reduction from trimming
    // rows, so the measured rate equals the target exactly
    let spec = SynthSpec {
        users: 4,
        queries_per_user: 100,
        target_rate: 0.75,
        join_range: (1, 5),
        table_universe: 60,
        cached_fraction: 0.1,
        non_select_fraction: 0.05,
        week_span: 1,
        seed: 1,
        ..SynthSpec::default()
    };

    let records = synthesize(&spec)?;
    println!(
        "synthesized {} row(s) for {} user(s) (target rate {})",
        records.len(),
        spec.users,
        spec.target_rate
    );

    let (survivors, stats) = prefilter_traces(group_by_user(records), 1000);
    println!(
        "prefilter removed {} noise row(s); {} conforming record(s) kept",
        stats.removed_cached + stats.removed_non_select,
        stats.surviving_records
    );
    for trace in &survivors {
        println!(
            "  {}: measured rate {:.4}",
            trace.user_id(),
            repetition_rate(&trace.hashes())
        );
    }

    if let Some(path) = std::env::args().nth(1).map(PathBuf::from) {
        synthesize_to_file(&spec, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

//! Parse a trace and print each user's repetition profile, raw and after
//! prefiltering.
//!
//! ```text
//! cargo run -p redbench --example trace_profile [trace.csv]
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use redbench::prefilter::prefilter_traces;
use redbench::trace_model::{parse_trace, repetition_rate};
use redbench::user_sampler::profile_user;

fn main() -> redbench::Result<()> {
    let trace_path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/traces/demo.csv")
        });

    let traces = parse_trace(&trace_path)?;
    println!("{}: {} user(s)", trace_path.display(), traces.len());
    println!();
    println!("{:<10} {:>9} {:>9}", "user", "raw rows", "raw rate");
    for trace in &traces {
        println!(
            "{:<10} {:>9} {:>9.4}",
            trace.user_id(),
            trace.len(),
            repetition_rate(&trace.hashes()),
        );
    }

    let all_users: BTreeSet<String> = traces.iter().map(|t| t.user_id().to_string()).collect();
    let (survivors, _) = prefilter_traces(traces, 1000);
    println!();
    println!(
        "{:<10} {:>9} {:>9} {:>7} {:>14} {:>17}",
        "survivor", "rows", "rate", "bucket", "distinct joins", "distinct scansets"
    );
    let mut kept = BTreeSet::new();
    for trace in &survivors {
        let profile = profile_user(trace);
        kept.insert(profile.user_id.clone());
        println!(
            "{:<10} {:>9} {:>9.4} {:>7} {:>14} {:>17}",
            profile.user_id,
            trace.len(),
            profile.repetition_rate,
            profile.bucket,
            profile.distinct_join_values,
            profile.distinct_scansets,
        );
    }
    for dropped in all_users.difference(&kept) {
        println!("{dropped:<10} dropped by the prefilter");
    }
    Ok(())
}

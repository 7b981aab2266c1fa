//! Bucket users by repetition rate and pick per-bucket representatives by
//! rank-sum workload variability.
//!
//! ```text
//! cargo run -p redbench --example sample_users
//! ```

use redbench::prefilter::prefilter_traces;
use redbench::synth_trace::{synthesize, SynthSpec};
use redbench::trace_model::group_by_user;
use redbench::user_sampler::{profile_user, select_users};

fn main() -> redbench::Result<()> {
    // five buckets, five users each
    let mut records = Vec::new();
    for (i, rate) in [0.05, 0.25, 0.45, 0.65, 0.85].iter().enumerate() {
        records.extend(synthesize(&SynthSpec {
            users: 5,
            queries_per_user: 40,
            target_rate: *rate,
            seed: 40 + i as u64,
            user_prefix: format!("b{i}u"),
            ..SynthSpec::default()
        })?);
    }

    let (survivors, _) = prefilter_traces(group_by_user(records), 1000);
    let profiles: Vec<_> = survivors.iter().map(profile_user).collect();
    let (selections, warnings) = select_users(&profiles, 3);

    println!(
        "{:<7} {:<8} {:<8} {:>6} {:>12}",
        "bucket", "user", "role", "rate", "variability"
    );
    for s in &selections {
        println!(
            "{:<7} {:<8} {:<8} {:>6.2} {:>12}",
            s.bucket,
            s.user_id,
            s.role.to_string(),
            s.repetition_rate,
            s.total_variability,
        );
    }
    for w in &warnings {
        println!("warning: {w}");
    }
    Ok(())
}

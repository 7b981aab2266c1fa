//! The whole pipeline in one call: synthesize a full-bucket trace, map it
//! onto the bundled pool, and write the artifact tree.
//!
//! ```text
//! cargo run -p redbench --example end_to_end [out_dir]
//! ```

use std::path::PathBuf;

use redbench::cli::{cmd_generate, RunConfig, DEFAULT_TEMPLATE_RULE};
use redbench::synth_trace::{synthesize, SynthSpec};
use redbench::trace_model::write_trace_file;

fn main() -> redbench::Result<()> {
    let out_root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let out = out_root.join("redbench-end-to-end");

    // three users in each of the ten repetition buckets
    let mut records = Vec::new();
    for i in 0..10u64 {
        records.extend(synthesize(&SynthSpec {
            users: 3,
            queries_per_user: 40,
            target_rate: i as f64 / 10.0 + 0.05,
            join_range: (1, 4),
            cached_fraction: 0.1,
            seed: i,
            user_prefix: format!("b{i}u"),
            ..SynthSpec::default()
        })?);
    }
    let trace = out.join("trace.csv");
    std::fs::create_dir_all(&out).map_err(|e| redbench::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    write_trace_file(&trace, &records)?;

    let config = RunConfig {
        trace,
        pool: PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/pools/mini_imdb"),
        template_rule: DEFAULT_TEMPLATE_RULE.to_string(),
        busiest_week_k: 1000,
        users_per_bucket: 3,
        seed: 0,
        out: out.join("run"),
        quarantine: false,
        emit_sql: true,
        emit_plot_data: true,
    };
    let outcome = cmd_generate(&config)?;

    println!(
        "generated {} workload(s) from {} selected user(s)",
        outcome.workloads, outcome.selected_users
    );
    println!(
        "overall fallback fraction {:.4}",
        outcome.summary.overall_fallback_fraction
    );
    for bucket in &outcome.summary.per_bucket {
        println!(
            "  bucket {}: {} workload(s), mean input rate {:.3}, mean fallback {:.3}",
            bucket.bucket, bucket.workloads, bucket.mean_input_rate, bucket.mean_fallback_fraction
        );
    }
    println!("artifacts under {}", config.out.display());
    Ok(())
}

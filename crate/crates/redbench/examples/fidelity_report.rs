//! Generate workloads and quantify how well they preserve the source
//! trace: repetition rates, fallback fraction, join-complexity series.
//!
//! ```text
//! cargo run -p redbench --example fidelity_report
//! ```

use std::path::PathBuf;

use redbench::fidelity::{aggregate_reports, build_report, coverage_shortfall};
use redbench::pool_index::{scan_pool, DEFAULT_TEMPLATE_RULE};
use redbench::prefilter::prefilter_traces;
use redbench::synth_trace::{synthesize, SynthSpec};
use redbench::trace_model::group_by_user;
use redbench::workload_mapper::generate_workload;

fn main() -> redbench::Result<()> {
    let pool_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/pools/mini_imdb");
    let pool = scan_pool(&pool_dir, DEFAULT_TEMPLATE_RULE)?;

    let records = synthesize(&SynthSpec {
        users: 3,
        queries_per_user: 60,
        target_rate: 0.6,
        join_range: (1, 4),
        seed: 8,
        ..SynthSpec::default()
    })?;
    let (survivors, _) = prefilter_traces(group_by_user(records), 1000);

    let mut reports = Vec::new();
    for trace in &survivors {
        let workload = generate_workload(trace, &pool, 0)?;
        let report = build_report(trace, &workload, &pool)?;
        println!(
            "user {}: input rate {:.3}, by hash {:.3}, by instance {:.3}, fallback {:.3}",
            report.user_id,
            report.input_rate,
            report.output_rate_by_hash,
            report.output_rate_by_instance,
            report.fallback_fraction,
        );
        println!(
            "  {} distinct scanset(s) in, {} distinct template(s) out; series head:",
            report.distinct_scansets_in, report.distinct_templates_out
        );
        for ((seq, input), (_, output)) in report
            .input_join_series
            .iter()
            .zip(&report.output_join_series)
            .take(5)
        {
            println!("    seq {seq:>3}: input norm {input:.3} -> output norm {output:.3}");
        }
        reports.push(report);
    }

    let summary = aggregate_reports(&reports);
    println!();
    println!(
        "overall: {} workload(s), {} queries, weighted fallback {:.4}",
        summary.workload_count, summary.total_queries, summary.overall_fallback_fraction
    );
    println!(
        "table coverage shortfall vs this pool: {:.2}",
        coverage_shortfall(survivors.iter(), pool.table_count())
    );
    Ok(())
}

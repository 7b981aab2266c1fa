//! Cross-stage integration: the full `generate` pipeline equals the
//! composition of the stage commands on intermediate files, and the
//! bundled fixtures behave as documented.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::{dir_snapshot, fixture, write_pool};
use redbench::cli::{cmd_generate, cmd_prefilter, cmd_report, RunConfig, DEFAULT_TEMPLATE_RULE};
use redbench::pool_index::scan_pool;
use redbench::prefilter::prefilter_traces;
use redbench::synth_trace::{synthesize, SynthSpec};
use redbench::trace_model::{group_by_user, parse_trace, write_trace_file};
use redbench::user_sampler::profile_user;

fn synth_config(dir: &Path, trace_name: &str, out_name: &str) -> RunConfig {
    RunConfig {
        trace: dir.join(trace_name),
        pool: dir.join("pool"),
        template_rule: DEFAULT_TEMPLATE_RULE.to_string(),
        busiest_week_k: 1000,
        users_per_bucket: 3,
        seed: 0,
        out: dir.join(out_name),
        quarantine: false,
        emit_sql: true,
        emit_plot_data: true,
    }
}

/// The artifacts that must be identical whether `generate` consumed the
/// raw trace or the prefiltered intermediate: everything except run
/// metadata (run.json records the config, prefilter_stats.csv describes
/// the stage's own input).
fn content_artifacts(snapshot: &BTreeMap<String, Vec<u8>>) -> BTreeMap<&String, &Vec<u8>> {
    snapshot
        .iter()
        .filter(|(rel, _)| rel.as_str() != "run.json" && rel.as_str() != "prefilter_stats.csv")
        .collect()
}

#[test]
fn generate_equals_staged_composition() {
    let dir = tempfile::tempdir().unwrap();
    write_pool(&dir.path().join("pool"), &[(1, 3, 4), (2, 3, 4), (3, 3, 4)]);

    // a noisy trace: the prefilter stage has real work to do
    let records = synthesize(&SynthSpec {
        users: 5,
        queries_per_user: 60,
        target_rate: 0.4,
        join_range: (1, 3),
        cached_fraction: 0.15,
        non_select_fraction: 0.1,
        seed: 77,
        ..SynthSpec::default()
    })
    .unwrap();
    write_trace_file(&dir.path().join("raw.csv"), &records).unwrap();

    // one-shot pipeline on the raw trace
    let direct = synth_config(dir.path(), "raw.csv", "direct");
    cmd_generate(&direct).unwrap();

    // staged: prefilter first, then generate on the filtered trace
    cmd_prefilter(
        &dir.path().join("raw.csv"),
        1000,
        &dir.path().join("stage1"),
    )
    .unwrap();
    let staged = RunConfig {
        trace: dir.path().join("stage1/filtered_trace.csv"),
        out: dir.path().join("staged"),
        ..synth_config(dir.path(), "raw.csv", "staged")
    };
    cmd_generate(&staged).unwrap();

    let direct_snap = dir_snapshot(&direct.out);
    let staged_snap = dir_snapshot(&staged.out);
    assert_eq!(
        content_artifacts(&direct_snap),
        content_artifacts(&staged_snap),
        "workloads, fidelity, series, selection, and index must be byte-identical"
    );

    // report on the one-shot outputs reproduces its fidelity artifacts
    cmd_report(
        &direct.trace,
        &direct.out.join("pool_index.csv"),
        &direct.out.join("workloads"),
        1000,
        &dir.path().join("reported"),
    )
    .unwrap();
    for rel in ["fidelity.csv", "summary.json"] {
        assert_eq!(
            fs::read(direct.out.join(rel)).unwrap(),
            fs::read(dir.path().join("reported").join(rel)).unwrap(),
            "{rel} must be reproduced byte-for-byte"
        );
    }
    let reported_snap = dir_snapshot(&dir.path().join("reported"));
    let series: Vec<&String> = direct_snap
        .keys()
        .filter(|k| k.starts_with("series_"))
        .collect();
    assert!(
        !series.is_empty(),
        "emit-plot-data must produce series files"
    );
    for rel in series {
        assert_eq!(direct_snap[rel], reported_snap[rel], "{rel} must match");
    }
}

#[test]
fn prefilter_is_idempotent_at_the_file_level() {
    let dir = tempfile::tempdir().unwrap();
    let records = synthesize(&SynthSpec {
        users: 3,
        queries_per_user: 50,
        target_rate: 0.3,
        cached_fraction: 0.2,
        seed: 13,
        ..SynthSpec::default()
    })
    .unwrap();
    write_trace_file(&dir.path().join("raw.csv"), &records).unwrap();

    cmd_prefilter(&dir.path().join("raw.csv"), 1000, &dir.path().join("once")).unwrap();
    cmd_prefilter(
        &dir.path().join("once/filtered_trace.csv"),
        1000,
        &dir.path().join("twice"),
    )
    .unwrap();
    assert_eq!(
        fs::read(dir.path().join("once/filtered_trace.csv")).unwrap(),
        fs::read(dir.path().join("twice/filtered_trace.csv")).unwrap()
    );
}

#[test]
fn demo_trace_walks_the_whole_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        trace: fixture("traces/demo.csv"),
        pool: fixture("pools/mini_imdb"),
        template_rule: DEFAULT_TEMPLATE_RULE.to_string(),
        busiest_week_k: 1000,
        users_per_bucket: 3,
        seed: 0,
        out: dir.path().join("out"),
        quarantine: false,
        emit_sql: true,
        emit_plot_data: false,
    };
    let outcome = cmd_generate(&config).unwrap();
    // alice (bucket 5) and bob (bucket 0) survive; carol's constant join
    // count drops her
    assert_eq!(outcome.workloads, 2);
    assert!(dir.path().join("out/workloads/alice.csv").exists());
    assert!(dir.path().join("out/workloads/alice.sql").exists());
    assert!(dir.path().join("out/workloads/bob.csv").exists());

    let traces = parse_trace(&fixture("traces/demo.csv")).unwrap();
    let (survivors, stats) = prefilter_traces(traces, 1000);
    assert!(stats.conserves());
    let profiles: Vec<_> = survivors.iter().map(profile_user).collect();
    let alice = profiles.iter().find(|p| p.user_id == "alice").unwrap();
    assert_eq!(alice.repetition_rate, 0.5);
    assert_eq!(alice.bucket, 5);
    assert_eq!(alice.distinct_scansets, 4);
}

#[test]
fn fixture_pools_have_documented_shapes() {
    let imdb = scan_pool(&fixture("pools/mini_imdb"), DEFAULT_TEMPLATE_RULE).unwrap();
    assert_eq!(imdb.template_count(), 5);
    assert_eq!(imdb.instance_count(), 10);
    assert_eq!((imdb.pool_min_joins(), imdb.pool_max_joins()), (1, 4));
    assert!(imdb.validate().is_ok());
    // the self-join template counts aliases separately
    let five = imdb.template("5").unwrap();
    assert_eq!(five.join_count, 3);
    assert_eq!(five.instances[0].scanset.len(), 3);

    let tpcds = scan_pool(&fixture("pools/mini_tpcds"), DEFAULT_TEMPLATE_RULE).unwrap();
    assert_eq!(tpcds.template_count(), 4);
    assert!(tpcds.validate().is_ok());
    // the WITH-based template excludes its CTE name from the scanset
    let cte = tpcds.template("1").unwrap();
    assert_eq!(cte.join_count, 2);
    assert!(cte.instances[0].scanset.contains("store_returns"));
    assert!(!cte.instances[0].scanset.contains("customer_total_return"));
}

#[test]
fn custom_template_rule_groups_by_capture() {
    let dir = tempfile::tempdir().unwrap();
    for (name, tables) in [
        ("query42_i1.sql", "a, b"),
        ("query42_i2.sql", "c, d"),
        ("query7_i1.sql", "e, f"),
    ] {
        fs::write(
            dir.path().join(name),
            format!("SELECT 1 FROM {tables} WHERE 1 = 1;"),
        )
        .unwrap();
    }
    let pool = scan_pool(dir.path(), r"^query(\d+)").unwrap();
    assert_eq!(pool.template_count(), 2);
    assert_eq!(pool.template("42").unwrap().instance_count(), 2);
    assert_eq!(pool.template("7").unwrap().instance_count(), 1);

    // the default rule has no digits to capture here
    let err = scan_pool(dir.path(), DEFAULT_TEMPLATE_RULE).unwrap_err();
    assert!(matches!(err, redbench::Error::TemplateRule { .. }));
}

#[test]
fn bucket_profile_matches_synth_target() {
    // a synthesized 0.85-rate trace profiles into bucket 8
    let records = synthesize(&SynthSpec {
        users: 1,
        queries_per_user: 40,
        target_rate: 0.85,
        seed: 2,
        ..SynthSpec::default()
    })
    .unwrap();
    let traces = group_by_user(records);
    let profile = profile_user(&traces[0]);
    assert_eq!(profile.repetition_rate, 0.85);
    assert_eq!(profile.bucket, 8);
}

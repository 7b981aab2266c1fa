//! Preservation metrics: how faithfully a mapped workload reproduces its
//! source trace.
//!
//! The repetition rate is measured twice on the output: over source
//! hashes (always equal to the input rate, by mapper construction) and
//! over emitted instance ids (instance reuse on fallback can only add
//! repetitions). Join complexity is reported as two per-query series,
//! each normalized by its own min/max range: the input by the user's
//! join range, the output by the pool's.

use std::collections::HashSet;
use std::hash::Hash;
use std::io;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pool_index::PoolIndex;
use crate::prefilter::join_range;
use crate::trace_model::{repetition_rate, UserTrace};
use crate::workload_mapper::{norm_or_midpoint, Workload};

/// Scalar and series metrics for one workload.
#[derive(Debug, Clone)]
pub struct FidelityReport {
    pub user_id: String,
    pub bucket: usize,
    pub len: usize,
    pub input_rate: f64,
    pub output_rate_by_hash: f64,
    pub output_rate_by_instance: f64,
    pub fallback_fraction: f64,
    /// `(seq, normalized join)` over the user's own join range.
    pub input_join_series: Vec<(usize, f64)>,
    /// `(seq, normalized join)` of the chosen templates over the pool range.
    pub output_join_series: Vec<(usize, f64)>,
    pub distinct_scansets_in: usize,
    pub distinct_templates_out: usize,
}

/// Seen-set repetition scan over any hashable sequence.
fn rate_of<T: Eq + Hash>(items: &[T]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let mut seen: HashSet<&T> = HashSet::with_capacity(items.len());
    let mut repeats = 0usize;
    for item in items {
        if !seen.insert(item) {
            repeats += 1;
        }
    }
    repeats as f64 / items.len() as f64
}

/// Compare a workload against the trace it was generated from.
pub fn build_report(
    trace: &UserTrace,
    workload: &Workload,
    pool: &PoolIndex,
) -> Result<FidelityReport> {
    if trace.len() != workload.len() {
        return Err(Error::Integrity(format!(
            "trace has {} records but workload has {} queries for user `{}`",
            trace.len(),
            workload.len(),
            workload.user_id
        )));
    }
    let input_hashes = trace.hashes();
    let input_rate = repetition_rate(&input_hashes);

    let output_hashes: Vec<_> = workload.queries.iter().map(|q| &q.source_hash).collect();
    let output_rate_by_hash = rate_of(&output_hashes);

    let instances: Vec<&str> = workload
        .queries
        .iter()
        .map(|q| q.instance_id.as_str())
        .collect();
    let output_rate_by_instance = rate_of(&instances);

    let fallback_fraction = workload.fallback_count() as f64 / workload.len() as f64;

    let (jmin, jmax) = join_range(trace);
    let input_join_series: Vec<(usize, f64)> = trace
        .records()
        .iter()
        .enumerate()
        .map(|(seq, r)| (seq, norm_or_midpoint(r.num_joins, jmin, jmax)))
        .collect();
    let output_join_series: Vec<(usize, f64)> = workload
        .queries
        .iter()
        .map(|q| {
            let norm = pool
                .template(&q.template_id)
                .map(|t| t.normalized_join)
                .ok_or_else(|| {
                    Error::Integrity(format!("template `{}` missing from pool", q.template_id))
                })?;
            Ok((q.seq, norm))
        })
        .collect::<Result<_>>()?;

    let distinct_scansets_in = trace
        .records()
        .iter()
        .map(|r| r.scanset())
        .collect::<HashSet<_>>()
        .len();
    let distinct_templates_out = workload
        .queries
        .iter()
        .map(|q| q.template_id.as_str())
        .collect::<HashSet<_>>()
        .len();

    Ok(FidelityReport {
        user_id: workload.user_id.clone(),
        bucket: workload.bucket,
        len: workload.len(),
        input_rate,
        output_rate_by_hash,
        output_rate_by_instance,
        fallback_fraction,
        input_join_series,
        output_join_series,
        distinct_scansets_in,
        distinct_templates_out,
    })
}

/// Per-bucket means over a set of reports.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BucketSummary {
    pub bucket: usize,
    pub workloads: usize,
    pub mean_input_rate: f64,
    pub mean_output_rate_by_hash: f64,
    pub mean_output_rate_by_instance: f64,
    pub mean_fallback_fraction: f64,
}

/// Cross-workload rollup. The overall fallback fraction is weighted by
/// workload length.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct Summary {
    pub workload_count: usize,
    pub total_queries: usize,
    pub per_bucket: Vec<BucketSummary>,
    pub overall_fallback_fraction: f64,
}

pub fn aggregate_reports(reports: &[FidelityReport]) -> Summary {
    if reports.is_empty() {
        return Summary::default();
    }
    let mut per_bucket: Vec<BucketSummary> = Vec::new();
    for bucket in 0..10 {
        let members: Vec<&FidelityReport> = reports.iter().filter(|r| r.bucket == bucket).collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len() as f64;
        per_bucket.push(BucketSummary {
            bucket,
            workloads: members.len(),
            mean_input_rate: members.iter().map(|r| r.input_rate).sum::<f64>() / n,
            mean_output_rate_by_hash: members.iter().map(|r| r.output_rate_by_hash).sum::<f64>()
                / n,
            mean_output_rate_by_instance: members
                .iter()
                .map(|r| r.output_rate_by_instance)
                .sum::<f64>()
                / n,
            mean_fallback_fraction: members.iter().map(|r| r.fallback_fraction).sum::<f64>() / n,
        });
    }
    let total_queries: usize = reports.iter().map(|r| r.len).sum();
    let fallback_queries: f64 = reports
        .iter()
        .map(|r| r.fallback_fraction * r.len as f64)
        .sum();
    Summary {
        workload_count: reports.len(),
        total_queries,
        per_bucket,
        overall_fallback_fraction: if total_queries == 0 {
            0.0
        } else {
            fallback_queries / total_queries as f64
        },
    }
}

/// Fraction of users who touch more distinct tables than the pool offers,
/// making a table-to-table bijection impossible for them.
pub fn coverage_shortfall<'a, I>(traces: I, pool_table_count: usize) -> f64
where
    I: IntoIterator<Item = &'a UserTrace>,
{
    let mut users = 0usize;
    let mut short = 0usize;
    for trace in traces {
        users += 1;
        let tables: HashSet<&str> = trace
            .records()
            .iter()
            .flat_map(|r| r.scanset().iter())
            .collect();
        if tables.len() > pool_table_count {
            short += 1;
        }
    }
    if users == 0 {
        0.0
    } else {
        short as f64 / users as f64
    }
}

/// `fidelity.csv`: one row of scalar metrics per workload.
pub fn write_fidelity_csv<W: io::Write>(writer: W, reports: &[FidelityReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "user_id",
        "bucket",
        "len",
        "input_rate",
        "output_rate_by_hash",
        "output_rate_by_instance",
        "fallback_fraction",
        "distinct_scansets_in",
        "distinct_templates_out",
    ])?;
    for r in reports {
        wtr.write_record([
            r.user_id.as_str(),
            &r.bucket.to_string(),
            &r.len.to_string(),
            &r.input_rate.to_string(),
            &r.output_rate_by_hash.to_string(),
            &r.output_rate_by_instance.to_string(),
            &r.fallback_fraction.to_string(),
            &r.distinct_scansets_in.to_string(),
            &r.distinct_templates_out.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<fidelity writer>", e))?;
    Ok(())
}

/// Minimal chart of the two join series: input solid, output dashed.
/// Hand-rolled SVG so the plot data ships with a rendered view and no
/// plotting dependency.
pub fn write_series_svg<W: io::Write>(mut writer: W, report: &FidelityReport) -> Result<()> {
    const W_PX: f64 = 640.0;
    const H_PX: f64 = 240.0;
    const PAD: f64 = 20.0;
    let io_err = |e| Error::io("<series svg writer>", e);

    let n = report.input_join_series.len().max(2) as f64;
    let x = |seq: usize| PAD + (W_PX - 2.0 * PAD) * seq as f64 / (n - 1.0);
    let y = |norm: f64| H_PX - PAD - (H_PX - 2.0 * PAD) * norm;
    let points = |series: &[(usize, f64)]| {
        series
            .iter()
            .map(|(seq, norm)| format!("{:.1},{:.1}", x(*seq), y(*norm)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    writeln!(
        writer,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W_PX} {H_PX}" width="{W_PX}" height="{H_PX}">"#
    )
    .map_err(io_err)?;
    writeln!(
        writer,
        r#"  <title>normalized join complexity over time: {} (bucket {})</title>"#,
        report.user_id, report.bucket
    )
    .map_err(io_err)?;
    writeln!(
        writer,
        r#"  <rect width="{W_PX}" height="{H_PX}" fill="white"/>"#
    )
    .map_err(io_err)?;
    writeln!(
        writer,
        r##"  <polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{}"/>"##,
        points(&report.input_join_series)
    )
    .map_err(io_err)?;
    writeln!(
        writer,
        r##"  <polyline fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="4 3" points="{}"/>"##,
        points(&report.output_join_series)
    )
    .map_err(io_err)?;
    writeln!(writer, "</svg>").map_err(io_err)?;
    Ok(())
}

/// `series_<user>.csv`: both join series, normalized per-curve by each
/// curve's own range.
pub fn write_series_csv<W: io::Write>(writer: W, report: &FidelityReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["seq", "input_norm_joins", "output_norm_joins"])?;
    for ((seq, input), (_, output)) in report
        .input_join_series
        .iter()
        .zip(report.output_join_series.iter())
    {
        wtr.write_record([seq.to_string(), input.to_string(), output.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<series writer>", e))?;
    Ok(())
}

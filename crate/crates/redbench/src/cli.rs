//! Pipeline orchestration behind the `redbench` binary.
//!
//! Every stage reads and writes plain CSV/JSON files, so a full
//! `generate` run equals the composition of the stage subcommands on
//! intermediate files. All randomness flows from the single seed in
//! [`RunConfig`]; nothing samples the clock or the filesystem order
//! (directory listings are sorted before use).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fidelity::{self, FidelityReport, Summary};
use crate::pool_index::{self, PoolIndex};
use crate::prefilter::{prefilter_traces, PrefilterStats};
use crate::synth_trace::{self, SynthSpec};
use crate::trace_model::{self, UserTrace};
use crate::user_sampler::{self, Selection};
use crate::workload_mapper::{self, generate_workload, MappedQuery, Workload};

pub use crate::pool_index::DEFAULT_TEMPLATE_RULE;

pub const DEFAULT_BUSIEST_WEEK_K: usize = 1000;
pub const DEFAULT_USERS_PER_BUCKET: usize = 3;

/// Configuration of a full `generate` run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub trace: PathBuf,
    pub pool: PathBuf,
    pub template_rule: String,
    pub busiest_week_k: usize,
    pub users_per_bucket: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub quarantine: bool,
    pub emit_sql: bool,
    pub emit_plot_data: bool,
}

#[derive(Debug, Clone, Serialize)]
struct RunCounts {
    input_records: u64,
    input_users: u64,
    surviving_users: u64,
    selected_users: usize,
    workloads: usize,
    mapped_queries: usize,
    fallback_queries: usize,
}

#[derive(Debug, Clone, Serialize)]
struct RunMetrics {
    select_share: f64,
    overall_fallback_fraction: f64,
    table_coverage_shortfall: f64,
}

#[derive(Debug, Clone, Serialize)]
struct RunReport<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    counts: RunCounts,
    metrics: RunMetrics,
    warnings: &'a [String],
}

/// What `cmd_generate` accomplished, for callers that want to report.
#[derive(Debug)]
pub struct GenerateOutcome {
    pub workloads: usize,
    pub selected_users: usize,
    pub warnings: Vec<String>,
    pub summary: Summary,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// File-system-safe name for a user id. Ids from the trace are opaque;
/// anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn sanitize_user_id(user_id: &str) -> String {
    user_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Extended summary written as `summary.json`. The coverage shortfall is
/// derived from the surviving users, so the file is identical whether the
/// pipeline ran in one shot or stage by stage; input-dependent metrics
/// (like the SELECT share) live in `run.json` instead.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryFile {
    #[serde(flatten)]
    pub fidelity: Summary,
    pub table_coverage_shortfall: f64,
}

/// The whole pipeline: parse, prefilter, busiest week, bucket and select
/// users, map workloads, report fidelity. Writes one artifact tree under
/// `config.out` and is byte-deterministic for a fixed config.
pub fn cmd_generate(config: &RunConfig) -> Result<GenerateOutcome> {
    let traces = trace_model::parse_trace(&config.trace)?;
    let (survivors, stats) = prefilter_traces(traces, config.busiest_week_k);
    if survivors.is_empty() {
        return Err(Error::NoUsersSurvive);
    }

    let mut warnings = Vec::new();
    let pool = load_pool(
        &config.pool,
        &config.template_rule,
        config.quarantine,
        &mut warnings,
    )?;

    let by_user: BTreeMap<&str, &UserTrace> = survivors.iter().map(|t| (t.user_id(), t)).collect();
    let profiles: Vec<_> = survivors.iter().map(user_sampler::profile_user).collect();
    let (selections, selection_warnings) =
        user_sampler::select_users(&profiles, config.users_per_bucket);
    warnings.extend(selection_warnings);
    for w in &warnings {
        log::warn!("{w}");
    }

    // workloads generated and written in sorted user order
    let mut chosen: Vec<&Selection> = selections.iter().collect();
    chosen.sort_by(|a, b| a.user_id.cmp(&b.user_id));

    let mut workloads: Vec<Workload> = Vec::with_capacity(chosen.len());
    let mut reports: Vec<FidelityReport> = Vec::with_capacity(chosen.len());
    for sel in &chosen {
        let trace = by_user.get(sel.user_id.as_str()).ok_or_else(|| {
            Error::Integrity(format!("selected user `{}` has no trace", sel.user_id))
        })?;
        let workload = generate_workload(trace, &pool, config.seed)?;
        reports.push(fidelity::build_report(trace, &workload, &pool)?);
        workloads.push(workload);
    }

    let summary = fidelity::aggregate_reports(&reports);
    let shortfall = fidelity::coverage_shortfall(survivors.iter(), pool.table_count());

    // ---- artifact tree ----
    create_dir(&config.out)?;
    let workload_dir = config.out.join("workloads");
    create_dir(&workload_dir)?;

    {
        let mut buf = Vec::new();
        stats.write_csv(&mut buf)?;
        write_file(&config.out.join("prefilter_stats.csv"), &buf)?;
    }
    {
        let mut buf = Vec::new();
        user_sampler::write_selection_csv(&mut buf, &selections)?;
        write_file(&config.out.join("selection.csv"), &buf)?;
    }
    {
        let mut buf = Vec::new();
        pool.write_index_csv(&mut buf)?;
        write_file(&config.out.join("pool_index.csv"), &buf)?;
    }
    for workload in &workloads {
        let name = sanitize_user_id(&workload.user_id);
        let mut buf = Vec::new();
        workload_mapper::write_manifest(&mut buf, workload)?;
        write_file(&workload_dir.join(format!("{name}.csv")), &buf)?;
        if config.emit_sql {
            let mut sql = Vec::new();
            workload_mapper::write_playback_sql(&mut sql, workload, &pool)?;
            write_file(&workload_dir.join(format!("{name}.sql")), &sql)?;
        }
    }
    {
        let mut buf = Vec::new();
        fidelity::write_fidelity_csv(&mut buf, &reports)?;
        write_file(&config.out.join("fidelity.csv"), &buf)?;
    }
    if config.emit_plot_data {
        for report in &reports {
            let name = sanitize_user_id(&report.user_id);
            let mut buf = Vec::new();
            fidelity::write_series_csv(&mut buf, report)?;
            write_file(&config.out.join(format!("series_{name}.csv")), &buf)?;
            let mut svg = Vec::new();
            fidelity::write_series_svg(&mut svg, report)?;
            write_file(&config.out.join(format!("series_{name}.svg")), &svg)?;
        }
    }

    let summary_file = SummaryFile {
        fidelity: summary.clone(),
        table_coverage_shortfall: shortfall,
    };
    write_file(
        &config.out.join("summary.json"),
        &to_pretty_json(&summary_file)?,
    )?;

    let counts = RunCounts {
        input_records: stats.input_records,
        input_users: stats.input_users,
        surviving_users: stats.surviving_users,
        selected_users: selections.len(),
        workloads: workloads.len(),
        mapped_queries: workloads.iter().map(Workload::len).sum(),
        fallback_queries: workloads.iter().map(Workload::fallback_count).sum(),
    };
    let run = RunReport {
        tool: "redbench",
        version: env!("CARGO_PKG_VERSION"),
        config,
        counts,
        metrics: RunMetrics {
            select_share: stats.select_share(),
            overall_fallback_fraction: summary.overall_fallback_fraction,
            table_coverage_shortfall: shortfall,
        },
        warnings: &warnings,
    };
    write_file(&config.out.join("run.json"), &to_pretty_json(&run)?)?;

    Ok(GenerateOutcome {
        workloads: workloads.len(),
        selected_users: selections.len(),
        warnings,
        summary,
    })
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn load_pool(
    root: &Path,
    template_rule: &str,
    quarantine: bool,
    warnings: &mut Vec<String>,
) -> Result<PoolIndex> {
    let pool = pool_index::scan_pool(root, template_rule)?;
    let validation = pool.validate();
    let pool = if validation.is_ok() {
        pool
    } else if quarantine {
        let (clean, dropped) = pool.quarantined()?;
        warnings.push(format!(
            "quarantined {} template(s) with inconsistent join counts: {}",
            dropped.len(),
            dropped.join(", ")
        ));
        clean
    } else {
        return Err(Error::PoolInvalid {
            count: validation.violations.len(),
            templates: validation
                .violations
                .iter()
                .map(|v| v.template_id.clone())
                .collect(),
        });
    };
    if pool.is_degenerate() {
        warnings.push(format!(
            "pool join range is degenerate (all templates have {} joins)",
            pool.pool_min_joins()
        ));
    }
    Ok(pool)
}

/// Validation report written by `cmd_index`.
#[derive(Debug, Serialize)]
struct IndexReport {
    templates: usize,
    instances: usize,
    pool_min_joins: u32,
    pool_max_joins: u32,
    degenerate: bool,
    violations: Vec<IndexViolation>,
    quarantined: Vec<String>,
    instance_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct IndexViolation {
    template_id: String,
    join_counts: Vec<u32>,
}

/// Scan and validate a pool; write `pool_index.csv` and `validation.json`.
pub fn cmd_index(
    pool_root: &Path,
    template_rule: &str,
    quarantine: bool,
    out_dir: &Path,
) -> Result<PoolIndex> {
    let pool = pool_index::scan_pool(pool_root, template_rule)?;
    let validation = pool.validate();
    let (pool, dropped) = if !validation.is_ok() && quarantine {
        pool.quarantined()?
    } else {
        (pool, Vec::new())
    };
    if !validation.is_ok() && !quarantine {
        // still write the report so the violations can be inspected
        create_dir(out_dir)?;
        let report = IndexReport {
            templates: pool.template_count(),
            instances: pool.instance_count(),
            pool_min_joins: pool.pool_min_joins(),
            pool_max_joins: pool.pool_max_joins(),
            degenerate: pool.is_degenerate(),
            violations: validation
                .violations
                .iter()
                .map(|v| IndexViolation {
                    template_id: v.template_id.clone(),
                    join_counts: v.join_counts.clone(),
                })
                .collect(),
            quarantined: Vec::new(),
            instance_counts: validation.instance_counts.clone(),
        };
        write_file(&out_dir.join("validation.json"), &to_pretty_json(&report)?)?;
        return Err(Error::PoolInvalid {
            count: validation.violations.len(),
            templates: validation
                .violations
                .iter()
                .map(|v| v.template_id.clone())
                .collect(),
        });
    }

    create_dir(out_dir)?;
    let mut buf = Vec::new();
    pool.write_index_csv(&mut buf)?;
    write_file(&out_dir.join("pool_index.csv"), &buf)?;
    let final_validation = pool.validate();
    let report = IndexReport {
        templates: pool.template_count(),
        instances: pool.instance_count(),
        pool_min_joins: pool.pool_min_joins(),
        pool_max_joins: pool.pool_max_joins(),
        degenerate: pool.is_degenerate(),
        violations: validation
            .violations
            .iter()
            .map(|v| IndexViolation {
                template_id: v.template_id.clone(),
                join_counts: v.join_counts.clone(),
            })
            .collect(),
        quarantined: dropped,
        instance_counts: final_validation.instance_counts,
    };
    write_file(&out_dir.join("validation.json"), &to_pretty_json(&report)?)?;
    Ok(pool)
}

/// Run the prefilter; write `filtered_trace.csv` and `prefilter_stats.csv`.
pub fn cmd_prefilter(
    trace: &Path,
    busiest_week_k: usize,
    out_dir: &Path,
) -> Result<PrefilterStats> {
    let traces = trace_model::parse_trace(trace)?;
    let (survivors, stats) = prefilter_traces(traces, busiest_week_k);
    create_dir(out_dir)?;

    let path = out_dir.join("filtered_trace.csv");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut writer = BufWriter::new(file);
    trace_model::write_trace(
        &mut writer,
        survivors.iter().flat_map(|t| t.records().iter()),
    )?;
    writer.flush().map_err(|e| Error::io(&path, e))?;

    let mut buf = Vec::new();
    stats.write_csv(&mut buf)?;
    write_file(&out_dir.join("prefilter_stats.csv"), &buf)?;
    Ok(stats)
}

/// Generate a synthetic trace file.
pub fn cmd_synth(spec: &SynthSpec, out_file: &Path) -> Result<usize> {
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    let records = synth_trace::synthesize(spec)?;
    trace_model::write_trace_file(out_file, &records)?;
    Ok(records.len())
}

/// Recompute fidelity reports from a trace, an index export, and the
/// workload manifests written by `generate`. Produces the same
/// `fidelity.csv`, `series_<user>.csv` files, and `summary.json`
/// byte-for-byte.
pub fn cmd_report(
    trace: &Path,
    index_csv: &Path,
    workloads_dir: &Path,
    busiest_week_k: usize,
    out_dir: &Path,
) -> Result<Summary> {
    let traces = trace_model::parse_trace(trace)?;
    let (survivors, _stats) = prefilter_traces(traces, busiest_week_k);
    if survivors.is_empty() {
        return Err(Error::NoUsersSurvive);
    }
    let pool = PoolIndex::read_index_csv_file(index_csv)?;

    // map sanitized file stems back to surviving users
    let mut by_stem: BTreeMap<String, &UserTrace> = BTreeMap::new();
    for t in &survivors {
        if by_stem.insert(sanitize_user_id(t.user_id()), t).is_some() {
            return Err(Error::Integrity(format!(
                "two user ids collide after sanitization: `{}`",
                sanitize_user_id(t.user_id())
            )));
        }
    }

    let mut manifest_files: Vec<PathBuf> = fs::read_dir(workloads_dir)
        .map_err(|e| Error::io(workloads_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    manifest_files.sort();
    if manifest_files.is_empty() {
        return Err(Error::Integrity(format!(
            "no workload manifests under {}",
            workloads_dir.display()
        )));
    }

    let mut reports = Vec::new();
    for path in manifest_files {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let trace = by_stem.get(&stem).ok_or_else(|| {
            Error::Integrity(format!("manifest `{stem}` matches no surviving user"))
        })?;
        let workload = rebuild_workload(trace, &path)?;
        reports.push(fidelity::build_report(trace, &workload, &pool)?);
    }

    create_dir(out_dir)?;
    let mut buf = Vec::new();
    fidelity::write_fidelity_csv(&mut buf, &reports)?;
    write_file(&out_dir.join("fidelity.csv"), &buf)?;
    for report in &reports {
        let name = sanitize_user_id(&report.user_id);
        let mut buf = Vec::new();
        fidelity::write_series_csv(&mut buf, report)?;
        write_file(&out_dir.join(format!("series_{name}.csv")), &buf)?;
        let mut svg = Vec::new();
        fidelity::write_series_svg(&mut svg, report)?;
        write_file(&out_dir.join(format!("series_{name}.svg")), &svg)?;
    }

    let summary = fidelity::aggregate_reports(&reports);
    let summary_file = SummaryFile {
        fidelity: summary.clone(),
        table_coverage_shortfall: fidelity::coverage_shortfall(
            survivors.iter(),
            pool.table_count(),
        ),
    };
    write_file(
        &out_dir.join("summary.json"),
        &to_pretty_json(&summary_file)?,
    )?;
    Ok(summary)
}

/// Reassemble a workload from its manifest plus the source trace. The
/// manifest carries no stream seed; the rebuilt workload is only good for
/// reporting, which never draws randomness.
fn rebuild_workload(trace: &UserTrace, manifest: &Path) -> Result<Workload> {
    let rows = workload_mapper::read_manifest(manifest)?;
    if rows.len() != trace.len() {
        return Err(Error::Integrity(format!(
            "manifest {} has {} rows but the trace has {} records",
            manifest.display(),
            rows.len(),
            trace.len()
        )));
    }
    let mut queries = Vec::with_capacity(rows.len());
    for (row, record) in rows.into_iter().zip(trace.records()) {
        if row.source_query_id != record.query_id {
            return Err(Error::Integrity(format!(
                "manifest {} row {} names query `{}` but the trace has `{}`",
                manifest.display(),
                row.seq,
                row.source_query_id,
                record.query_id
            )));
        }
        queries.push(MappedQuery {
            seq: row.seq,
            source_query_id: row.source_query_id,
            source_hash: trace_model::hash_of(record),
            instance_id: row.instance_id,
            template_id: row.template_id,
            map_case: row.map_case,
        });
    }
    let rate = trace_model::repetition_rate(&trace.hashes());
    Ok(Workload {
        user_id: trace.user_id().to_string(),
        bucket: user_sampler::bucket_of(rate)?,
        queries,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_keeps_safe_ids() {
        assert_eq!(sanitize_user_id("u001"), "u001");
        assert_eq!(sanitize_user_id("b3.u-1_x"), "b3.u-1_x");
        assert_eq!(sanitize_user_id("a/b:c"), "a_b_c");
    }
}

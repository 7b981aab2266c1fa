//! Support-benchmark query pool: ingestion, template grouping, per-
//! instance scanset and join-count derivation, and pool validation.
//!
//! A pool is a directory of `.sql` files, one statement per file.
//! Template identity comes from the file name (by default the leading
//! digits of the stem, so `1a.sql` and `1b.sql` are instances of template
//! `1`); the rule is a configurable regex for pools with other naming
//! schemes. Join counts are derived as (table references − 1), which
//! mirrors the trace-side identity "joins = scanset size − 1" while
//! tolerating self-joins through aliases; set-operator branches sum their
//! references.

mod sql;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};
use crate::trace_model::Scanset;

/// Default template rule: leading digits of the file stem.
pub const DEFAULT_TEMPLATE_RULE: &str = r"^(\d+)";

/// One SQL file of the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    /// Relative file path under the pool root (forward slashes).
    pub instance_id: String,
    pub template_id: String,
    pub sql_text: String,
    /// Distinct base tables referenced, lowercased.
    pub scanset: Scanset,
    /// Table references minus one, floored at zero.
    pub join_count: u32,
}

/// A parameterized query family: all instances sharing one template id.
#[derive(Debug, Clone)]
pub struct QueryTemplate {
    pub template_id: String,
    /// Nonempty, sorted by instance id.
    pub instances: Vec<QueryInstance>,
    /// Join count shared by the instances (validated by [`PoolIndex::validate`]).
    pub join_count: u32,
    /// Join count linearly rescaled to `[0, 1]` over the pool's range;
    /// 0.5 everywhere when the pool is degenerate.
    pub normalized_join: f64,
}

impl QueryTemplate {
    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn instance(&self, instance_id: &str) -> Option<&QueryInstance> {
        self.instances.iter().find(|i| i.instance_id == instance_id)
    }
}

/// Catalog of a support benchmark's query pool.
#[derive(Debug, Clone)]
pub struct PoolIndex {
    templates: BTreeMap<String, QueryTemplate>,
    pool_min_joins: u32,
    pool_max_joins: u32,
    degenerate: bool,
}

/// A template whose instances disagree on the join count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateViolation {
    pub template_id: String,
    /// Distinct join counts observed, ascending.
    pub join_counts: Vec<u32>,
}

/// Validation report: violations, degeneracy, per-template sizes.
#[derive(Debug, Clone)]
pub struct PoolValidation {
    pub violations: Vec<TemplateViolation>,
    pub degenerate: bool,
    pub instance_counts: BTreeMap<String, usize>,
}

impl PoolValidation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl PoolIndex {
    /// Group analyzed instances into templates and compute the pool-wide
    /// join range and normalized join values.
    pub fn from_instances(instances: Vec<QueryInstance>) -> Result<PoolIndex> {
        if instances.is_empty() {
            return Err(Error::Domain(
                "cannot build an index from zero instances".into(),
            ));
        }
        let mut groups: BTreeMap<String, Vec<QueryInstance>> = BTreeMap::new();
        for inst in instances {
            groups
                .entry(inst.template_id.clone())
                .or_default()
                .push(inst);
        }
        let mut min = u32::MAX;
        let mut max = 0u32;
        let mut templates = BTreeMap::new();
        for (template_id, mut insts) in groups {
            insts.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
            // first instance's count stands for the template; validate()
            // reports any disagreement
            let join_count = insts[0].join_count;
            min = min.min(join_count);
            max = max.max(join_count);
            templates.insert(
                template_id.clone(),
                QueryTemplate {
                    template_id,
                    instances: insts,
                    join_count,
                    normalized_join: 0.0,
                },
            );
        }
        let degenerate = min == max;
        for t in templates.values_mut() {
            t.normalized_join = if degenerate {
                0.5
            } else {
                f64::from(t.join_count - min) / f64::from(max - min)
            };
        }
        if degenerate {
            log::warn!(
                "pool join range is degenerate (all templates have {min} joins); \
                 normalized joins fixed at 0.5"
            );
        }
        Ok(PoolIndex {
            templates,
            pool_min_joins: min,
            pool_max_joins: max,
            degenerate,
        })
    }

    pub fn templates(&self) -> impl Iterator<Item = &QueryTemplate> {
        self.templates.values()
    }

    pub fn template(&self, template_id: &str) -> Option<&QueryTemplate> {
        self.templates.get(template_id)
    }

    pub fn template_count(&self) -> usize {
        self.templates.len()
    }

    pub fn instance_count(&self) -> usize {
        self.templates
            .values()
            .map(QueryTemplate::instance_count)
            .sum()
    }

    pub fn pool_min_joins(&self) -> u32 {
        self.pool_min_joins
    }

    pub fn pool_max_joins(&self) -> u32 {
        self.pool_max_joins
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Distinct tables across all instance scansets.
    pub fn table_count(&self) -> usize {
        let mut tables: BTreeSet<&str> = BTreeSet::new();
        for t in self.templates.values() {
            for inst in &t.instances {
                tables.extend(inst.scanset.iter());
            }
        }
        tables.len()
    }

    /// Check the pool requirements: instances of one template must agree
    /// on the join count; a degenerate join range is flagged but legal.
    pub fn validate(&self) -> PoolValidation {
        let mut violations = Vec::new();
        let mut instance_counts = BTreeMap::new();
        for (id, t) in &self.templates {
            instance_counts.insert(id.clone(), t.instance_count());
            let counts: BTreeSet<u32> = t.instances.iter().map(|i| i.join_count).collect();
            if counts.len() > 1 {
                violations.push(TemplateViolation {
                    template_id: id.clone(),
                    join_counts: counts.into_iter().collect(),
                });
            }
        }
        PoolValidation {
            violations,
            degenerate: self.degenerate,
            instance_counts,
        }
    }

    /// The pool minus every template with inconsistent join counts.
    /// Returns the cleaned pool (range and norms recomputed) and the ids
    /// of the dropped templates.
    pub fn quarantined(&self) -> Result<(PoolIndex, Vec<String>)> {
        let offending: BTreeSet<String> = self
            .validate()
            .violations
            .into_iter()
            .map(|v| v.template_id)
            .collect();
        let instances: Vec<QueryInstance> = self
            .templates
            .values()
            .filter(|t| !offending.contains(&t.template_id))
            .flat_map(|t| t.instances.iter().cloned())
            .collect();
        if instances.is_empty() {
            return Err(Error::Domain(
                "quarantine would drop every template in the pool".into(),
            ));
        }
        Ok((
            PoolIndex::from_instances(instances)?,
            offending.into_iter().collect(),
        ))
    }

    /// Index export: `template_id,instance_id,join_count,scanset`.
    pub fn write_index_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["template_id", "instance_id", "join_count", "scanset"])?;
        for t in self.templates.values() {
            for inst in &t.instances {
                wtr.write_record([
                    t.template_id.as_str(),
                    inst.instance_id.as_str(),
                    &inst.join_count.to_string(),
                    &inst.scanset.join_ids(),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<index writer>", e))?;
        Ok(())
    }

    /// Rebuild an index from its CSV export. Instances loaded this way
    /// carry no SQL text, which is enough for fidelity reporting but not
    /// for emitting playback SQL.
    pub fn read_index_csv<R: io::Read>(reader: R) -> Result<PoolIndex> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let mut instances = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let join_count: u32 = row
                .get(2)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Domain(format!("bad join_count in index row {row:?}")))?;
            instances.push(QueryInstance {
                template_id: row.get(0).unwrap_or("").to_string(),
                instance_id: row.get(1).unwrap_or("").to_string(),
                sql_text: String::new(),
                scanset: Scanset::parse_ids(row.get(3).unwrap_or("")),
                join_count,
            });
        }
        PoolIndex::from_instances(instances)
    }

    pub fn read_index_csv_file(path: &Path) -> Result<PoolIndex> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        PoolIndex::read_index_csv(io::BufReader::new(file))
    }
}

/// Analyze one SQL statement: base-table references from FROM/JOIN
/// clauses at all nesting levels, including comma-join lists.
///
/// With `cte_exclusion`, names defined by a WITH clause are not base
/// tables: they are excluded from the scanset and their references do not
/// count toward the join count (the tables inside the CTE body already
/// did). With it off, WITH-defined names are treated like any table.
///
/// Returns the scanset (distinct names, lowercased) and
/// `max(0, references − 1)` where every occurrence counts separately,
/// aliased self-joins included.
pub fn analyze_sql(sql_text: &str, cte_exclusion: bool) -> Result<(Scanset, u32)> {
    let sql::SqlRefs { refs, cte_names } = sql::extract_refs(sql_text)?;
    let counted: Vec<&String> = if cte_exclusion {
        refs.iter()
            .filter(|r| !cte_names.contains(r.as_str()))
            .collect()
    } else {
        refs.iter().collect()
    };
    let join_count = counted.len().saturating_sub(1) as u32;
    let scanset = Scanset::new(counted.iter().map(|s| s.as_str()));
    Ok((scanset, join_count))
}

/// Ingest a pool directory: every `.sql` file (recursively, in sorted
/// order) becomes an instance; the template id is the first capture of
/// `template_rule` applied to the file stem.
pub fn scan_pool(root: &Path, template_rule: &str) -> Result<PoolIndex> {
    let rule = Regex::new(template_rule)
        .map_err(|e| Error::Domain(format!("invalid template rule `{template_rule}`: {e}")))?;

    let mut files: Vec<std::path::PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::PoolFile {
            path: root.to_path_buf(),
            detail: e.to_string(),
        })?;
        if entry.file_type().is_file()
            && entry
                .path()
                .extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("sql"))
        {
            files.push(entry.path().to_path_buf());
        }
    }
    if files.is_empty() {
        return Err(Error::EmptyPool {
            root: root.to_path_buf(),
        });
    }
    // sort by the relative id, not the OS path, for platform independence
    let mut instances = Vec::with_capacity(files.len());
    for path in files {
        let rel = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let template_id = match rule.captures(&stem) {
            Some(caps) => caps
                .get(1)
                .or_else(|| caps.get(0))
                .map(|m| m.as_str().to_string())
                .filter(|s| !s.is_empty()),
            None => None,
        }
        .ok_or_else(|| Error::TemplateRule {
            file: stem.clone(),
            pattern: template_rule.to_string(),
        })?;
        let sql_text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (scanset, join_count) = analyze_sql(&sql_text, true).map_err(|e| Error::PoolFile {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        instances.push(QueryInstance {
            instance_id: rel,
            template_id,
            sql_text,
            scanset,
            join_count,
        });
    }
    instances.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    PoolIndex::from_instances(instances)
}

//! The core mapping algorithm: replay a user's trace in arrival order,
//! assigning each query a support-benchmark instance.
//!
//! Per query, in order:
//!
//! - **(a)** a hash seen before reuses its bound instance, so repeated
//!   queries stay repeated exactly;
//! - **(b)** a scanset seen before stays on its bound template, drawing
//!   an unused instance;
//! - **(c)** a new scanset binds to an unmapped template whose normalized
//!   join count is closest to the query's (most instances wins, then the
//!   lexicographically smallest id);
//! - **fallback** when templates or instances run out: prefer an unused
//!   instance of an already-mapped closest template, otherwise reuse any
//!   instance of the closest templates.
//!
//! Every decision draws from one splitmix64 stream seeded by the global
//! seed mixed with the user id, so a workload is a pure function of
//! (trace, pool, seed).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pool_index::{PoolIndex, QueryTemplate};
use crate::rng::{workload_seed, SplitMix64};
use crate::trace_model::{hash_of, repetition_rate, QueryHash, QueryRecord, Scanset, UserTrace};
use crate::user_sampler::bucket_of;

/// Default global seed; documented so runs are reproducible by default.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapCase {
    HashHit,
    ScansetHit,
    NewTemplate,
    FallbackUnused,
    FallbackReuse,
}

impl MapCase {
    pub fn as_str(self) -> &'static str {
        match self {
            MapCase::HashHit => "hash_hit",
            MapCase::ScansetHit => "scanset_hit",
            MapCase::NewTemplate => "new_template",
            MapCase::FallbackUnused => "fallback_unused",
            MapCase::FallbackReuse => "fallback_reuse",
        }
    }

    pub fn is_fallback(self) -> bool {
        matches!(self, MapCase::FallbackUnused | MapCase::FallbackReuse)
    }
}

impl fmt::Display for MapCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<MapCase> {
        match s {
            "hash_hit" => Ok(MapCase::HashHit),
            "scanset_hit" => Ok(MapCase::ScansetHit),
            "new_template" => Ok(MapCase::NewTemplate),
            "fallback_unused" => Ok(MapCase::FallbackUnused),
            "fallback_reuse" => Ok(MapCase::FallbackReuse),
            other => Err(Error::Domain(format!("unknown map case `{other}`"))),
        }
    }
}

/// One mapped query.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedQuery {
    pub seq: usize,
    pub source_query_id: String,
    pub source_hash: QueryHash,
    pub instance_id: String,
    pub template_id: String,
    pub map_case: MapCase,
}

/// An ordered, mapped user workload. Queries play back-to-back in the
/// source arrival order; the length always equals the input trace length.
#[derive(Debug, Clone)]
pub struct Workload {
    pub user_id: String,
    pub bucket: usize,
    pub queries: Vec<MappedQuery>,
    /// The derived per-user stream seed actually used.
    pub seed: u64,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn fallback_count(&self) -> usize {
        self.queries
            .iter()
            .filter(|q| q.map_case.is_fallback())
            .count()
    }
}

/// Linear rescale of `j` from `[jmin, jmax]` onto `[0, 1]`.
pub fn normalized_joins(j: u32, jmin: u32, jmax: u32) -> Result<f64> {
    if jmin >= jmax {
        return Err(Error::Domain(format!(
            "degenerate join range [{jmin}, {jmax}]"
        )));
    }
    if j < jmin || j > jmax {
        return Err(Error::Domain(format!(
            "join count {j} outside [{jmin}, {jmax}]"
        )));
    }
    Ok(f64::from(j - jmin) / f64::from(jmax - jmin))
}

/// Like [`normalized_joins`], but a degenerate range maps everything to
/// the midpoint, the same convention a degenerate pool uses.
pub fn norm_or_midpoint(j: u32, jmin: u32, jmax: u32) -> f64 {
    if jmin == jmax {
        0.5
    } else {
        normalized_joins(j, jmin, jmax).expect("join count within the user range")
    }
}

/// All templates minimizing the distance between their normalized join
/// count and `user_norm`. Several join-count levels can tie.
pub fn closest_templates(user_norm: f64, pool: &PoolIndex) -> BTreeSet<String> {
    let mut best = f64::INFINITY;
    let mut set = BTreeSet::new();
    for t in pool.templates() {
        let d = (t.normalized_join - user_norm).abs();
        if d < best {
            best = d;
            set.clear();
            set.insert(t.template_id.clone());
        } else if d == best {
            set.insert(t.template_id.clone());
        }
    }
    set
}

/// Per-workload mapping bookkeeping.
#[derive(Debug)]
pub struct MappingState {
    hash_to_instance: HashMap<QueryHash, (String, String)>,
    scanset_to_template: HashMap<Scanset, String>,
    used_instances: BTreeMap<String, BTreeSet<String>>,
    mapped_templates: BTreeSet<String>,
    rng: SplitMix64,
    user_join_min: u32,
    user_join_max: u32,
    next_seq: usize,
}

impl MappingState {
    /// State seeded with an already-derived stream seed.
    pub fn new(user_join_min: u32, user_join_max: u32, stream_seed: u64) -> MappingState {
        MappingState {
            hash_to_instance: HashMap::new(),
            scanset_to_template: HashMap::new(),
            used_instances: BTreeMap::new(),
            mapped_templates: BTreeSet::new(),
            rng: SplitMix64::new(stream_seed),
            user_join_min,
            user_join_max,
            next_seq: 0,
        }
    }

    /// State for one user under a global seed.
    pub fn for_user(global_seed: u64, user_id: &str, jmin: u32, jmax: u32) -> MappingState {
        MappingState::new(jmin, jmax, workload_seed(global_seed, user_id))
    }

    fn user_norm(&self, joins: u32) -> f64 {
        norm_or_midpoint(joins, self.user_join_min, self.user_join_max)
    }

    /// Unused instances of a template, sorted by instance id.
    fn unused_of<'p>(&self, template: &'p QueryTemplate) -> Vec<&'p str> {
        let used = self.used_instances.get(&template.template_id);
        template
            .instances
            .iter()
            .map(|i| i.instance_id.as_str())
            .filter(|id| used.is_none_or(|u| !u.contains(*id)))
            .collect()
    }

    fn mark_used(&mut self, template_id: &str, instance_id: &str) {
        self.used_instances
            .entry(template_id.to_string())
            .or_default()
            .insert(instance_id.to_string());
    }
}

/// Candidates for the fallback paths, as `(template_id, instance_id)`
/// pairs sorted by id, the convention every random pick relies on.
fn fallback_pick(
    state: &mut MappingState,
    record: &QueryRecord,
    pool: &PoolIndex,
) -> (String, String, MapCase) {
    let norm = state.user_norm(record.num_joins);
    let closest = closest_templates(norm, pool);

    // mapped closest templates that still have unused instances
    let mut unused_pool: Vec<(String, String)> = Vec::new();
    for template_id in &closest {
        if !state.mapped_templates.contains(template_id) {
            continue;
        }
        let template = pool.template(template_id).expect("closest template exists");
        for inst in state.unused_of(template) {
            unused_pool.push((template_id.clone(), inst.to_string()));
        }
    }
    if !unused_pool.is_empty() {
        let idx = state.rng.pick_index(unused_pool.len());
        let (t, i) = unused_pool.swap_remove(idx);
        return (t, i, MapCase::FallbackUnused);
    }

    // otherwise reuse any instance of the closest templates
    let mut all: Vec<(String, String)> = Vec::new();
    for template_id in &closest {
        let template = pool.template(template_id).expect("closest template exists");
        for inst in &template.instances {
            all.push((template_id.clone(), inst.instance_id.clone()));
        }
    }
    let idx = state.rng.pick_index(all.len());
    let (t, i) = all.swap_remove(idx);
    (t, i, MapCase::FallbackReuse)
}

/// Map one record. Total for any nonempty pool: the fallback always
/// produces an answer. The record's hash is bound to the chosen instance
/// in every case, so later repetitions of the hash stay consistent.
pub fn map_query(
    state: &mut MappingState,
    record: &QueryRecord,
    pool: &PoolIndex,
) -> Result<MappedQuery> {
    if pool.is_empty() {
        return Err(Error::Domain("cannot map onto an empty pool".into()));
    }
    let hash = hash_of(record);
    let seq = state.next_seq;
    state.next_seq += 1;

    // (a) repeated hash: reuse the same instance
    if let Some((template_id, instance_id)) = state.hash_to_instance.get(&hash) {
        return Ok(MappedQuery {
            seq,
            source_query_id: record.query_id.clone(),
            source_hash: hash.clone(),
            instance_id: instance_id.clone(),
            template_id: template_id.clone(),
            map_case: MapCase::HashHit,
        });
    }

    let (template_id, instance_id, map_case) =
        if let Some(template_id) = state.scanset_to_template.get(record.scanset()).cloned() {
            // (b) known scanset: draw an unused instance of its template
            let template = pool.template(&template_id).ok_or_else(|| {
                Error::Integrity(format!("bound template `{template_id}` missing from pool"))
            })?;
            let unused = state.unused_of(template);
            if unused.is_empty() {
                fallback_pick(state, record, pool)
            } else {
                let idx = state.rng.pick_index(unused.len());
                (template_id, unused[idx].to_string(), MapCase::ScansetHit)
            }
        } else {
            // (c) new scanset: bind an unmapped closest template
            let norm = state.user_norm(record.num_joins);
            let closest = closest_templates(norm, pool);
            let mut candidates: Vec<&QueryTemplate> = closest
                .iter()
                .filter(|id| !state.mapped_templates.contains(*id))
                .map(|id| pool.template(id).expect("closest template exists"))
                .collect();
            if candidates.is_empty() {
                fallback_pick(state, record, pool)
            } else {
                // most instances wins; iteration is in id order, so a
                // strict comparison keeps the smallest id on ties
                candidates.sort_by(|a, b| a.template_id.cmp(&b.template_id));
                let mut best = candidates[0];
                for c in &candidates[1..] {
                    if c.instance_count() > best.instance_count() {
                        best = c;
                    }
                }
                state
                    .scanset_to_template
                    .insert(record.scanset().clone(), best.template_id.clone());
                state.mapped_templates.insert(best.template_id.clone());
                let unused = state.unused_of(best);
                if unused.is_empty() {
                    // possible when an earlier fallback reuse drained an
                    // unmapped template
                    fallback_pick(state, record, pool)
                } else {
                    let idx = state.rng.pick_index(unused.len());
                    (
                        best.template_id.clone(),
                        unused[idx].to_string(),
                        MapCase::NewTemplate,
                    )
                }
            }
        };

    state.mark_used(&template_id, &instance_id);
    state
        .hash_to_instance
        .insert(hash.clone(), (template_id.clone(), instance_id.clone()));
    Ok(MappedQuery {
        seq,
        source_query_id: record.query_id.clone(),
        source_hash: hash,
        instance_id,
        template_id,
        map_case,
    })
}

/// Map a whole trace in arrival order. Deterministic given
/// (trace, pool, global_seed).
pub fn generate_workload(
    trace: &UserTrace,
    pool: &PoolIndex,
    global_seed: u64,
) -> Result<Workload> {
    if trace.is_empty() {
        return Err(Error::Integrity(format!(
            "cannot generate a workload from an empty trace for user `{}`",
            trace.user_id()
        )));
    }
    if pool.is_empty() {
        return Err(Error::Domain("cannot map onto an empty pool".into()));
    }
    let (jmin, jmax) = crate::prefilter::join_range(trace);
    let mut state = MappingState::for_user(global_seed, trace.user_id(), jmin, jmax);
    let seed = workload_seed(global_seed, trace.user_id());

    let rate = repetition_rate(&trace.hashes());
    let bucket = bucket_of(rate)?;

    let queries: Vec<MappedQuery> = trace
        .records()
        .iter()
        .map(|r| map_query(&mut state, r, pool))
        .collect::<Result<_>>()?;
    Ok(Workload {
        user_id: trace.user_id().to_string(),
        bucket,
        queries,
        seed,
    })
}

/// One manifest row, as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub seq: usize,
    pub source_query_id: String,
    pub map_case: MapCase,
    pub template_id: String,
    pub instance_id: String,
}

/// Workload manifest: `seq,source_query_id,map_case,template_id,instance_id`.
pub fn write_manifest<W: io::Write>(writer: W, workload: &Workload) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "seq",
        "source_query_id",
        "map_case",
        "template_id",
        "instance_id",
    ])?;
    for q in &workload.queries {
        wtr.write_record([
            &q.seq.to_string(),
            &q.source_query_id,
            q.map_case.as_str(),
            &q.template_id,
            &q.instance_id,
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<manifest writer>", e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(io::BufReader::new(file));
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row?;
        rows.push(ManifestRow {
            seq: row
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Domain(format!("bad seq in manifest row {row:?}")))?,
            source_query_id: row.get(1).unwrap_or("").to_string(),
            map_case: row.get(2).unwrap_or("").parse()?,
            template_id: row.get(3).unwrap_or("").to_string(),
            instance_id: row.get(4).unwrap_or("").to_string(),
        });
    }
    Ok(rows)
}

/// Playback file: queries in order, back-to-back, separated by
/// `-- seq:N` comments. No timestamps.
pub fn write_playback_sql<W: io::Write>(
    mut writer: W,
    workload: &Workload,
    pool: &PoolIndex,
) -> Result<()> {
    let io_err = |e| Error::io("<playback writer>", e);
    for q in &workload.queries {
        let instance = pool
            .template(&q.template_id)
            .and_then(|t| t.instance(&q.instance_id))
            .ok_or_else(|| {
                Error::Integrity(format!(
                    "instance `{}` of template `{}` missing from pool",
                    q.instance_id, q.template_id
                ))
            })?;
        writeln!(writer, "-- seq:{}", q.seq).map_err(io_err)?;
        let text = instance.sql_text.trim_end();
        writeln!(writer, "{text}").map_err(io_err)?;
    }
    Ok(())
}

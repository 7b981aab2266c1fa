//! Synthetic trace generator with an exactly controllable repetition
//! rate, for desk-scale end-to-end checks.
//!
//! Each user gets `round(rate * n)` repeat positions, placed after the
//! first occurrence they re-emit, so the measured repetition rate of the
//! conforming rows is the target rate exactly. Every conforming record
//! satisfies `num_joins = |scanset| - 1`, and all timestamps fall inside
//! Monday-08:00 → Friday-17:00 windows. Optional noise rows (cached,
//! non-select) are interleaved for the prefilter to remove.

use std::io;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::trace_model::{self, QueryRecord, QueryType, Scanset};

/// Trace shape parameters.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub users: usize,
    pub queries_per_user: usize,
    /// Target repetition rate; `rate * queries_per_user` must be integral.
    pub target_rate: f64,
    /// Inclusive join-count range for conforming queries.
    pub join_range: (u32, u32),
    /// Number of distinct table ids to draw scansets from.
    pub table_universe: usize,
    /// Extra cached-SELECT rows per user, as a fraction of `queries_per_user`.
    pub cached_fraction: f64,
    /// Extra non-SELECT rows per user, as a fraction of `queries_per_user`.
    pub non_select_fraction: f64,
    /// Spread each user's rows over this many consecutive weeks.
    pub week_span: usize,
    pub seed: u64,
    /// Prefix for generated user ids; lets several syntheses compose into
    /// one trace without id collisions.
    pub user_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 3,
            queries_per_user: 40,
            target_rate: 0.5,
            join_range: (1, 4),
            table_universe: 40,
            cached_fraction: 0.0,
            non_select_fraction: 0.0,
            week_span: 1,
            seed: 0,
            user_prefix: "u".to_string(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.queries_per_user;
        if self.users == 0 || n == 0 {
            return Err(Error::SynthSpec(
                "users and queries_per_user must be positive".into(),
            ));
        }
        let max_rate = (n - 1) as f64 / n as f64;
        if !(0.0..=1.0).contains(&self.target_rate) || self.target_rate > max_rate + 1e-9 {
            return Err(Error::SynthSpec(format!(
                "target rate {} outside [0, {max_rate:.4}] for {n} queries",
                self.target_rate
            )));
        }
        let repeats = self.target_rate * n as f64;
        if (repeats - repeats.round()).abs() > 1e-6 {
            return Err(Error::SynthSpec(format!(
                "rate * queries_per_user = {repeats} is not integral"
            )));
        }
        let (jmin, jmax) = self.join_range;
        if jmin < 1 || jmin > jmax {
            return Err(Error::SynthSpec(format!(
                "join range [{jmin}, {jmax}] must satisfy 1 <= min <= max"
            )));
        }
        if self.table_universe < jmax as usize + 1 {
            return Err(Error::SynthSpec(format!(
                "table universe {} too small for scansets of {} tables",
                self.table_universe,
                jmax + 1
            )));
        }
        for (name, f) in [
            ("cached_fraction", self.cached_fraction),
            ("non_select_fraction", self.non_select_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::SynthSpec(format!("{name} {f} outside [0, 1]")));
            }
        }
        if self.week_span == 0 {
            return Err(Error::SynthSpec("week_span must be positive".into()));
        }
        Ok(())
    }
}

/// Payload shared by a distinct query and all its repeats. Repeats
/// re-emit the full original payload so the hash matches by construction.
#[derive(Debug, Clone)]
struct Payload {
    query_type: QueryType,
    was_cached: bool,
    num_joins: u32,
    num_scans: u32,
    scanset: Scanset,
    fingerprint: String,
}

// 2024-01-01 is a Monday; windows start at 08:00.
fn window_start(week: usize) -> DateTime<Utc> {
    let base = trace_model::parse_timestamp("2024-01-01T08:00:00Z").expect("valid base");
    base + Duration::days(7 * week as i64)
}

/// Generate records for the whole spec. Users are produced sequentially
/// from one seeded stream, so the output is byte-stable.
pub fn synthesize(spec: &SynthSpec) -> Result<Vec<QueryRecord>> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut records = Vec::new();
    let mut fingerprint_counter = 0u64;

    for user_index in 0..spec.users {
        let user_id = format!("{}{:03}", spec.user_prefix, user_index + 1);
        let user_rows = synthesize_user(spec, &user_id, &mut rng, &mut fingerprint_counter)?;
        records.extend(user_rows);
    }
    Ok(records)
}

fn fresh_fingerprint(counter: &mut u64) -> String {
    *counter += 1;
    format!("fp{:06}", *counter)
}

fn sample_scanset(rng: &mut SplitMix64, universe: usize, size: usize) -> Scanset {
    let mut tables = std::collections::BTreeSet::new();
    while tables.len() < size {
        let idx = rng.pick_index(universe);
        tables.insert(format!("t{idx:04}"));
    }
    Scanset::new(tables)
}

fn synthesize_user(
    spec: &SynthSpec,
    user_id: &str,
    rng: &mut SplitMix64,
    fingerprint_counter: &mut u64,
) -> Result<Vec<QueryRecord>> {
    let n = spec.queries_per_user;
    let (jmin, jmax) = spec.join_range;
    let repeats = (spec.target_rate * n as f64).round() as usize;
    let distinct = n - repeats;

    // distinct payloads; the first two pin the user's join range so the
    // measured min/max equal the spec range
    let mut payloads: Vec<Payload> = Vec::with_capacity(distinct);
    let mut seen_scansets = std::collections::HashSet::new();
    for k in 0..distinct {
        let joins = if k == 0 {
            jmin
        } else if k == 1 && jmax > jmin {
            jmax
        } else {
            jmin + rng.pick_range(0, u64::from(jmax - jmin)) as u32
        };
        let mut scanset = sample_scanset(rng, spec.table_universe, joins as usize + 1);
        let mut attempts = 0;
        while !seen_scansets.insert(scanset.clone()) {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::SynthSpec(format!(
                    "table universe {} too small for {distinct} distinct scansets",
                    spec.table_universe
                )));
            }
            scanset = sample_scanset(rng, spec.table_universe, joins as usize + 1);
        }
        payloads.push(Payload {
            query_type: QueryType::Select,
            was_cached: false,
            num_joins: joins,
            num_scans: joins + 1,
            scanset,
            fingerprint: fresh_fingerprint(fingerprint_counter),
        });
    }

    // repeat positions: `repeats` slots among 1..n, partial Fisher-Yates
    let mut positions: Vec<usize> = (1..n).collect();
    for i in 0..repeats {
        let j = i + rng.pick_index(positions.len() - i);
        positions.swap(i, j);
    }
    let mut is_repeat = vec![false; n];
    for &p in positions.iter().take(repeats) {
        is_repeat[p] = true;
    }

    // conforming sequence: each repeat re-emits an earlier distinct payload
    let mut conforming: Vec<Payload> = Vec::with_capacity(n);
    let mut emitted: Vec<usize> = Vec::new();
    let mut next_distinct = 0usize;
    for &repeat in is_repeat.iter().take(n) {
        if repeat {
            let pick = emitted[rng.pick_index(emitted.len())];
            conforming.push(payloads[pick].clone());
        } else {
            emitted.push(next_distinct);
            conforming.push(payloads[next_distinct].clone());
            next_distinct += 1;
        }
    }
    debug_assert_eq!(next_distinct, distinct);

    // noise rows: removed by the prefilter, so their shape mirrors a
    // conforming query except for the one offending attribute
    let cached_count = (n as f64 * spec.cached_fraction).round() as usize;
    let non_select_count = (n as f64 * spec.non_select_fraction).round() as usize;
    let mut noise: Vec<Payload> = Vec::new();
    for _ in 0..cached_count {
        noise.push(Payload {
            query_type: QueryType::Select,
            was_cached: true,
            num_joins: jmin,
            num_scans: jmin + 1,
            scanset: sample_scanset(rng, spec.table_universe, jmin as usize + 1),
            fingerprint: fresh_fingerprint(fingerprint_counter),
        });
    }
    let non_select_types = [
        QueryType::Insert,
        QueryType::Update,
        QueryType::Delete,
        QueryType::Other,
    ];
    for i in 0..non_select_count {
        noise.push(Payload {
            query_type: non_select_types[i % non_select_types.len()],
            was_cached: false,
            num_joins: jmin,
            num_scans: jmin + 1,
            scanset: sample_scanset(rng, spec.table_universe, jmin as usize + 1),
            fingerprint: fresh_fingerprint(fingerprint_counter),
        });
    }

    // interleave: pick noise slots among the combined length
    let total = n + noise.len();
    let mut slots: Vec<usize> = (0..total).collect();
    for i in 0..noise.len() {
        let j = i + rng.pick_index(slots.len() - i);
        slots.swap(i, j);
    }
    let mut noise_slots: Vec<usize> = slots.into_iter().take(noise.len()).collect();
    noise_slots.sort_unstable();
    let mut sequence: Vec<Payload> = Vec::with_capacity(total);
    {
        let mut conforming_iter = conforming.into_iter();
        let mut noise_iter = noise.into_iter();
        let mut noise_peek = noise_slots.iter().peekable();
        for slot in 0..total {
            if noise_peek.peek() == Some(&&slot) {
                noise_peek.next();
                sequence.push(noise_iter.next().expect("noise payload per slot"));
            } else {
                sequence.push(conforming_iter.next().expect("conforming payload per slot"));
            }
        }
    }

    // timestamps: contiguous week blocks, evenly spaced inside each window
    let mut week_of = vec![0usize; total];
    let mut week_counts = vec![0usize; spec.week_span];
    for (slot, week) in week_of.iter_mut().enumerate() {
        *week = slot * spec.week_span / total;
        week_counts[*week] += 1;
    }
    let mut seen_per_week = vec![0usize; spec.week_span];
    let mut records = Vec::with_capacity(total);
    for (slot, payload) in sequence.into_iter().enumerate() {
        let week = week_of[slot];
        let m = week_counts[week];
        let step = trace_model_step(m)?;
        let ordinal = seen_per_week[week];
        seen_per_week[week] += 1;
        let ts = window_start(week) + Duration::seconds(step * (ordinal as i64 + 1));
        // query ids embed the user id, so separately synthesized traces
        // can be concatenated without id collisions
        records.push(QueryRecord {
            user_id: user_id.to_string(),
            query_id: format!("{user_id}-q{:06}", slot + 1),
            arrival_timestamp: ts,
            query_type: payload.query_type,
            was_cached: payload.was_cached,
            num_joins: payload.num_joins,
            num_scans: payload.num_scans,
            read_table_ids: payload.scanset,
            feature_fingerprint: payload.fingerprint,
        });
    }
    Ok(records)
}

fn trace_model_step(rows_in_week: usize) -> Result<i64> {
    let window = crate::prefilter::WeekWindow::LENGTH_SECONDS;
    let step = window / (rows_in_week as i64 + 1);
    if step < 1 {
        return Err(Error::SynthSpec(format!(
            "{rows_in_week} rows cannot fit one-per-second in a single week window"
        )));
    }
    Ok(step)
}

/// Emit the trace CSV for a spec.
pub fn synthesize_csv<W: io::Write>(spec: &SynthSpec, writer: W) -> Result<()> {
    let records = synthesize(spec)?;
    trace_model::write_trace(writer, &records)
}

pub fn synthesize_to_file(spec: &SynthSpec, path: &Path) -> Result<()> {
    let records = synthesize(spec)?;
    trace_model::write_trace_file(path, &records)
}

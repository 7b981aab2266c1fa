//! Query- and user-level elimination rules, plus the busiest-week
//! reduction.
//!
//! Query rules, applied in order for stats attribution (retention itself
//! is a plain conjunction, so the order only decides which rule gets the
//! credit for a removal):
//!
//! 1. keep only `select` queries;
//! 2. drop queries answered from the result cache;
//! 3. drop queries without joins;
//! 4. drop queries where the join count differs from scanset size minus
//!    one, so that a scanset uniquely identifies a join count.
//!
//! After query filtering, each user's trace is reduced to the first `K`
//! queries of their busiest week (Monday 08:00 to Friday 17:00, UTC), and
//! users whose surviving records all share one join count are dropped;
//! their join range cannot be normalized.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Duration, Utc};

use crate::error::Result;
use crate::trace_model::{QueryRecord, QueryType, UserTrace};

/// Working-hours week: Monday 08:00 (inclusive) to Friday 17:00
/// (exclusive), UTC. `end - start` is always 4 days 9 hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct WeekWindow {
    start: DateTime<Utc>,
}

impl WeekWindow {
    /// 4 days 9 hours, in seconds.
    pub const LENGTH_SECONDS: i64 = 4 * 86_400 + 9 * 3_600;

    /// The window containing `ts`, or `None` for weekends, Mondays before
    /// 08:00, and Fridays from 17:00 on.
    pub fn containing(ts: DateTime<Utc>) -> Option<WeekWindow> {
        let days_from_monday = ts.date_naive().weekday().num_days_from_monday() as i64;
        let monday = ts.date_naive() - Duration::days(days_from_monday);
        let start = monday.and_hms_opt(8, 0, 0).expect("valid time").and_utc();
        let window = WeekWindow { start };
        window.contains(ts).then_some(window)
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::seconds(Self::LENGTH_SECONDS)
    }

    /// Inclusive start, exclusive end.
    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        ts >= self.start() && ts < self.end()
    }
}

/// Audit counters for a prefilter run. Record counters partition the
/// input: summing every `removed_*` field with `surviving_records` gives
/// back `input_records`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefilterStats {
    pub input_records: u64,
    pub input_users: u64,
    pub removed_non_select: u64,
    pub removed_cached: u64,
    pub removed_no_joins: u64,
    pub removed_join_scanset_mismatch: u64,
    pub removed_outside_week_window: u64,
    pub removed_other_weeks: u64,
    pub removed_beyond_week_cap: u64,
    pub removed_records_of_dropped_users: u64,
    pub users_dropped_empty: u64,
    pub users_dropped_no_week_window: u64,
    pub users_dropped_constant_joins: u64,
    pub surviving_records: u64,
    pub surviving_users: u64,
}

impl PrefilterStats {
    /// Field-wise sum, for merging per-user stats computed in parallel.
    pub fn merge(&mut self, other: &PrefilterStats) {
        self.input_records += other.input_records;
        self.input_users += other.input_users;
        self.removed_non_select += other.removed_non_select;
        self.removed_cached += other.removed_cached;
        self.removed_no_joins += other.removed_no_joins;
        self.removed_join_scanset_mismatch += other.removed_join_scanset_mismatch;
        self.removed_outside_week_window += other.removed_outside_week_window;
        self.removed_other_weeks += other.removed_other_weeks;
        self.removed_beyond_week_cap += other.removed_beyond_week_cap;
        self.removed_records_of_dropped_users += other.removed_records_of_dropped_users;
        self.users_dropped_empty += other.users_dropped_empty;
        self.users_dropped_no_week_window += other.users_dropped_no_week_window;
        self.users_dropped_constant_joins += other.users_dropped_constant_joins;
        self.surviving_records += other.surviving_records;
        self.surviving_users += other.surviving_users;
    }

    pub fn total_removed_records(&self) -> u64 {
        self.removed_non_select
            + self.removed_cached
            + self.removed_no_joins
            + self.removed_join_scanset_mismatch
            + self.removed_outside_week_window
            + self.removed_other_weeks
            + self.removed_beyond_week_cap
            + self.removed_records_of_dropped_users
    }

    /// Conservation invariant: removals plus survivors equals the input.
    pub fn conserves(&self) -> bool {
        self.total_removed_records() + self.surviving_records == self.input_records
    }

    /// Fraction of input queries that are SELECTs. Rule 1 runs first, so
    /// `removed_non_select` counts every non-SELECT in the input.
    pub fn select_share(&self) -> f64 {
        if self.input_records == 0 {
            0.0
        } else {
            (self.input_records - self.removed_non_select) as f64 / self.input_records as f64
        }
    }

    /// Audit rows: `(rule, removed_count)` plus input/survivor totals.
    pub fn to_rows(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("non_select", self.removed_non_select),
            ("cached", self.removed_cached),
            ("no_joins", self.removed_no_joins),
            ("join_scanset_mismatch", self.removed_join_scanset_mismatch),
            ("outside_week_window", self.removed_outside_week_window),
            ("other_weeks", self.removed_other_weeks),
            ("beyond_week_cap", self.removed_beyond_week_cap),
            (
                "records_of_dropped_users",
                self.removed_records_of_dropped_users,
            ),
            ("users_empty", self.users_dropped_empty),
            ("users_no_week_window", self.users_dropped_no_week_window),
            ("users_constant_joins", self.users_dropped_constant_joins),
            ("input_records", self.input_records),
            ("input_users", self.input_users),
            ("surviving_records", self.surviving_records),
            ("surviving_users", self.surviving_users),
        ]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["rule", "removed_count"])?;
        for (rule, count) in self.to_rows() {
            wtr.write_record([rule, &count.to_string()])?;
        }
        wtr.flush()
            .map_err(|e| crate::error::Error::io("<stats writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    NonSelect,
    Cached,
    NoJoins,
    JoinScansetMismatch,
}

fn classify(record: &QueryRecord) -> Option<Rule> {
    if record.query_type != QueryType::Select {
        return Some(Rule::NonSelect);
    }
    if record.was_cached {
        return Some(Rule::Cached);
    }
    if record.num_joins == 0 {
        return Some(Rule::NoJoins);
    }
    if i64::from(record.num_joins) != record.read_table_ids.len() as i64 - 1 {
        return Some(Rule::JoinScansetMismatch);
    }
    None
}

/// Apply the four query elimination rules. Retains exactly the records
/// with `query_type = select`, `was_cached = false`, `num_joins >= 1` and
/// `num_joins = |scanset| - 1`.
pub fn filter_queries(records: Vec<QueryRecord>) -> (Vec<QueryRecord>, PrefilterStats) {
    let mut stats = PrefilterStats {
        input_records: records.len() as u64,
        ..PrefilterStats::default()
    };
    let kept: Vec<QueryRecord> = records
        .into_iter()
        .filter(|r| match classify(r) {
            None => true,
            Some(Rule::NonSelect) => {
                stats.removed_non_select += 1;
                false
            }
            Some(Rule::Cached) => {
                stats.removed_cached += 1;
                false
            }
            Some(Rule::NoJoins) => {
                stats.removed_no_joins += 1;
                false
            }
            Some(Rule::JoinScansetMismatch) => {
                stats.removed_join_scanset_mismatch += 1;
                false
            }
        })
        .collect();
    stats.surviving_records = kept.len() as u64;
    (kept, stats)
}

/// Drop users with no surviving records and users whose minimum and
/// maximum join counts are equal. Expects query filtering to have run.
pub fn filter_users(traces: Vec<UserTrace>) -> (Vec<UserTrace>, PrefilterStats) {
    let mut stats = PrefilterStats {
        input_users: traces.len() as u64,
        input_records: traces.iter().map(|t| t.len() as u64).sum(),
        ..PrefilterStats::default()
    };
    let kept: Vec<UserTrace> = traces
        .into_iter()
        .filter(|t| {
            if t.is_empty() {
                stats.users_dropped_empty += 1;
                return false;
            }
            let (min, max) = join_range(t);
            if min == max {
                stats.users_dropped_constant_joins += 1;
                stats.removed_records_of_dropped_users += t.len() as u64;
                return false;
            }
            true
        })
        .collect();
    stats.surviving_users = kept.len() as u64;
    stats.surviving_records = kept.iter().map(|t| t.len() as u64).sum();
    (kept, stats)
}

pub fn join_range(trace: &UserTrace) -> (u32, u32) {
    let mut min = u32::MAX;
    let mut max = 0;
    for r in trace.records() {
        min = min.min(r.num_joins);
        max = max.max(r.num_joins);
    }
    (min, max)
}

/// Outcome of the busiest-week reduction for one user.
#[derive(Debug, Clone)]
pub struct BusiestWeek {
    pub window: WeekWindow,
    pub trace: UserTrace,
    /// Records falling outside every window (weekends, off-hours).
    pub records_outside_windows: u64,
    /// In-window records belonging to less busy weeks.
    pub records_other_weeks: u64,
    /// Records of the chosen week beyond the first `K`.
    pub records_beyond_cap: u64,
}

/// Reduce a trace to the first `min(K, count)` records of its busiest
/// week. Ties between equally busy weeks go to the earliest window.
/// Returns `None` when no record falls inside any window; such users are
/// dropped (and reported) by the pipeline.
pub fn busiest_week(trace: &UserTrace, k: usize) -> Option<BusiestWeek> {
    assert!(k >= 1, "busiest-week cap must be positive");
    let mut windows: BTreeMap<WeekWindow, Vec<QueryRecord>> = BTreeMap::new();
    let mut outside = 0u64;
    for record in trace.records() {
        match WeekWindow::containing(record.arrival_timestamp) {
            Some(w) => windows.entry(w).or_default().push(record.clone()),
            None => outside += 1,
        }
    }
    if windows.is_empty() {
        return None;
    }
    // ascending start order, strict > keeps the earliest on ties
    let mut best: Option<(WeekWindow, usize)> = None;
    for (window, records) in &windows {
        if best.is_none_or(|(_, n)| records.len() > n) {
            best = Some((*window, records.len()));
        }
    }
    let (window, _) = best.expect("nonempty window map");

    let mut other_weeks = 0u64;
    let mut chosen = Vec::new();
    for (w, records) in windows {
        if w == window {
            chosen = records;
        } else {
            other_weeks += records.len() as u64;
        }
    }
    let beyond = chosen.len().saturating_sub(k) as u64;
    chosen.truncate(k);
    Some(BusiestWeek {
        window,
        trace: UserTrace::new(trace.user_id(), chosen),
        records_outside_windows: outside,
        records_other_weeks: other_weeks,
        records_beyond_cap: beyond,
    })
}

/// The full prefilter pipeline: query rules per user, then busiest-week
/// reduction, then the user-level checks (empty, constant join count) on
/// the retained week. Returns the surviving traces sorted by user id,
/// plus one coherent stats object whose record counters conserve.
pub fn prefilter_traces(traces: Vec<UserTrace>, k: usize) -> (Vec<UserTrace>, PrefilterStats) {
    let mut stats = PrefilterStats {
        input_users: traces.len() as u64,
        ..PrefilterStats::default()
    };
    let mut survivors = Vec::new();

    for trace in traces {
        stats.input_records += trace.len() as u64;
        let user = trace.user_id().to_string();
        let (kept, q) = filter_queries(trace.into_records());
        stats.removed_non_select += q.removed_non_select;
        stats.removed_cached += q.removed_cached;
        stats.removed_no_joins += q.removed_no_joins;
        stats.removed_join_scanset_mismatch += q.removed_join_scanset_mismatch;

        if kept.is_empty() {
            stats.users_dropped_empty += 1;
            continue;
        }
        let trace = UserTrace::new(user, kept);
        let Some(week) = busiest_week(&trace, k) else {
            stats.users_dropped_no_week_window += 1;
            stats.removed_outside_week_window += trace.len() as u64;
            continue;
        };
        stats.removed_outside_week_window += week.records_outside_windows;
        stats.removed_other_weeks += week.records_other_weeks;
        stats.removed_beyond_week_cap += week.records_beyond_cap;

        let trace = week.trace;
        let (min, max) = join_range(&trace);
        if min == max {
            stats.users_dropped_constant_joins += 1;
            stats.removed_records_of_dropped_users += trace.len() as u64;
            continue;
        }
        stats.surviving_records += trace.len() as u64;
        survivors.push(trace);
    }
    stats.surviving_users = survivors.len() as u64;
    debug_assert!(stats.conserves());
    (survivors, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_model::{parse_timestamp, Scanset};

    fn rec(
        qid: &str,
        ts: &str,
        qtype: QueryType,
        cached: bool,
        joins: u32,
        tables: &[&str],
    ) -> QueryRecord {
        QueryRecord {
            user_id: "u1".to_string(),
            query_id: qid.to_string(),
            arrival_timestamp: parse_timestamp(ts).unwrap(),
            query_type: qtype,
            was_cached: cached,
            num_joins: joins,
            num_scans: joins + 1,
            read_table_ids: Scanset::new(tables.iter().copied()),
            feature_fingerprint: format!("fp-{qid}"),
        }
    }

    fn good(qid: &str, ts: &str, joins: u32) -> QueryRecord {
        let tables: Vec<String> = (0..=joins).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = tables.iter().map(String::as_str).collect();
        rec(qid, ts, QueryType::Select, false, joins, &refs)
    }

    // 2024-01-01 is a Monday.
    const MON: &str = "2024-01-01T09:00:00Z";

    #[test]
    fn rule1_removes_non_select() {
        let (kept, stats) = filter_queries(vec![rec(
            "q1",
            MON,
            QueryType::Insert,
            false,
            1,
            &["a", "b"],
        )]);
        assert!(kept.is_empty());
        assert_eq!(stats.removed_non_select, 1);
    }

    #[test]
    fn rule2_removes_cached() {
        let (kept, stats) = filter_queries(vec![rec(
            "q1",
            MON,
            QueryType::Select,
            true,
            1,
            &["a", "b"],
        )]);
        assert!(kept.is_empty());
        assert_eq!(stats.removed_cached, 1);
    }

    #[test]
    fn rule3_removes_joinless() {
        let (kept, stats) =
            filter_queries(vec![rec("q1", MON, QueryType::Select, false, 0, &["a"])]);
        assert!(kept.is_empty());
        assert_eq!(stats.removed_no_joins, 1);
    }

    #[test]
    fn rule4_requires_scanset_size_minus_one() {
        // joins=3 over {a,b,c}: 3 != 3-1, removed
        let (kept, stats) = filter_queries(vec![rec(
            "q1",
            MON,
            QueryType::Select,
            false,
            3,
            &["a", "b", "c"],
        )]);
        assert!(kept.is_empty());
        assert_eq!(stats.removed_join_scanset_mismatch, 1);

        // joins=2 over {a,b,c}: kept
        let (kept, _) = filter_queries(vec![rec(
            "q2",
            MON,
            QueryType::Select,
            false,
            2,
            &["a", "b", "c"],
        )]);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn filter_is_idempotent_and_conserving() {
        let records = vec![
            rec("q1", MON, QueryType::Insert, false, 1, &["a", "b"]),
            rec("q2", MON, QueryType::Select, true, 1, &["a", "b"]),
            rec("q3", MON, QueryType::Select, false, 0, &["a"]),
            rec("q4", MON, QueryType::Select, false, 2, &["a", "b"]),
            good("q5", MON, 1),
            good("q6", MON, 2),
        ];
        let (once, stats) = filter_queries(records);
        assert!(stats.conserves());
        assert_eq!(once.len(), 2);
        let (twice, stats2) = filter_queries(once.clone());
        assert_eq!(once, twice);
        assert_eq!(stats2.total_removed_records(), 0);
        // every survivor conforms to rule 4 with at least one join
        for r in &once {
            assert!(r.num_joins >= 1);
            assert_eq!(r.num_joins as usize, r.read_table_ids.len() - 1);
        }
    }

    #[test]
    fn constant_join_users_are_dropped() {
        let t = UserTrace::new("u1", vec![good("q1", MON, 2), good("q2", MON, 2)]);
        let (kept, stats) = filter_users(vec![t]);
        assert!(kept.is_empty());
        assert_eq!(stats.users_dropped_constant_joins, 1);
        assert_eq!(stats.removed_records_of_dropped_users, 2);
    }

    #[test]
    fn varied_join_users_are_kept() {
        let t = UserTrace::new(
            "u1",
            vec![good("q1", MON, 1), good("q2", MON, 1), good("q3", MON, 4)],
        );
        let (kept, _) = filter_users(vec![t]);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn cached_only_user_drops_as_empty() {
        // compose with filter_queries: the user's single query is cached
        let records = vec![rec("q1", MON, QueryType::Select, true, 1, &["a", "b"])];
        let (kept, _) = filter_queries(records);
        let (users, stats) = filter_users(vec![UserTrace::new("u1", kept)]);
        assert!(users.is_empty());
        assert_eq!(stats.users_dropped_empty, 1);
    }

    #[test]
    fn window_boundaries() {
        // Monday 07:59 is out, 08:00 in; Friday 16:59 in, 17:00 out
        assert!(WeekWindow::containing(parse_timestamp("2024-01-01T07:59:59Z").unwrap()).is_none());
        assert!(WeekWindow::containing(parse_timestamp("2024-01-01T08:00:00Z").unwrap()).is_some());
        assert!(WeekWindow::containing(parse_timestamp("2024-01-05T16:59:59Z").unwrap()).is_some());
        assert!(WeekWindow::containing(parse_timestamp("2024-01-05T17:00:00Z").unwrap()).is_none());
        // weekend
        assert!(WeekWindow::containing(parse_timestamp("2024-01-06T12:00:00Z").unwrap()).is_none());
        assert!(WeekWindow::containing(parse_timestamp("2024-01-07T12:00:00Z").unwrap()).is_none());
    }

    #[test]
    fn window_length_invariant() {
        let w = WeekWindow::containing(parse_timestamp(MON).unwrap()).unwrap();
        assert_eq!(
            (w.end() - w.start()).num_seconds(),
            WeekWindow::LENGTH_SECONDS
        );
        assert_eq!(w.start(), parse_timestamp("2024-01-01T08:00:00Z").unwrap());
        assert_eq!(w.end(), parse_timestamp("2024-01-05T17:00:00Z").unwrap());
    }

    #[test]
    fn busiest_week_picks_highest_count() {
        // week 1: 3 records, week 2: 5 records
        let mut records = vec![
            good("a1", "2024-01-01T09:00:00Z", 1),
            good("a2", "2024-01-02T09:00:00Z", 2),
            good("a3", "2024-01-03T09:00:00Z", 1),
        ];
        for i in 0..5 {
            records.push(good(
                &format!("b{i}"),
                &format!("2024-01-08T{:02}:10:00Z", 8 + i),
                1,
            ));
        }
        let trace = UserTrace::new("u1", records);
        let week = busiest_week(&trace, 1000).unwrap();
        assert_eq!(week.trace.len(), 5);
        assert_eq!(
            week.window.start(),
            parse_timestamp("2024-01-08T08:00:00Z").unwrap()
        );
        assert_eq!(week.records_other_weeks, 3);
    }

    #[test]
    fn busiest_week_tie_prefers_earliest() {
        let records = vec![
            good("a1", "2024-01-01T09:00:00Z", 1),
            good("a2", "2024-01-02T09:00:00Z", 2),
            good("b1", "2024-01-08T09:00:00Z", 1),
            good("b2", "2024-01-09T09:00:00Z", 2),
        ];
        let week = busiest_week(&UserTrace::new("u1", records), 1000).unwrap();
        assert_eq!(
            week.window.start(),
            parse_timestamp("2024-01-01T08:00:00Z").unwrap()
        );
    }

    #[test]
    fn busiest_week_truncates_to_k() {
        let records: Vec<QueryRecord> = (0..5)
            .map(|i| good(&format!("q{i}"), &format!("2024-01-01T09:0{i}:00Z"), 1))
            .collect();
        let week = busiest_week(&UserTrace::new("u1", records), 2).unwrap();
        assert_eq!(week.trace.len(), 2);
        assert_eq!(week.records_beyond_cap, 3);
        // first two by timestamp
        assert_eq!(week.trace.records()[0].query_id, "q0");
        assert_eq!(week.trace.records()[1].query_id, "q1");
    }

    #[test]
    fn busiest_week_none_when_all_outside() {
        let records = vec![good("q1", "2024-01-06T12:00:00Z", 1)];
        assert!(busiest_week(&UserTrace::new("u1", records), 10).is_none());
    }

    #[test]
    fn pipeline_stats_conserve() {
        let traces = vec![
            UserTrace::new(
                "u1",
                vec![
                    good("q1", MON, 1),
                    good("q2", "2024-01-01T10:00:00Z", 2),
                    rec("q3", MON, QueryType::Insert, false, 1, &["a", "b"]),
                    good("q4", "2024-01-06T12:00:00Z", 3), // weekend
                ],
            ),
            UserTrace::new(
                "u2",
                vec![good("q5", MON, 2), good("q6", "2024-01-01T10:00:00Z", 2)],
            ),
            UserTrace::new(
                "u3",
                vec![rec("q7", MON, QueryType::Select, true, 1, &["a", "b"])],
            ),
        ];
        let (survivors, stats) = prefilter_traces(traces, 1000);
        assert!(stats.conserves(), "stats must conserve: {stats:?}");
        assert_eq!(survivors.len(), 1);
        assert_eq!(survivors[0].user_id(), "u1");
        assert_eq!(stats.users_dropped_constant_joins, 1); // u2
        assert_eq!(stats.users_dropped_empty, 1); // u3
        assert_eq!(stats.surviving_records, 2);
    }

    #[test]
    fn select_share_counts_rule_one() {
        let traces = vec![UserTrace::new(
            "u1",
            vec![
                good("q1", MON, 1),
                rec("q2", MON, QueryType::Insert, false, 1, &["a", "b"]),
                rec("q3", MON, QueryType::Update, false, 1, &["a", "b"]),
                rec("q4", MON, QueryType::Select, true, 1, &["a", "b"]),
            ],
        )];
        let (_, stats) = prefilter_traces(traces, 1000);
        // 2 of 4 queries are SELECTs (cached ones still count as SELECT)
        assert_eq!(stats.select_share(), 0.5);
    }
}

//! Trace data model: the record schema, identity keys, and the
//! repetition metric.
//!
//! A trace is a flat CSV of per-query metadata rows (one schema, one file):
//!
//! ```text
//! user_id,query_id,arrival_timestamp,query_type,was_cached,num_joins,num_scans,read_table_ids,feature_fingerprint
//! ```
//!
//! Timestamps are ISO-8601 `YYYY-MM-DDThh:mm:ssZ` and interpreted as UTC.
//! `read_table_ids` is a semicolon-separated list inside one CSV field and
//! parses into a set. Two queries are "the same" when their [`QueryHash`]es
//! are equal: same scanset, join count, scan count, and fingerprint.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use crate::error::{Error, Result};

/// Column order of the trace CSV. The header must match exactly.
pub const TRACE_HEADER: [&str; 9] = [
    "user_id",
    "query_id",
    "arrival_timestamp",
    "query_type",
    "was_cached",
    "num_joins",
    "num_scans",
    "read_table_ids",
    "feature_fingerprint",
];

/// Timestamp format used throughout: second precision, explicit `Z`.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryType {
    Select,
    Insert,
    Update,
    Delete,
    Other,
}

impl QueryType {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::Select => "select",
            QueryType::Insert => "insert",
            QueryType::Update => "update",
            QueryType::Delete => "delete",
            QueryType::Other => "other",
        }
    }

    fn parse(s: &str) -> Option<QueryType> {
        match s.to_ascii_lowercase().as_str() {
            "select" => Some(QueryType::Select),
            "insert" => Some(QueryType::Insert),
            "update" => Some(QueryType::Update),
            "delete" => Some(QueryType::Delete),
            "other" => Some(QueryType::Other),
            _ => None,
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The set of base tables a query reads, in canonical (sorted) order.
/// Two scansets with the same members compare equal regardless of the
/// order their tables arrived in.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scanset(BTreeSet<String>);

impl Scanset {
    pub fn new<I, S>(tables: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Scanset(tables.into_iter().map(Into::into).collect())
    }

    /// Parse the `read_table_ids` CSV field: `id1;id2;...`, possibly empty.
    /// Duplicate ids collapse; empty segments are ignored.
    pub fn parse_ids(field: &str) -> Self {
        Scanset(
            field
                .split(';')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        )
    }

    /// Serialize back to the `id1;id2;...` field form (canonical order).
    pub fn join_ids(&self) -> String {
        self.0.iter().cloned().collect::<Vec<_>>().join(";")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, table: &str) -> bool {
        self.0.contains(table)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl fmt::Display for Scanset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join_ids())
    }
}

impl<S: Into<String>> FromIterator<S> for Scanset {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Scanset::new(iter)
    }
}

/// Identity key for repetition detection: scanset, join count, scan count,
/// and the opaque feature fingerprint. Equality is component-wise.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryHash {
    pub scanset: Scanset,
    pub num_joins: u32,
    pub num_scans: u32,
    pub feature_fingerprint: String,
}

/// One trace row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub user_id: String,
    pub query_id: String,
    pub arrival_timestamp: DateTime<Utc>,
    pub query_type: QueryType,
    pub was_cached: bool,
    pub num_joins: u32,
    pub num_scans: u32,
    pub read_table_ids: Scanset,
    pub feature_fingerprint: String,
}

impl QueryRecord {
    /// The set of tables this query scans.
    pub fn scanset(&self) -> &Scanset {
        &self.read_table_ids
    }
}

/// Identity key of a record. Pure function of the four hash components.
pub fn hash_of(record: &QueryRecord) -> QueryHash {
    QueryHash {
        scanset: record.read_table_ids.clone(),
        num_joins: record.num_joins,
        num_scans: record.num_scans,
        feature_fingerprint: record.feature_fingerprint.clone(),
    }
}

/// One user's records in arrival order. Ties on the timestamp are broken
/// by ascending query id, so the ordering (and hence the repetition rate)
/// is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTrace {
    user_id: String,
    records: Vec<QueryRecord>,
}

impl UserTrace {
    pub fn new(user_id: impl Into<String>, mut records: Vec<QueryRecord>) -> Self {
        records.sort_by(|a, b| {
            a.arrival_timestamp
                .cmp(&b.arrival_timestamp)
                .then_with(|| a.query_id.cmp(&b.query_id))
        });
        UserTrace {
            user_id: user_id.into(),
            records,
        }
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<QueryRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Hashes of all records, in arrival order.
    pub fn hashes(&self) -> Vec<QueryHash> {
        self.records.iter().map(hash_of).collect()
    }
}

/// Fraction of queries whose hash already occurred earlier in the
/// timeline. Empty input yields 0.
pub fn repetition_rate(hashes: &[QueryHash]) -> f64 {
    if hashes.is_empty() {
        return 0.0;
    }
    let mut seen: HashSet<&QueryHash> = HashSet::with_capacity(hashes.len());
    let mut repeats = 0usize;
    for h in hashes {
        if !seen.insert(h) {
            repeats += 1;
        }
    }
    repeats as f64 / hashes.len() as f64
}

/// Group loose records into per-user traces, sorted by user id.
pub fn group_by_user(records: Vec<QueryRecord>) -> Vec<UserTrace> {
    let mut groups: BTreeMap<String, Vec<QueryRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.user_id.clone()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(user, recs)| UserTrace::new(user, recs))
        .collect()
}

/// Parse a trace file into per-user traces.
///
/// The header must match [`TRACE_HEADER`] exactly; a missing, unknown, or
/// out-of-place column is a schema error naming the column. Malformed rows
/// (bad timestamp, negative count, unknown type, duplicate query id) fail
/// with the offending line number; nothing is dropped silently.
pub fn parse_trace(path: &Path) -> Result<Vec<UserTrace>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace_reader(file)
}

/// Same as [`parse_trace`], from any reader.
pub fn parse_trace_reader<R: io::Read>(reader: R) -> Result<Vec<UserTrace>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);

    check_header(rdr.headers()?)?;

    let mut records = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(row_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let record = parse_row(&row, line)?;
        if !seen_ids.insert(record.query_id.clone()) {
            return Err(Error::TraceRow {
                line,
                detail: format!("duplicate query_id `{}`", record.query_id),
            });
        }
        records.push(record);
    }
    Ok(group_by_user(records))
}

fn check_header(headers: &csv::StringRecord) -> Result<()> {
    for (i, expected) in TRACE_HEADER.iter().enumerate() {
        match headers.get(i) {
            None => {
                return Err(Error::TraceSchema {
                    column: expected.to_string(),
                    detail: "missing column".to_string(),
                })
            }
            Some(found) if found != *expected => {
                return Err(Error::TraceSchema {
                    column: found.to_string(),
                    detail: format!("expected `{expected}` at position {}", i + 1),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = headers.get(TRACE_HEADER.len()) {
        return Err(Error::TraceSchema {
            column: extra.to_string(),
            detail: "unknown column".to_string(),
        });
    }
    Ok(())
}

fn row_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::TraceRow {
        line,
        detail: e.to_string(),
    }
}

fn parse_row(row: &csv::StringRecord, line: u64) -> Result<QueryRecord> {
    let field = |i: usize| -> &str { row.get(i).unwrap_or("") };
    let bad = |detail: String| Error::TraceRow { line, detail };

    let timestamp = parse_timestamp(field(2))
        .ok_or_else(|| bad(format!("unparsable timestamp `{}`", field(2))))?;
    let query_type = QueryType::parse(field(3))
        .ok_or_else(|| bad(format!("unknown query_type `{}`", field(3))))?;
    let was_cached = match field(4) {
        "0" => false,
        "1" => true,
        other => return Err(bad(format!("was_cached must be 0 or 1, got `{other}`"))),
    };
    let num_joins: u32 = field(5)
        .parse()
        .map_err(|_| bad(format!("invalid num_joins `{}`", field(5))))?;
    let num_scans: u32 = field(6)
        .parse()
        .map_err(|_| bad(format!("invalid num_scans `{}`", field(6))))?;

    Ok(QueryRecord {
        user_id: field(0).to_string(),
        query_id: field(1).to_string(),
        arrival_timestamp: timestamp,
        query_type,
        was_cached,
        num_joins,
        num_scans,
        read_table_ids: Scanset::parse_ids(field(7)),
        feature_fingerprint: field(8).to_string(),
    })
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .map(|naive| naive.and_utc())
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Write records in the trace CSV schema. Serialization then parsing is
/// the identity on every schema field.
pub fn write_trace<'a, W, I>(writer: W, records: I) -> Result<()>
where
    W: io::Write,
    I: IntoIterator<Item = &'a QueryRecord>,
{
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TRACE_HEADER)?;
    for r in records {
        wtr.write_record([
            r.user_id.as_str(),
            r.query_id.as_str(),
            &format_timestamp(r.arrival_timestamp),
            r.query_type.as_str(),
            if r.was_cached { "1" } else { "0" },
            &r.num_joins.to_string(),
            &r.num_scans.to_string(),
            &r.read_table_ids.join_ids(),
            r.feature_fingerprint.as_str(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

pub fn write_trace_file<'a, I>(path: &Path, records: I) -> Result<()>
where
    I: IntoIterator<Item = &'a QueryRecord>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(io::BufWriter::new(file), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn record(
        user: &str,
        qid: &str,
        ts: &str,
        qtype: QueryType,
        cached: bool,
        joins: u32,
        scans: u32,
        tables: &[&str],
        fp: &str,
    ) -> QueryRecord {
        QueryRecord {
            user_id: user.to_string(),
            query_id: qid.to_string(),
            arrival_timestamp: parse_timestamp(ts).unwrap(),
            query_type: qtype,
            was_cached: cached,
            num_joins: joins,
            num_scans: scans,
            read_table_ids: Scanset::new(tables.iter().copied()),
            feature_fingerprint: fp.to_string(),
        }
    }

    fn hash(fp: &str) -> QueryHash {
        QueryHash {
            scanset: Scanset::new(["t1", "t2"]),
            num_joins: 1,
            num_scans: 2,
            feature_fingerprint: fp.to_string(),
        }
    }

    const HEADER: &str = "user_id,query_id,arrival_timestamp,query_type,was_cached,num_joins,num_scans,read_table_ids,feature_fingerprint";

    #[test]
    fn parse_groups_by_user() {
        let csv = format!(
            "{HEADER}\n\
             u1,q1,2024-01-01T09:00:00Z,select,0,1,2,a;b,f1\n\
             u1,q2,2024-01-01T09:01:00Z,select,0,1,2,a;b,f2\n\
             u2,q3,2024-01-01T09:02:00Z,select,0,2,3,a;b;c,f3\n\
             u1,q4,2024-01-01T09:03:00Z,select,0,1,2,a;b,f4\n\
             u2,q5,2024-01-01T09:04:00Z,select,0,2,3,a;b;c,f5\n"
        );
        let traces = parse_trace_reader(csv.as_bytes()).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].user_id(), "u1");
        assert_eq!(traces[0].len(), 3);
        assert_eq!(traces[1].user_id(), "u2");
        assert_eq!(traces[1].len(), 2);
    }

    #[test]
    fn parse_header_only_is_empty() {
        let traces = parse_trace_reader(format!("{HEADER}\n").as_bytes()).unwrap();
        assert!(traces.is_empty());
    }

    #[test]
    fn parse_sorts_shuffled_timestamps() {
        let csv = format!(
            "{HEADER}\n\
             u1,q3,2024-01-01T11:00:00Z,select,0,1,2,a;b,f3\n\
             u1,q1,2024-01-01T09:00:00Z,select,0,1,2,a;b,f1\n\
             u1,q2,2024-01-01T10:00:00Z,select,0,1,2,a;b,f2\n"
        );
        let traces = parse_trace_reader(csv.as_bytes()).unwrap();
        let got: Vec<_> = traces[0]
            .records()
            .iter()
            .map(|r| (r.arrival_timestamp, r.query_id.clone()))
            .collect();
        // independent oracle: sort the same keys with the stdlib
        let mut expect = got.clone();
        expect.sort();
        assert_eq!(got, expect);
        assert_eq!(
            traces[0].records()[0].query_id,
            "q1".to_string(),
            "earliest timestamp first"
        );
    }

    #[test]
    fn parse_breaks_timestamp_ties_by_query_id() {
        let csv = format!(
            "{HEADER}\n\
             u1,qb,2024-01-01T09:00:00Z,select,0,1,2,a;b,f1\n\
             u1,qa,2024-01-01T09:00:00Z,select,0,1,2,a;b,f2\n"
        );
        let traces = parse_trace_reader(csv.as_bytes()).unwrap();
        assert_eq!(traces[0].records()[0].query_id, "qa");
    }

    #[test]
    fn parse_rejects_unknown_column() {
        let csv = "user_id,query_id,arrival_timestamp,query_type,was_cached,num_joins,num_scans,read_table_ids,feature_fingerprint,extra\n";
        let err = parse_trace_reader(csv.as_bytes()).unwrap_err();
        match err {
            Error::TraceSchema { column, .. } => assert_eq!(column, "extra"),
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn parse_rejects_missing_column() {
        let csv = "user_id,query_id,arrival_timestamp\n";
        let err = parse_trace_reader(csv.as_bytes()).unwrap_err();
        match err {
            Error::TraceSchema { column, .. } => assert_eq!(column, "query_type"),
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn parse_rejects_bad_timestamp_with_line() {
        let csv = format!(
            "{HEADER}\n\
             u1,q1,2024-01-01T09:00:00Z,select,0,1,2,a;b,f1\n\
             u1,q2,not-a-time,select,0,1,2,a;b,f2\n"
        );
        let err = parse_trace_reader(csv.as_bytes()).unwrap_err();
        match err {
            Error::TraceRow { line, detail } => {
                assert_eq!(line, 3);
                assert!(detail.contains("timestamp"));
            }
            other => panic!("expected row error, got {other}"),
        }
    }

    #[test]
    fn parse_rejects_negative_count() {
        let csv = format!("{HEADER}\nu1,q1,2024-01-01T09:00:00Z,select,0,-1,2,a;b,f1\n");
        let err = parse_trace_reader(csv.as_bytes()).unwrap_err();
        match err {
            Error::TraceRow { line, detail } => {
                assert_eq!(line, 2);
                assert!(detail.contains("num_joins"));
            }
            other => panic!("expected row error, got {other}"),
        }
    }

    #[test]
    fn parse_rejects_duplicate_query_id() {
        let csv = format!(
            "{HEADER}\n\
             u1,q1,2024-01-01T09:00:00Z,select,0,1,2,a;b,f1\n\
             u2,q1,2024-01-01T09:01:00Z,select,0,1,2,a;b,f2\n"
        );
        let err = parse_trace_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::TraceRow { line: 3, .. }));
    }

    #[test]
    fn hash_is_deterministic() {
        let r = record(
            "u1",
            "q1",
            "2024-01-01T09:00:00Z",
            QueryType::Select,
            false,
            1,
            2,
            &["t1", "t2"],
            "A",
        );
        assert_eq!(hash_of(&r), hash_of(&r));
    }

    #[test]
    fn hash_differs_on_fingerprint() {
        let a = record(
            "u1",
            "q1",
            "2024-01-01T09:00:00Z",
            QueryType::Select,
            false,
            1,
            2,
            &["t1", "t2"],
            "A",
        );
        let mut b = a.clone();
        b.feature_fingerprint = "B".to_string();
        assert_ne!(hash_of(&a), hash_of(&b));
    }

    #[test]
    fn scanset_order_is_canonical() {
        // "7;3" and "3;7" are the same set, hence the same hash
        let a = Scanset::parse_ids("7;3");
        let b = Scanset::parse_ids("3;7");
        assert_eq!(a, b);
        // oracle: set equality over the raw members
        let set_a: BTreeSet<&str> = "7;3".split(';').collect();
        let set_b: BTreeSet<&str> = "3;7".split(';').collect();
        assert_eq!(set_a, set_b);

        let mut ra = record(
            "u1",
            "q1",
            "2024-01-01T09:00:00Z",
            QueryType::Select,
            false,
            1,
            2,
            &[],
            "A",
        );
        let mut rb = ra.clone();
        ra.read_table_ids = a;
        rb.read_table_ids = b;
        assert_eq!(hash_of(&ra), hash_of(&rb));
    }

    #[test]
    fn scanset_dedups() {
        assert_eq!(Scanset::parse_ids("5;5;5").len(), 1);
        assert_eq!(Scanset::parse_ids("").len(), 0);
        assert_eq!(Scanset::parse_ids("1;;2").len(), 2);
    }

    #[test]
    fn repetition_rate_single_is_zero() {
        assert_eq!(repetition_rate(&[hash("A")]), 0.0);
    }

    #[test]
    fn repetition_rate_identical_run() {
        let hashes = vec![hash("A"), hash("A"), hash("A"), hash("A")];
        assert_eq!(repetition_rate(&hashes), 0.75);
    }

    #[test]
    fn repetition_rate_mixed_sequence() {
        // A,B,A,C,B,A: repeats at positions 2,4,5 -> 3/6
        let hashes = vec![
            hash("A"),
            hash("B"),
            hash("A"),
            hash("C"),
            hash("B"),
            hash("A"),
        ];
        assert_eq!(repetition_rate(&hashes), 0.5);
    }

    #[test]
    fn repetition_rate_empty_is_zero() {
        assert_eq!(repetition_rate(&[]), 0.0);
    }

    #[test]
    fn round_trips_through_csv() {
        let records = vec![
            record(
                "u1",
                "q1",
                "2024-01-01T09:00:00Z",
                QueryType::Select,
                false,
                1,
                2,
                &["a", "b"],
                "f1",
            ),
            record(
                "u2",
                "q2",
                "2024-01-02T10:30:15Z",
                QueryType::Insert,
                true,
                0,
                1,
                &[],
                "f2",
            ),
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &records).unwrap();
        let traces = parse_trace_reader(buf.as_slice()).unwrap();
        let parsed: Vec<QueryRecord> = traces
            .into_iter()
            .flat_map(UserTrace::into_records)
            .collect();
        assert_eq!(parsed, records);
    }

    proptest! {
        #[test]
        fn rate_matches_distinct_formulation(labels in proptest::collection::vec(0u8..6, 0..64)) {
            let hashes: Vec<QueryHash> = labels.iter().map(|l| hash(&l.to_string())).collect();
            let rate = repetition_rate(&hashes);
            // second formulation: the rate depends only on the length and
            // the number of distinct hashes
            let distinct: HashSet<&QueryHash> = hashes.iter().collect();
            let expect = if hashes.is_empty() {
                0.0
            } else {
                (hashes.len() - distinct.len()) as f64 / hashes.len() as f64
            };
            prop_assert_eq!(rate, expect);
        }

        #[test]
        fn rate_is_permutation_invariant(
            labels in proptest::collection::vec(0u8..6, 1..48),
            rotate in 0usize..48,
        ) {
            let hashes: Vec<QueryHash> = labels.iter().map(|l| hash(&l.to_string())).collect();
            let mut rotated = hashes.clone();
            rotated.rotate_left(rotate % hashes.len().max(1));
            prop_assert_eq!(repetition_rate(&hashes), repetition_rate(&rotated));
        }

        #[test]
        fn hash_ignores_table_order(tables in proptest::collection::vec("[a-e]", 0..6), seed in 0u64..1000) {
            let mut shuffled = tables.clone();
            // cheap deterministic shuffle
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let a = record("u", "q", "2024-01-01T09:00:00Z", QueryType::Select, false, 1, 2,
                           &tables.iter().map(String::as_str).collect::<Vec<_>>(), "F");
            let b = record("u", "q", "2024-01-01T09:00:00Z", QueryType::Select, false, 1, 2,
                           &shuffled.iter().map(String::as_str).collect::<Vec<_>>(), "F");
            prop_assert_eq!(hash_of(&a), hash_of(&b));
        }
    }
}

//! Shared helpers for the integration and acceptance suites.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use redbench::trace_model::{parse_timestamp, QueryRecord, QueryType, Scanset};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

#[allow(clippy::too_many_arguments)]
pub fn record(
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

/// A conforming record: select, uncached, `joins = |scanset| - 1`.
pub fn conforming(user: &str, qid: &str, ts: &str, joins: u32, fp: &str) -> QueryRecord {
    let tables: Vec<String> = (0..=joins).map(|i| format!("{fp}_t{i}")).collect();
    let refs: Vec<&str> = tables.iter().map(String::as_str).collect();
    record(
        user,
        qid,
        ts,
        QueryType::Select,
        false,
        joins,
        joins + 1,
        &refs,
        fp,
    )
}

/// Write a synthetic pool: for each `(join_count, templates, instances)`
/// level, that many templates with simple comma-join statements. Template
/// ids are globally sequential numbers, zero-padded so lexicographic and
/// numeric order agree.
pub fn write_pool(dir: &Path, levels: &[(u32, usize, usize)]) {
    fs::create_dir_all(dir).unwrap();
    let mut template_number = 0usize;
    for &(join_count, templates, instances) in levels {
        for _ in 0..templates {
            template_number += 1;
            let id = format!("{template_number:04}");
            let tables: Vec<String> = (0..=join_count).map(|t| format!("tab_{id}_{t}")).collect();
            for inst in 0..instances {
                let letter = (b'a' + (inst % 26) as u8) as char;
                let suffix = inst / 26;
                let name = if suffix == 0 {
                    format!("{id}{letter}.sql")
                } else {
                    format!("{id}{letter}{suffix}.sql")
                };
                let sql = format!(
                    "SELECT COUNT(*) AS c{inst}\nFROM {}\nWHERE 1 = 1;\n",
                    tables.join(", ")
                );
                fs::write(dir.join(name), sql).unwrap();
            }
        }
    }
}

/// All files under `root` as (relative path, bytes), sorted.
pub fn dir_snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Assert two output trees are byte-identical.
pub fn assert_trees_equal(a: &Path, b: &Path) {
    let snap_a = dir_snapshot(a);
    let snap_b = dir_snapshot(b);
    let keys_a: Vec<&String> = snap_a.keys().collect();
    let keys_b: Vec<&String> = snap_b.keys().collect();
    assert_eq!(keys_a, keys_b, "tree file lists differ");
    for (rel, bytes) in &snap_a {
        assert_eq!(bytes, &snap_b[rel], "file {rel} differs");
    }
}

//! User bucketing and representative selection.
//!
//! Users are partitioned into ten repetition-rate buckets (left-inclusive,
//! top bucket closed at 100%). Within each bucket, users are ranked twice
//! in ascending order, by the number of distinct join-count values and by
//! the number of distinct scansets; the rank sum is the user's
//! workload-variability. The lowest, median, and highest variability users
//! represent the bucket.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io;

use crate::error::{Error, Result};
use crate::trace_model::{repetition_rate, UserTrace};

/// Per-user characterization over their (prefiltered) trace.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: String,
    pub repetition_rate: f64,
    /// Count of distinct `num_joins` values across the user's queries.
    pub distinct_join_values: usize,
    pub distinct_scansets: usize,
    pub bucket: usize,
}

/// Rank-sum score within one bucket. Ranks are ordinal (1-based), ties
/// broken by ascending user id, so within a bucket each rank column is a
/// permutation of `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariabilityScore {
    pub join_rank: usize,
    pub scanset_rank: usize,
    pub total: usize,
}

/// Which representative a selected user is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRole {
    Lowest,
    Median,
    Highest,
    /// Generalized quantile slot, used when the per-bucket count is not 3.
    Rank(usize),
}

impl fmt::Display for SelectionRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionRole::Lowest => f.write_str("lowest"),
            SelectionRole::Median => f.write_str("median"),
            SelectionRole::Highest => f.write_str("highest"),
            SelectionRole::Rank(k) => write!(f, "rank{k}"),
        }
    }
}

/// One selected user.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub bucket: usize,
    pub role: SelectionRole,
    pub user_id: String,
    pub repetition_rate: f64,
    pub total_variability: usize,
}

/// Bucket index for a repetition rate: `floor(rate * 10)`, clamped so
/// that a rate of exactly 1.0 lands in the top bucket.
pub fn bucket_of(rate: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Domain(format!(
            "repetition rate {rate} outside [0, 1]"
        )));
    }
    Ok(((rate * 10.0).floor() as usize).min(9))
}

/// Characterize one user from their prefiltered busiest-week trace.
pub fn profile_user(trace: &UserTrace) -> UserProfile {
    let hashes = trace.hashes();
    let rate = repetition_rate(&hashes);
    let joins: HashSet<u32> = trace.records().iter().map(|r| r.num_joins).collect();
    let scansets: HashSet<_> = trace.records().iter().map(|r| r.scanset()).collect();
    UserProfile {
        user_id: trace.user_id().to_string(),
        repetition_rate: rate,
        distinct_join_values: joins.len(),
        distinct_scansets: scansets.len(),
        bucket: bucket_of(rate).expect("repetition rate is always in [0, 1]"),
    }
}

/// Rank one bucket's users. The result is aligned with the input order.
/// All profiles must share a bucket.
pub fn rank_bucket(profiles: &[UserProfile]) -> Vec<VariabilityScore> {
    debug_assert!(profiles.windows(2).all(|w| w[0].bucket == w[1].bucket));
    let ordinal_ranks = |key: fn(&UserProfile) -> usize| -> Vec<usize> {
        let mut order: Vec<usize> = (0..profiles.len()).collect();
        order.sort_by(|&a, &b| {
            key(&profiles[a])
                .cmp(&key(&profiles[b]))
                .then_with(|| profiles[a].user_id.cmp(&profiles[b].user_id))
        });
        let mut ranks = vec![0usize; profiles.len()];
        for (rank, &idx) in order.iter().enumerate() {
            ranks[idx] = rank + 1;
        }
        ranks
    };
    let join_ranks = ordinal_ranks(|p| p.distinct_join_values);
    let scanset_ranks = ordinal_ranks(|p| p.distinct_scansets);
    join_ranks
        .into_iter()
        .zip(scanset_ranks)
        .map(|(join_rank, scanset_rank)| VariabilityScore {
            join_rank,
            scanset_rank,
            total: join_rank + scanset_rank,
        })
        .collect()
}

/// Select up to `per_bucket` representatives from every populated bucket.
///
/// With the default of three per bucket these are the lowest, (lower)
/// median, and highest variability users; other counts spread across the
/// same ordering by quantile index. Duplicates collapse when a bucket has
/// fewer users than slots. Returns the selections (ordered by bucket,
/// then slot) and human-readable warnings for under-populated buckets.
pub fn select_users(profiles: &[UserProfile], per_bucket: usize) -> (Vec<Selection>, Vec<String>) {
    assert!(per_bucket >= 1, "per_bucket must be positive");
    let mut buckets: BTreeMap<usize, Vec<&UserProfile>> = BTreeMap::new();
    for p in profiles {
        buckets.entry(p.bucket).or_default().push(p);
    }

    let mut selections = Vec::new();
    let mut warnings = Vec::new();
    for bucket in 0..10 {
        let Some(members) = buckets.get(&bucket) else {
            warnings.push(format!(
                "bucket {bucket} is empty; no workloads emitted for it"
            ));
            continue;
        };
        let owned: Vec<UserProfile> = members.iter().map(|p| (*p).clone()).collect();
        let scores = rank_bucket(&owned);
        // ascending by (total, user_id); ties resolve deterministically
        let mut order: Vec<usize> = (0..owned.len()).collect();
        order.sort_by(|&a, &b| {
            scores[a]
                .total
                .cmp(&scores[b].total)
                .then_with(|| owned[a].user_id.cmp(&owned[b].user_id))
        });

        let n = order.len();
        let slots: Vec<(SelectionRole, usize)> = if per_bucket == 3 {
            vec![
                (SelectionRole::Lowest, 0),
                (SelectionRole::Median, (n - 1) / 2),
                (SelectionRole::Highest, n - 1),
            ]
        } else if per_bucket == 1 {
            vec![(SelectionRole::Median, (n - 1) / 2)]
        } else {
            (0..per_bucket)
                .map(|k| (SelectionRole::Rank(k), (n - 1) * k / (per_bucket - 1)))
                .collect()
        };

        let mut taken: HashSet<usize> = HashSet::new();
        for (role, slot) in slots {
            let idx = order[slot];
            if taken.insert(idx) {
                selections.push(Selection {
                    bucket,
                    role,
                    user_id: owned[idx].user_id.clone(),
                    repetition_rate: owned[idx].repetition_rate,
                    total_variability: scores[idx].total,
                });
            }
        }
        if n < per_bucket {
            warnings.push(format!(
                "bucket {bucket} has only {n} user(s), fewer than the {per_bucket} requested"
            ));
        }
    }
    (selections, warnings)
}

/// Selection manifest: `bucket,user_id,role,repetition_rate,total_variability`.
pub fn write_selection_csv<W: io::Write>(writer: W, selections: &[Selection]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "bucket",
        "user_id",
        "role",
        "repetition_rate",
        "total_variability",
    ])?;
    for s in selections {
        wtr.write_record([
            &s.bucket.to_string(),
            &s.user_id,
            &s.role.to_string(),
            &s.repetition_rate.to_string(),
            &s.total_variability.to_string(),
        ])?;
    }
    wtr.flush()
        .map_err(|e| Error::io("<selection writer>", e))?;
    Ok(())
}

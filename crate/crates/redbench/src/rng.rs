//! Deterministic randomness.
//!
//! Every random decision in the crate flows from a single 64-bit seed
//! through a splitmix64 stream; there is no wall-clock or OS entropy
//! anywhere. Uniform choices follow one fixed convention: candidates are
//! sorted by id and the index is `next_u64() mod candidate_count`.

/// splitmix64 generator. Small state, full 64-bit output, and the same
/// sequence on every platform.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform index below `n`. Callers sort their candidates first so the
    /// pick is reproducible regardless of how the set was assembled.
    pub fn pick_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "pick_index on empty candidate set");
        (self.next_u64() % n as u64) as usize
    }

    /// Uniform value in `lo..=hi`.
    pub fn pick_range(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi);
        lo + self.next_u64() % (hi - lo + 1)
    }
}

/// FNV-1a over a byte string. Used to fold opaque user ids into seeds.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// Seed for one user's workload stream: the global seed XORed with a
/// 64-bit hash of the user id, so distinct users draw independent
/// sequences while the whole run stays a pure function of one seed.
pub fn workload_seed(global_seed: u64, user_id: &str) -> u64 {
    global_seed ^ fnv1a64(user_id.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_reproducible() {
        let a: Vec<u64> = {
            let mut rng = SplitMix64::new(42);
            (0..32).map(|_| rng.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut rng = SplitMix64::new(42);
            (0..32).map(|_| rng.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_differ() {
        let mut a = SplitMix64::new(0);
        let mut b = SplitMix64::new(1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn pick_index_in_bounds() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..1000 {
            assert!(rng.pick_index(13) < 13);
        }
    }

    #[test]
    fn fnv_known_values() {
        // reference vectors for 64-bit FNV-1a
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn workload_seed_mixes_user() {
        assert_ne!(workload_seed(0, "u1"), workload_seed(0, "u2"));
        assert_ne!(workload_seed(0, "u1"), workload_seed(1, "u1"));
        assert_eq!(workload_seed(5, "u1"), workload_seed(5, "u1"));
    }
}

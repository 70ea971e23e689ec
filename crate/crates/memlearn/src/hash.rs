//! Fixed hash primitives shared by the table-indexing and filter code.
//!
//! Every structure that folds a wide value into a small table row (Q-value
//! planes, perceptron weight tables, Bloom filters) goes through the same
//! 64-bit finalizer so that runs are bit-reproducible across platforms.

/// SplitMix64 finalizer. Full-avalanche mix of a 64-bit value.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// Golden-ratio increment used to derive the fixed shift-constant table.
pub const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Fixed table of odd shifting constants.
///
/// Index `i` holds the `i`-th odd multiple of [`GOLDEN_GAMMA`]. Plane `p` of
/// vault `v` in a Q-value store uses constant `v * planes + p`; Bloom filter
/// hash `i` uses constant `16 + i`. Constants are fixed at build time so two
/// runs with the same configuration index identically.
#[inline]
pub fn shift_constant(i: usize) -> u64 {
    GOLDEN_GAMMA.wrapping_mul(2 * i as u64 + 1)
}

/// Fold a feature value into a row of a power-of-two sized table.
#[inline]
pub fn table_row(value: u64, shift: u64, rows: usize) -> usize {
    debug_assert!(rows.is_power_of_two());
    (mix64(value.wrapping_add(shift)) as usize) & (rows - 1)
}

/// FNV-1a over a byte string; used to derive labelled RNG sub-seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_deterministic() {
        assert_eq!(mix64(12345), mix64(12345));
        assert_ne!(mix64(12345), mix64(12346));
    }

    #[test]
    fn shift_constants_are_odd_and_distinct() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..32 {
            let c = shift_constant(i);
            assert_eq!(c & 1, 1);
            assert!(seen.insert(c));
        }
    }

    #[test]
    fn table_row_in_bounds() {
        for v in 0..10_000u64 {
            let r = table_row(v, shift_constant(0), 128);
            assert!(r < 128);
        }
    }

    // Row occupancy of the mixer stays within 3x of the uniform expectation.
    #[test]
    fn table_row_occupancy_near_uniform() {
        let rows = 128;
        let n = 10_000u64;
        let mut hist = vec![0u64; rows];
        for v in 0..n {
            hist[table_row(v.wrapping_mul(0x1234_5677), shift_constant(3), rows)] += 1;
        }
        let expect = n as f64 / rows as f64;
        for (r, &c) in hist.iter().enumerate() {
            assert!(
                (c as f64) < 3.0 * expect,
                "row {r} holds {c}, expectation {expect}"
            );
        }
    }
}

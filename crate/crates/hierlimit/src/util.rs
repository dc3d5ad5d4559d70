//! Small shared helpers.

/// Derive a stable sub-seed from a base seed and a textual tag.
///
/// FNV-1a fold over the tag followed by a splitmix64 finalizer. Stable
/// across platforms and releases, unlike `DefaultHasher`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    h = h.wrapping_mul(0x0000_0100_0000_01b3);
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    h
}

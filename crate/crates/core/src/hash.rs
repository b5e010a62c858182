//! Fixed, published hashing used wherever output must be reproducible
//! across runs and platforms.

/// Name recorded in manifests next to routing decisions.
pub const ROUTING_HASH_NAME: &str = "splitmix64";

/// SplitMix64 finalizer (Steele, Lea & Flood, 2014).
pub const fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` derived from a seed and a key.
pub fn unit_interval(seed: u64, key: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(key));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

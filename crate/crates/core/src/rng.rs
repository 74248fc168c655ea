//! Counter-based Gaussian streams.
//!
//! Sampling is addressed by (seed, sample, mode, index) rather than by a
//! sequential generator state, so shard layout and thread count cannot
//! change the values: the same counter always yields the same draw.

/// SplitMix64 finalizer. Statistically strong enough for Monte Carlo at the
/// 5-sigma level when fed distinct counters.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapses a (seed, a, b, c) counter into one well-mixed 64-bit word.
#[inline]
fn key(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut h = mix(seed ^ 0x853c_49e6_748f_ea9b);
    h = mix(h ^ a.wrapping_mul(0xd129_0286_3a46_b5e5));
    h = mix(h ^ b.wrapping_mul(0xaef1_7502_108e_f2d9));
    h = mix(h ^ c.wrapping_mul(0xf58c_d60f_85f0_4a4d));
    h
}

#[inline]
fn to_open_unit(u: u64) -> f64 {
    // (0, 1): never returns 0, so ln() below is always finite.
    ((u >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal pair addressed by counter, via Box-Muller.
#[inline]
pub fn gaussian_pair(seed: u64, a: u64, b: u64, c: u64) -> (f64, f64) {
    let k = key(seed, a, b, c);
    let u1 = to_open_unit(k);
    let u2 = to_open_unit(mix(k ^ 0x2545_f491_4f6c_dd1d));
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, co) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    (r * co, r * s)
}

/// Single standard normal draw at a counter.
#[inline]
pub fn gaussian(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    gaussian_pair(seed, a, b, c).0
}

//! Small numeric helpers shared across the crate: sup-norm arithmetic,
//! compensated summation, exact integer roots, and seed derivation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `max_i |x_i|`.
pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `max_i |x_i - y_i|`. Panics if lengths differ.
pub fn sup_dist(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "sup_dist on vectors of different length");
    x.iter()
        .zip(y)
        .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
}

/// Neumaier compensated accumulator. Summation order still matters in
/// principle, but the compensation keeps results stable to ~1e-16
/// relative, which is what the reproducibility contract needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Smallest `k >= 1` with `k^d >= n`. Exact integer arithmetic; naive
/// float powers round the wrong way on perfect powers (e.g. 27^(1/3)).
pub fn ceil_nth_root(n: u64, d: u32) -> u64 {
    assert!(d >= 1, "root order must be >= 1");
    if n <= 1 {
        return 1;
    }
    let mut lo = 1u64;
    let mut hi = n;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pow_at_least(mid, d, n) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Largest `k >= 1` with `k^d <= n` (for `n >= 1`).
pub fn floor_nth_root(n: u64, d: u32) -> u64 {
    assert!(d >= 1, "root order must be >= 1");
    assert!(n >= 1, "floor root of zero");
    let k = ceil_nth_root(n, d);
    if checked_pow(k, d) == Some(n) {
        k
    } else {
        k - 1
    }
}

fn checked_pow(base: u64, exp: u32) -> Option<u64> {
    let mut acc = 1u64;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// `base^exp >= n`, saturating instead of overflowing.
fn pow_at_least(base: u64, exp: u32, n: u64) -> bool {
    match checked_pow(base, exp) {
        Some(p) => p >= n,
        None => true,
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-stream RNG derived from `(master_seed, stream)`.
/// Streams are independent of worker count and evaluation order.
pub fn derive_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Ordinary least-squares slope of `y` against `x`. Returns `None` when
/// fewer than two distinct abscissae are given.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        cov += (xi - mx) * (yi - my);
        var += (xi - mx) * (xi - mx);
    }
    if var == 0.0 {
        None
    } else {
        Some(cov / var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_roots_are_exact_on_perfect_powers() {
        assert_eq!(ceil_nth_root(27, 3), 3);
        assert_eq!(ceil_nth_root(28, 3), 4);
        assert_eq!(ceil_nth_root(30, 2), 6);
        assert_eq!(ceil_nth_root(60, 2), 8);
        assert_eq!(ceil_nth_root(3, 1), 3);
        assert_eq!(ceil_nth_root(1, 5), 1);
        assert_eq!(floor_nth_root(27, 3), 3);
        assert_eq!(floor_nth_root(26, 3), 2);
        assert_eq!(floor_nth_root(4, 1), 4);
        assert_eq!(floor_nth_root(63, 2), 7);
        assert_eq!(floor_nth_root(64, 2), 8);
    }

    #[test]
    fn roots_match_brute_force_up_to_10000() {
        for d in 1..=4u32 {
            for n in 1..=10_000u64 {
                let k = ceil_nth_root(n, d);
                assert!(k.pow(d) >= n && (k == 1 || (k - 1).pow(d) < n), "n={n} d={d}");
                let f = floor_nth_root(n, d);
                assert!(f.pow(d) <= n && (f + 1).pow(d) > n, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-21);
    }

    #[test]
    fn derived_rngs_are_reproducible_and_stream_separated() {
        use rand::RngCore;
        let mut a = derive_rng(7, 0);
        let mut b = derive_rng(7, 0);
        let mut c = derive_rng(7, 1);
        let xa = a.next_u64();
        assert_eq!(xa, b.next_u64());
        assert_ne!(xa, c.next_u64());
    }

    #[test]
    fn slope_of_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert!((least_squares_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(least_squares_slope(&[1.0], &[1.0]), None);
    }
}

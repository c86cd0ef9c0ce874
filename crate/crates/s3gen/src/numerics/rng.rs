/// Deterministic counter-based random number generator (splitmix64).
///
/// Every draw advances an internal counter by a fixed odd constant and
/// hashes it, so streams are identical across platforms and independent
/// of evaluation order. `split` derives a decorrelated child stream for
/// nested components without perturbing the parent.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_f64() * n as f64) as usize % n
    }

    /// Normal draw via Box-Muller. A zero std returns the mean exactly
    /// (no stream advance would break counter parity, so we still draw).
    pub fn gaussian(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        if std == 0.0 {
            return mean;
        }
        let mag = (-2.0 * u1.ln()).sqrt();
        mean + std * mag * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Child stream decorrelated from the parent's continuation.
    pub fn split(&mut self) -> Rng {
        Rng {
            state: self.next_u64(),
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Pick one element uniformly.
    pub fn choose<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(2);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn uniform_in_range() {
        let mut r = Rng::new(9);
        for _ in 0..10_000 {
            let v = r.next_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn zero_std_returns_mean_exactly() {
        let mut r = Rng::new(7);
        assert_eq!(r.gaussian(0.0, 0.0), 0.0);
        assert_eq!(r.gaussian(1.5, 0.0), 1.5);
    }

    #[test]
    fn gaussian_moments_match_parameters() {
        let mut r = Rng::new(123);
        let n = 100_000usize;
        let (mean, std) = (0.3, 0.7);
        let draws: Vec<f64> = (0..n).map(|_| r.gaussian(mean, std)).collect();
        let m: f64 = draws.iter().sum::<f64>() / n as f64;
        let var: f64 = draws.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        assert!((m - mean).abs() < 0.02, "sample mean {m}");
        assert!((var.sqrt() - std).abs() < 0.02, "sample std {}", var.sqrt());
    }

    #[test]
    fn split_streams_decorrelated() {
        let mut parent = Rng::new(5);
        let mut child = parent.split();
        let same = (0..64)
            .filter(|_| parent.next_u64() == child.next_u64())
            .count();
        assert_eq!(same, 0);
    }

    #[test]
    fn below_covers_range() {
        let mut r = Rng::new(3);
        let mut seen = [false; 5];
        for _ in 0..200 {
            seen[r.below(5)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}

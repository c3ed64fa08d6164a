//! Self-contained deterministic random source.
//!
//! A 64-bit linear congruential generator, `x_{n+1} = a·x_n + c mod 2^64`
//! with the MMIX multiplier `a = 6364136223846793005` and increment
//! `c = 1442695040888963407`. Uniform doubles take the top 53 bits of the
//! state. The generator is documented here precisely so that other language
//! implementations can reproduce identical draw sequences from the same
//! seed.

const MULTIPLIER: u64 = 6364136223846793005;
const INCREMENT: u64 = 1442695040888963407;

/// Seeded generator state. Same seed, same draw sequence.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    state: u64,
    counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        // One warm-up step so that small seeds do not produce near-zero
        // first draws.
        let state = seed
            .wrapping_mul(MULTIPLIER)
            .wrapping_add(INCREMENT)
            .wrapping_mul(MULTIPLIER)
            .wrapping_add(INCREMENT);
        Self {
            seed,
            state,
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of draws made so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT);
        self.counter += 1;
        self.state
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_f64() * n as f64) as usize % n
    }

    /// Standard normal draw via the Box-Muller transform (two uniforms per
    /// call; the second variate is discarded to keep the draw count simple).
    pub fn next_normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        let u1 = 1.0 - self.next_f64(); // in (0, 1]
        let u2 = self.next_f64();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        mean + std_dev * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngState::new(1337);
        let mut b = RngState::new(1337);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.counter(), 100);
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = RngState::new(1337);
        let mut b = RngState::new(2024);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = RngState::new(7);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = RngState::new(42);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.next_normal(0.0, 1.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }
}

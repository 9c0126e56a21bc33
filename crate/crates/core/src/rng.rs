//! Counter-based random streams.
//!
//! Every Monte Carlo path draws from its own ChaCha8 stream selected by
//! `(seed, stream)`. Path `i` of a run always sees the same numbers no matter
//! how the work is split across threads, which is what makes results
//! bit-identical for any worker count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

/// An explicit, reproducible source of randomness.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Stream for path `index` of a run identified by `seed`.
    pub fn for_path(seed: u64, index: u64) -> Self {
        Self::new(seed, index)
    }

    /// Derive an unrelated seed for an auxiliary experiment (e.g. moment
    /// estimation next to a pricing run) so the two never share streams.
    pub fn derive_seed(seed: u64, tag: u64) -> u64 {
        splitmix64(seed ^ splitmix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15)))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn exp1(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }

    /// Poisson variate by inversion; intended for the small means that occur
    /// per Euler sub-step.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        if mean > 30.0 {
            let d = rand_distr::Poisson::new(mean).expect("finite positive mean");
            return self.rng.sample(d) as u64;
        }
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u = self.uniform_open();
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        k
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_numbers() {
        let mut a = RngStream::for_path(7, 3);
        let mut b = RngStream::for_path(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::for_path(7, 3);
        let mut b = RngStream::for_path(7, 4);
        let same = (0..32).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn poisson_mean() {
        let mut r = RngStream::new(1, 0);
        let m = 200_000;
        let s: u64 = (0..m).map(|_| r.poisson(0.7)).sum();
        let mean = s as f64 / m as f64;
        assert!((mean - 0.7).abs() < 4.0 * (0.7f64 / m as f64).sqrt());
    }
}

//! Seed splitting and chunked parallel reduction.
//!
//! Every stochastic task draws from a generator seeded by
//! `mix(master, stream, index)`, and samples are grouped into fixed-size
//! chunks whose partial results are combined in chunk order. Results are
//! therefore identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

/// Samples per chunk in [`chunked_map`].
pub const CHUNK: usize = 1024;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derived seed for `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ stream) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream, index))
}

/// Maps `f` over `0..count` in chunks and returns per-chunk results in order.
pub fn chunked_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunks: Vec<std::ops::Range<usize>> =
        (0..count.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(count)).collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        chunks.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        chunks.into_iter().map(f).collect()
    }
}

/// Order-preserving parallel map over items.
pub fn par_map<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Runs `f` inside a pool of `workers` threads (or the global pool for `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        if let Some(w) = workers {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

/// A Monte Carlo estimate with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { estimate: value, stderr: 0.0, samples: 0, seed: 0 }
    }

    /// `|self − value|` in units of the standard error (infinite for a
    /// mismatched exact value).
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (self.estimate - value).abs();
        if self.stderr > 0.0 {
            diff / self.stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Running sums for mean and standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: Moments) -> Moments {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Standard error of the mean (sample variance, `n − 1`).
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    pub fn estimate(&self, seed: u64) -> Estimate {
        Estimate { estimate: self.mean(), stderr: self.stderr(), samples: self.count, seed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_ne!(a, derive_seed(2, 0, 0));
        assert_eq!(a, derive_seed(1, 0, 0));
    }

    #[test]
    fn chunked_map_is_worker_independent() {
        let run = |w| {
            with_workers(Some(w), || {
                let parts = chunked_map(5000, |range| {
                    let mut m = Moments::default();
                    for i in range {
                        m.push(rng_for(7, 3, i as u64).gen::<f64>());
                    }
                    m
                });
                parts.into_iter().fold(Moments::default(), Moments::merge)
            })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert_eq!(a.count, 5000);
        assert!((a.mean() - 0.5).abs() < 0.02);
    }

    #[test]
    fn moments_stderr() {
        let mut m = Moments::default();
        for x in [1.0, -1.0, 1.0, -1.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 0.0);
        assert!((m.stderr() - (4.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(Estimate::exact(0.5).z_score(0.5), 0.0);
        assert!(Estimate::exact(0.5).z_score(0.4).is_infinite());
    }
}

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;
use crate::scalar::Scalar;

/// Seeded, splittable random stream.
///
/// Sub-streams are derived from the seed and a label only, never from the
/// current position, so `rng.substream("display-init")` is the same stream no
/// matter how many draws were taken from `rng` beforehand.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the sub-stream `label` under `seed`.
    pub fn derive_seed(seed: u64, label: &str) -> u64 {
        splitmix64(seed ^ splitmix64(fnv1a(label)))
    }

    pub fn substream(&self, label: &str) -> Self {
        Self::new(Self::derive_seed(self.seed, label))
    }

    pub fn substream_indexed(&self, label: &str, index: u64) -> Self {
        Self::new(splitmix64(Self::derive_seed(self.seed, label) ^ splitmix64(index)))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    pub fn gaussian_matrix<T: Scalar>(&mut self, rows: usize, cols: usize, std: f64) -> Matrix<T> {
        Matrix::from_fn(rows, cols, |_, _| T::of(std * self.normal()))
    }

    /// `k` distinct indices from `0..n` (partial Fisher-Yates), in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    /// Random point of the probability simplex of dimension `n`
    /// (normalized exponentials, i.e. flat Dirichlet).
    pub fn simplex_point(&mut self, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - self.uniform()).ln()).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_give_identical_streams() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_ignore_parent_position() {
        let parent = Rng::new(3);
        let mut advanced = parent.clone();
        for _ in 0..10 {
            advanced.next_u64();
        }
        assert_eq!(
            parent.substream("weight-init").next_u64(),
            advanced.substream("weight-init").next_u64()
        );
    }

    #[test]
    fn distinct_labels_do_not_collide() {
        let root = Rng::new(11);
        let labels = ["display-init", "weight-init", "synth", "acquire", "retrain"];
        let mut seen = std::collections::HashSet::new();
        for l in labels {
            let mut s = root.substream(l);
            for _ in 0..1000 {
                assert!(seen.insert(s.next_u64()), "collision in stream {l}");
            }
        }
        for i in 0..50 {
            assert!(seen.insert(root.substream_indexed("retrain", i).next_u64()));
        }
    }

    #[test]
    fn without_replacement_is_distinct() {
        let mut r = Rng::new(5);
        let mut s = r.sample_without_replacement(20, 20);
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A splittable random key: a root seed plus a path of 64-bit labels.
///
/// Draws depend only on `(seed, path)`, never on how many other keys were
/// used before, so independent rollouts stay reproducible under any
/// scheduling.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngKey {
    seed: u64,
    path: Vec<u64>,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn string labels into path entries.
pub(crate) fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl RngKey {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child key labelled by a string.
    pub fn split(&self, label: &str) -> Self {
        self.fold(label_hash(label))
    }

    /// Child key labelled by an integer (attempt index, step, ...).
    pub fn fold(&self, label: u64) -> Self {
        let mut path = self.path.clone();
        path.push(label);
        Self {
            seed: self.seed,
            path,
        }
    }

    /// 64-bit digest of the full key.
    pub fn digest(&self) -> u64 {
        let mut h = splitmix64(self.seed);
        for &label in &self.path {
            h = splitmix64(h ^ splitmix64(label.wrapping_add(0x632B_E59B_D9B4_E019)));
        }
        h
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut h = self.digest();
        for chunk in seed.chunks_exact_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    /// `n` standard-normal draws.
    pub fn gaussian(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// `n` uniform draws in `[0, 1)`.
    pub fn uniform(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..n).map(|_| rng.random::<f64>()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draws() {
        let k = RngKey::new(42).split("x").fold(3);
        assert_eq!(k.gaussian(100), k.clone().gaussian(100));
    }

    #[test]
    fn split_streams_differ() {
        let k = RngKey::new(42);
        assert_ne!(k.split("a").gaussian(16), k.split("b").gaussian(16));
        assert_ne!(k.fold(0).gaussian(16), k.fold(1).gaussian(16));
        assert_ne!(RngKey::new(1).gaussian(4), RngKey::new(2).gaussian(4));
    }

    #[test]
    fn interleaving_does_not_matter() {
        let k = RngKey::new(9);
        let a_first = k.split("a").gaussian(8);
        let _ = k.split("b").gaussian(1000);
        assert_eq!(a_first, k.split("a").gaussian(8));
    }

    #[test]
    fn gaussian_moments() {
        let xs = RngKey::new(2024).gaussian(100_000);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn uniform_range() {
        assert!(RngKey::new(5).uniform(10_000).iter().all(|u| (0.0..1.0).contains(u)));
    }
}

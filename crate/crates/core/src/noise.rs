//! Seeded noise streams. Samplers never draw noise internally; it is always
//! injected through this trait so runs are reproducible and finite-difference
//! tests can freeze it.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Supplier of standard-normal and open-interval uniform draws.
pub trait NoiseSource {
    /// `n` independent N(0, 1) draws.
    fn normals(&mut self, n: usize) -> Vec<f32>;
    /// `n` independent draws strictly inside (0, 1).
    fn uniforms(&mut self, n: usize) -> Vec<f32>;
}

/// Deterministic stream backed by ChaCha8; normals via Box-Muller.
#[derive(Debug, Clone)]
pub struct SeededNoise {
    rng: ChaCha8Rng,
}

impl SeededNoise {
    pub fn new(seed: u64) -> Self {
        SeededNoise { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform in the open interval (0, 1).
    fn open_unit(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        ((self.rng.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Bernoulli draw with success probability `p`.
    pub fn coin(&mut self, p: f32) -> bool {
        self.open_unit() < p as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f32, hi: f32) -> f32 {
        (lo as f64 + (hi - lo) as f64 * self.open_unit()) as f32
    }

    /// Seeded Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl NoiseSource for SeededNoise {
    fn normals(&mut self, n: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let u1 = self.open_unit();
            let u2 = self.open_unit();
            let r = libm::sqrt(-2.0 * libm::log(u1));
            let theta = 2.0 * core::f64::consts::PI * u2;
            out.push((r * libm::cos(theta)) as f32);
            if out.len() < n {
                out.push((r * libm::sin(theta)) as f32);
            }
        }
        out
    }

    fn uniforms(&mut self, n: usize) -> Vec<f32> {
        (0..n).map(|_| self.open_unit() as f32).collect()
    }
}

/// Fixed noise for tests: `normals`/`uniforms` replay the given vectors from
/// the start on every call.
#[derive(Debug, Clone)]
pub struct FrozenNoise {
    pub normal: Vec<f32>,
    pub uniform: Vec<f32>,
}

impl NoiseSource for FrozenNoise {
    fn normals(&mut self, n: usize) -> Vec<f32> {
        assert!(n <= self.normal.len(), "frozen normal stream too short");
        self.normal[..n].to_vec()
    }

    fn uniforms(&mut self, n: usize) -> Vec<f32> {
        assert!(n <= self.uniform.len(), "frozen uniform stream too short");
        self.uniform[..n].to_vec()
    }
}

/// Mix a base seed with a stream tag and an index into a new seed
/// (splitmix64 finalizer). Used to derive per-epoch and per-case streams.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = base ^ fnv1a(tag.as_bytes());
    h = h.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d049bb133111eb);
    h ^ (h >> 31)
}

/// FNV-1a over bytes; stable across platforms.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normals_have_roughly_standard_moments() {
        let mut src = SeededNoise::new(7);
        let xs = src.normals(200_000);
        let n = xs.len() as f64;
        let mean: f64 = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
        let var: f64 = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn uniforms_stay_strictly_inside_unit_interval() {
        let mut src = SeededNoise::new(3);
        for u in src.uniforms(100_000) {
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a = SeededNoise::new(42).normals(64);
        let b = SeededNoise::new(42).normals(64);
        assert_eq!(a, b);
    }

    #[test]
    fn shuffle_is_deterministic() {
        let mut a: Vec<u32> = (0..100).collect();
        let mut b: Vec<u32> = (0..100).collect();
        SeededNoise::new(5).shuffle(&mut a);
        SeededNoise::new(5).shuffle(&mut b);
        assert_eq!(a, b);
        assert_ne!(a, (0..100).collect::<Vec<u32>>());
    }
}

//! Reproducible randomness. Every consumer draws from a ChaCha8 stream keyed
//! by `(master_seed, domain, index)`; Brownian increments use a fixed number
//! of words per step, so the increment of a given step can be regenerated by
//! seeking the block counter.

use std::f64::consts::TAU;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent uses of the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Noise = 0,
    Checks = 1,
    Sampling = 2,
    TestFamily = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A generator for `(seed, domain, index)`; distinct indices are distinct
/// ChaCha streams of the same key.
pub fn keyed_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ (domain as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Pair of independent standard normals (Box–Muller, two words each).
pub fn normal_pair(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
    let u2 = uniform(rng);
    let rad = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    (rad * c, rad * s)
}

pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    normal_pair(rng).0
}

/// Brownian increments `ΔW_n ~ N(0, h·I_m)` of one path.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    path_index: u64,
    dim: usize,
    scale: f64,
    step: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, path_index: u64, dim: usize, h: f64) -> Self {
        NoiseStream {
            rng: keyed_rng(master_seed, Domain::Noise, path_index),
            path_index,
            dim,
            scale: h.sqrt(),
            step: 0,
        }
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the next increment to be drawn.
    pub fn step(&self) -> u64 {
        self.step
    }

    fn words_per_step(&self) -> u128 {
        // two u64 draws (four 32-bit words) per normal pair
        4 * self.dim.div_ceil(2) as u128
    }

    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * self.words_per_step());
        self.step = step;
    }

    /// Writes the next increment into `out` (length `dim`).
    pub fn next_into(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let mut j = 0;
        while j < self.dim {
            let (a, b) = normal_pair(&mut self.rng);
            out[j] = a * self.scale;
            if j + 1 < self.dim {
                out[j + 1] = b * self.scale;
            }
            j += 2;
        }
        self.step += 1;
    }

    pub fn increment_at(&self, step: u64) -> Vec<f64> {
        let mut probe = self.clone();
        probe.seek(step);
        let mut out = vec![0.0; self.dim];
        probe.next_into(&mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let mut s = NoiseStream::new(7, 3, 3, 0.01);
        let mut seq = Vec::new();
        for _ in 0..50 {
            let mut buf = vec![0.0; 3];
            s.next_into(&mut buf);
            seq.push(buf);
        }
        let fresh = NoiseStream::new(7, 3, 3, 0.01);
        for step in [0u64, 1, 17, 49] {
            assert_eq!(fresh.increment_at(step), seq[step as usize]);
        }
    }

    #[test]
    fn streams_differ_by_index_and_domain() {
        let a = NoiseStream::new(1, 0, 1, 1.0).increment_at(0);
        let b = NoiseStream::new(1, 1, 1, 1.0).increment_at(0);
        assert_ne!(a, b);
        let mut c = keyed_rng(1, Domain::Checks, 0);
        let mut d = keyed_rng(1, Domain::Noise, 0);
        assert_ne!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn increments_have_variance_h() {
        let h = 0.04;
        let mut s = NoiseStream::new(11, 0, 2, h);
        let n = 200_000;
        let (mut m, mut v) = (0.0, 0.0);
        let mut buf = [0.0; 2];
        for _ in 0..n {
            s.next_into(&mut buf);
            for x in buf {
                m += x;
                v += x * x;
            }
        }
        let cnt = 2.0 * n as f64;
        let mean = m / cnt;
        let var = v / cnt - mean * mean;
        assert!(mean.abs() < 4.0 * (h / cnt).sqrt());
        assert!((var - h).abs() < 4.0 * h * (2.0 / cnt).sqrt());
    }
}

//! Random segments for the falsification checks and property tests.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::fading_memory::Segment;
use crate::rng::{normal_pair, standard_normal, uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Constant,
    Smooth,
    PiecewiseConstant,
    Spiky,
    RandomWalk,
    /// `|φ(θ)| = A·e^{−rθ}`, which saturates the C_r norm at every point.
    Saturating,
}

impl Shape {
    pub const ALL: [Shape; 6] = [
        Shape::Constant,
        Shape::Smooth,
        Shape::PiecewiseConstant,
        Shape::Spiky,
        Shape::RandomWalk,
        Shape::Saturating,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Independent,
    Perturbed,
    Shifted,
    Equal,
}

fn log_uniform(rng: &mut impl RngCore, lo_exp: f64, hi_exp: f64) -> f64 {
    10f64.powf(lo_exp + (hi_exp - lo_exp) * uniform(rng))
}

fn below(rng: &mut impl RngCore, n: usize) -> usize {
    ((uniform(rng) * n as f64) as usize).min(n - 1)
}

fn gaussian_vec(rng: &mut impl RngCore, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * standard_normal(rng)).collect()
}

/// A segment of the given shape with amplitude log-uniform in `[1e-3, 1e2]`.
pub fn segment_of_shape(
    rng: &mut impl RngCore,
    shape: Shape,
    h: f64,
    depth: usize,
    dim: usize,
    r: f64,
) -> Segment {
    let amp = log_uniform(rng, -3.0, 2.0);
    let n = depth + 1;
    let mut values = vec![0.0; n * dim];
    match shape {
        Shape::Constant => {
            let v = gaussian_vec(rng, dim, amp);
            for p in values.chunks_mut(dim) {
                p.copy_from_slice(&v);
            }
        }
        Shape::Smooth => {
            for j in 0..dim {
                let modes: Vec<(f64, f64, f64)> = (0..3)
                    .map(|_| {
                        let (a, _) = normal_pair(rng);
                        (amp * a, 3.0 * uniform(rng), std::f64::consts::TAU * uniform(rng))
                    })
                    .collect();
                for i in 0..n {
                    let th = (i as f64 - depth as f64) * h;
                    values[i * dim + j] =
                        modes.iter().map(|(a, w, ph)| a * (w * th + ph).cos()).sum();
                }
            }
        }
        Shape::PiecewiseConstant => {
            let pieces = 1 + below(rng, 6);
            let mut cuts: Vec<usize> = (0..pieces - 1).map(|_| below(rng, n)).collect();
            cuts.push(n);
            cuts.sort_unstable();
            let mut start = 0;
            for end in cuts {
                let v = gaussian_vec(rng, dim, amp);
                for p in values[start * dim..end * dim].chunks_mut(dim) {
                    p.copy_from_slice(&v);
                }
                start = end;
            }
        }
        Shape::Spiky => {
            let base = gaussian_vec(rng, dim, amp * 1e-2);
            for p in values.chunks_mut(dim) {
                p.copy_from_slice(&base);
            }
            let spikes = 1 + below(rng, 3);
            for _ in 0..spikes {
                let at = if uniform(rng) < 0.3 { depth } else { below(rng, n) };
                let v = gaussian_vec(rng, dim, amp);
                values[at * dim..(at + 1) * dim].copy_from_slice(&v);
            }
        }
        Shape::RandomWalk => {
            let step = amp * h.sqrt();
            let mut cur = gaussian_vec(rng, dim, amp);
            for i in (0..n).rev() {
                values[i * dim..(i + 1) * dim].copy_from_slice(&cur);
                for c in cur.iter_mut() {
                    *c += step * standard_normal(rng);
                }
            }
        }
        Shape::Saturating => {
            let mut dir = gaussian_vec(rng, dim, 1.0);
            let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            dir.iter_mut().for_each(|x| *x /= len);
            for i in 0..n {
                let th = (i as f64 - depth as f64) * h;
                let s = amp * (-r * th).exp();
                for j in 0..dim {
                    values[i * dim + j] = s * dir[j];
                }
            }
        }
    }
    Segment::new(h, dim, values).expect("sampler produces finite values")
}

pub fn random_segment(
    rng: &mut impl RngCore,
    h: f64,
    depth: usize,
    dim: usize,
    r: f64,
) -> (Segment, Shape) {
    let shape = Shape::ALL[below(rng, Shape::ALL.len())];
    (segment_of_shape(rng, shape, h, depth, dim, r), shape)
}

/// A pair `(φ, ψ)`: independent, a small perturbation, a constant shift, or
/// identical.
pub fn random_pair(
    rng: &mut impl RngCore,
    h: f64,
    depth: usize,
    dim: usize,
    r: f64,
) -> (Segment, Segment, PairKind, Shape) {
    let (phi, shape) = random_segment(rng, h, depth, dim, r);
    let u = uniform(rng);
    if u < 0.3 {
        let (psi, _) = random_segment(rng, h, depth, dim, r);
        (phi, psi, PairKind::Independent, shape)
    } else if u < 0.7 {
        let (pert, _) = random_segment(rng, h, depth, dim, r);
        let rel = log_uniform(rng, -4.0, 0.0);
        let scale = rel * phi.sup_norm().max(1e-12) / pert.sup_norm().max(1e-300);
        let values = phi
            .values()
            .iter()
            .zip(pert.values())
            .map(|(a, b)| a + scale * b)
            .collect();
        let psi = Segment::new(h, dim, values).expect("finite");
        (phi, psi, PairKind::Perturbed, shape)
    } else if u < 0.95 {
        let size = log_uniform(rng, -3.0, 2.0);
        let shift = gaussian_vec(rng, dim, size);
        let values = phi
            .values()
            .chunks(dim)
            .flat_map(|p| p.iter().zip(&shift).map(|(a, s)| a + s).collect::<Vec<_>>())
            .collect();
        let psi = Segment::new(h, dim, values).expect("finite");
        (phi, psi, PairKind::Shifted, shape)
    } else {
        let psi = phi.clone();
        (phi, psi, PairKind::Equal, shape)
    }
}

//! Lower-bound estimates of the bounded-Lipschitz distance between two
//! samples of segments.
//!
//! Each test functional is `g(φ) = clip(a₀ + Σᵢ aᵢ·e^{rθᵢ}φ(θᵢ), −1, 1)` with
//! `Σᵢ |aᵢ| = 1`, so `|g| ≤ 1` and `|g(φ) − g(ψ)| ≤ ‖φ − ψ‖_∞`. The estimate
//! is the largest `|mean_A g − mean_B g|` over a random family, which never
//! exceeds the true distance.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading_memory::Segment;
use crate::rng::{keyed_rng, standard_normal, uniform, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctional {
    pub a0: f64,
    /// `(point index, coefficient already multiplied by e^{rθ})`
    pub taps: Vec<(usize, Vec<f64>)>,
}

impl TestFunctional {
    /// Functional `j` of the family keyed by `seed`, for segments with
    /// `depth + 1` points of dimension `dim` on step `h`.
    pub fn draw(seed: u64, j: u64, depth: usize, dim: usize, h: f64, r: f64) -> Self {
        let mut rng = keyed_rng(seed, Domain::TestFamily, j);
        let a0 = 2.0 * uniform(&mut rng) - 1.0;
        let count = if uniform(&mut rng) < 0.5 { 1 } else { 2 + below(&mut rng, 7) };
        let mut weights: Vec<f64> = (0..count).map(|_| -(1.0 - uniform(&mut rng)).ln()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let taps = weights
            .into_iter()
            .map(|w| {
                let idx = if uniform(&mut rng) < 0.25 { depth } else { below(&mut rng, depth + 1) };
                let mut dir: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
                let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let theta = (idx as f64 - depth as f64) * h;
                let scale = w * (r * theta).exp() / len;
                dir.iter_mut().for_each(|v| *v *= scale);
                (idx, dir)
            })
            .collect();
        TestFunctional { a0, taps }
    }

    pub fn eval(&self, seg: &Segment) -> f64 {
        let mut v = self.a0;
        for (idx, a) in &self.taps {
            v += a.iter().zip(seg.point(*idx)).map(|(c, x)| c * x).sum::<f64>();
        }
        v.clamp(-1.0, 1.0)
    }
}

fn below(rng: &mut impl RngCore, n: usize) -> usize {
    ((uniform(rng) * n as f64) as usize).min(n - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlEstimate {
    /// Lower bound on `d_L`, in `[0, 2]`.
    pub estimate: f64,
    pub family_size: usize,
    /// Index of the functional attaining the maximum.
    pub best: usize,
}

fn mean(g: &TestFunctional, segs: &[Segment]) -> f64 {
    segs.iter().map(|s| g.eval(s)).sum::<f64>() / segs.len() as f64
}

/// Estimates `d_L(law(A), law(B))` from below with `family_size` random
/// functionals keyed by `seed`.
pub fn empirical_dl(
    a: &[Segment],
    b: &[Segment],
    r: f64,
    family_size: usize,
    seed: u64,
) -> Result<DlEstimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("both samples must be non-empty".into()));
    }
    if family_size == 0 {
        return Err(Error::InvalidParameter("family_size must be at least 1".into()));
    }
    let proto = &a[0];
    if let Some(bad) = a.iter().chain(b).find(|s| !s.same_shape(proto)) {
        return Err(Error::ShapeMismatch(format!(
            "segment of depth {} and dim {} vs depth {} and dim {}",
            bad.depth(),
            bad.dim(),
            proto.depth(),
            proto.dim()
        )));
    }
    let (depth, dim, h) = (proto.depth(), proto.dim(), proto.grid_step());
    let gaps: Vec<f64> = (0..family_size as u64)
        .into_par_iter()
        .map(|j| {
            let g = TestFunctional::draw(seed, j, depth, dim, h, r);
            (mean(&g, a) - mean(&g, b)).abs()
        })
        .collect();
    let mut best = 0;
    for (i, v) in gaps.iter().enumerate() {
        if *v > gaps[best] {
            best = i;
        }
    }
    Ok(DlEstimate { estimate: gaps[best], family_size, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constants(v: f64, n: usize) -> Vec<Segment> {
        vec![Segment::constant(0.5, 20, &[v]).unwrap(); n]
    }

    #[test]
    fn identical_samples_give_zero() {
        let a = constants(0.3, 5);
        assert_eq!(empirical_dl(&a, &a, 0.25, 200, 1).unwrap().estimate, 0.0);
    }

    #[test]
    fn point_masses_are_calibrated() {
        for (gap, expect) in [(0.5, 0.5), (1.0, 1.0), (5.0, 2.0)] {
            let e = empirical_dl(&constants(0.0, 1), &constants(gap, 1), 0.25, 1000, 7).unwrap();
            assert!((e.estimate - expect).abs() <= 0.05, "{gap}: {e:?}");
            assert!(e.estimate <= expect + 1e-12);
        }
    }

    #[test]
    fn functionals_are_lipschitz_and_bounded() {
        let a = Segment::from_scalar_fn(0.5, 20, |t| (3.0 * t).sin() * 4.0).unwrap();
        let b = Segment::from_scalar_fn(0.5, 20, |t| t.cos()).unwrap();
        let d = a.sub(&b).unwrap().sup_norm();
        for j in 0..500 {
            let g = TestFunctional::draw(3, j, 20, 1, 0.5, 0.25);
            let (ga, gb) = (g.eval(&a), g.eval(&b));
            assert!(ga.abs() <= 1.0 && gb.abs() <= 1.0);
            assert!((ga - gb).abs() <= d + 1e-12);
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = constants(0.0, 2);
        let b = vec![Segment::constant(0.5, 10, &[0.0]).unwrap()];
        assert!(matches!(empirical_dl(&a, &b, 0.25, 10, 0), Err(Error::ShapeMismatch(_))));
        assert!(empirical_dl(&a, &[], 0.25, 10, 0).is_err());
    }
}

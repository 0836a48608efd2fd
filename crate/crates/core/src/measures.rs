//! Fading probability measures on `(-∞, 0]`: finite mixtures of point masses
//! and exponential densities `ρ e^{ρθ}`, with closed-form exponential moments
//! and a grid quadrature that integrates segments against the measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading_memory::{euclid_sq, Segment};

/// Tolerance on the total weight of a measure.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Default truncation tolerance, relative to `μ^(2r)`.
pub const DEFAULT_TOL_TAIL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub theta: f64,
    pub w: f64,
}

/// Density `w·ρ·e^{ρθ}` on `(-∞, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpComponent {
    pub rho: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct FadingMeasure {
    atoms: Vec<Atom>,
    exp: Vec<ExpComponent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    #[serde(default)]
    atoms: Vec<Atom>,
    #[serde(default)]
    exp: Vec<ExpComponent>,
}

impl TryFrom<RawMeasure> for FadingMeasure {
    type Error = Error;
    fn try_from(raw: RawMeasure) -> Result<Self> {
        FadingMeasure::new(raw.atoms, raw.exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMode {
    /// `∫ φ(θ) μ(dθ)`
    Linear,
    /// `∫ |φ(θ)|² μ(dθ)`
    Squared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    /// `d` components in linear mode, a single entry in squared mode.
    pub value: Vec<f64>,
    /// Bound on the contribution of the history older than the window.
    pub error_bound: f64,
}

/// Quadrature weights of one exponential component over a single slice
/// `[-h, 0]` for the linear interpolant: `(newest, older)`.
pub(crate) fn slice_weights(rho: f64, h: f64) -> (f64, f64) {
    let a = rho * h;
    let em = -(-a).exp_m1();
    let w_new = if a < 1e-3 {
        a / 2.0 - a * a / 6.0 + a * a * a / 24.0 - a * a * a * a / 120.0
    } else {
        1.0 - em / a
    };
    (w_new, em - w_new)
}

impl FadingMeasure {
    pub fn new(atoms: Vec<Atom>, exp: Vec<ExpComponent>) -> Result<Self> {
        if atoms.is_empty() && exp.is_empty() {
            return Err(Error::InvalidMeasure("no components".into()));
        }
        for a in &atoms {
            if !(a.theta <= 0.0 && a.theta.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom delay {} must be <= 0", a.theta)));
            }
            if !(a.w > 0.0 && a.w.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom weight {} must be > 0", a.w)));
            }
        }
        for e in &exp {
            if !(e.rho > 0.0 && e.rho.is_finite()) {
                return Err(Error::InvalidMeasure(format!("rate {} must be > 0", e.rho)));
            }
            if !(e.w > 0.0 && e.w.is_finite()) {
                return Err(Error::InvalidMeasure(format!("weight {} must be > 0", e.w)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.w).chain(exp.iter().map(|e| e.w)).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(FadingMeasure { atoms, exp })
    }

    pub fn atom(theta: f64) -> Result<Self> {
        FadingMeasure::new(vec![Atom { theta, w: 1.0 }], vec![])
    }

    pub fn exponential(rho: f64) -> Result<Self> {
        FadingMeasure::new(vec![], vec![ExpComponent { rho, w: 1.0 }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn exp_components(&self) -> &[ExpComponent] {
        &self.exp
    }

    /// `μ^(r) = ∫ e^{-rθ} μ(dθ)`; `+∞` when some rate `ρ <= r`.
    pub fn r_moment(&self, r: f64) -> f64 {
        if self.exp.iter().any(|e| e.rho <= r) {
            return f64::INFINITY;
        }
        // divided by the total weight summed in the same order, so that
        // `μ^(0)` is exactly 1 and the result is monotone in `r`
        let atoms: f64 = self.atoms.iter().map(|a| a.w * (-r * a.theta).exp()).sum();
        let dens: f64 = self.exp.iter().map(|e| e.w * (e.rho / (e.rho - r))).sum();
        let atoms_w: f64 = self.atoms.iter().map(|a| a.w).sum();
        let dens_w: f64 = self.exp.iter().map(|e| e.w).sum();
        (atoms + dens) / (atoms_w + dens_w)
    }

    pub fn in_mr(&self, r: f64) -> bool {
        self.r_moment(r).is_finite()
    }

    pub(crate) fn check_in_mr(&self, r: f64) -> Result<f64> {
        match self.exp.iter().find(|e| e.rho <= r) {
            Some(e) => Err(Error::NotInMr { r, rho: e.rho }),
            None => Ok(self.r_moment(r)),
        }
    }

    /// `∫_{-∞}^{-T} e^{-sθ} μ(dθ)`.
    pub fn tail(&self, s: f64, span: f64) -> f64 {
        let cut = -span - 1e-12 * span.max(1.0);
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.theta < cut)
            .map(|a| a.w * (-s * a.theta).exp())
            .sum();
        let mut dens = 0.0;
        for e in &self.exp {
            if e.rho <= s {
                return f64::INFINITY;
            }
            dens += e.w * e.rho / (e.rho - s) * (-(e.rho - s) * span).exp();
        }
        atoms + dens
    }

    /// Smallest window length `T` with `∫_{-∞}^{-T} e^{-2rθ} μ(dθ) < tol`;
    /// each of the `J` exponential components gets `tol/J`.
    pub fn required_depth(&self, r: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tail tolerance {tol} must be positive")));
        }
        let s = 2.0 * r;
        self.check_in_mr(s)?;
        let mut span = self.atoms.iter().map(|a| -a.theta).fold(0.0, f64::max);
        let share = tol / self.exp.len().max(1) as f64;
        for e in &self.exp {
            let gap = e.rho - s;
            let lead = e.w * e.rho / gap;
            if lead >= share {
                // strict inequality: nudge past the root
                let t = (lead / share).ln() / gap;
                span = span.max(t * (1.0 + 1e-12) + 1e-12);
            }
        }
        Ok(span)
    }

    /// Grid intervals needed so that `depth·h` covers [`Self::required_depth`].
    pub fn required_grid_depth(&self, r: f64, tol: f64, h: f64) -> Result<usize> {
        let span = self.required_depth(r, tol)?;
        Ok(((span / h) - 1e-9).ceil().max(1.0) as usize)
    }

    /// Per-point weights `W_i` with `∫ φ dμ ≈ Σ_i W_i φ(θ_i)` on the grid of
    /// `depth + 1` points ending at zero.
    ///
    /// Exponential components integrate the linear interpolant exactly; mass
    /// older than the window sits on the oldest point. Atoms interpolate
    /// linearly. The weights are non-negative and sum to one up to rounding.
    pub fn quadrature_weights(&self, h: f64, depth: usize) -> Vec<f64> {
        let mut w = vec![0.0; depth + 1];
        let theta = |i: usize| -((depth - i) as f64) * h;
        for e in &self.exp {
            let (w_new, w_old) = slice_weights(e.rho, h);
            for k in 1..=depth {
                let f = e.w * (e.rho * theta(k)).exp();
                w[k] += f * w_new;
                w[k - 1] += f * w_old;
            }
            w[0] += e.w * (e.rho * theta(0)).exp();
        }
        let start = theta(0);
        for a in &self.atoms {
            if a.theta <= start {
                w[0] += a.w;
                continue;
            }
            let p = (a.theta - start) / h;
            let i = (p.floor() as usize).min(depth - 1);
            let f = (p - i as f64).clamp(0.0, 1.0);
            w[i] += a.w * (1.0 - f);
            w[i + 1] += a.w * f;
        }
        w
    }

    /// Integrates a segment against the measure, refusing windows whose
    /// `e^{-2rθ}`-weighted tail is not below `tol_tail`.
    pub fn integrate_segment(
        &self,
        seg: &Segment,
        mode: IntegrationMode,
        r: f64,
        tol_tail: f64,
    ) -> Result<Integral> {
        let span = seg.memory_span();
        let tail2 = self.tail(2.0 * r, span);
        let norm = seg.cr_norm(r)?;
        if !(tail2 < tol_tail) {
            return Err(Error::Truncation {
                tail: tail2,
                tol: tol_tail,
                bound: 2.0 * norm * norm * tail2,
            });
        }
        let weights = self.quadrature_weights(seg.grid_step(), seg.depth());
        Ok(match mode {
            IntegrationMode::Linear => Integral {
                value: weighted_sum(&weights, seg),
                error_bound: 2.0 * norm * self.tail(r, span),
            },
            IntegrationMode::Squared => Integral {
                value: vec![weighted_sq(&weights, seg)],
                error_bound: 2.0 * norm * norm * tail2,
            },
        })
    }
}

pub(crate) fn weighted_sum(weights: &[f64], seg: &Segment) -> Vec<f64> {
    let d = seg.dim();
    let mut out = vec![0.0; d];
    for (w, p) in weights.iter().zip(seg.values().chunks_exact(d)) {
        for (o, v) in out.iter_mut().zip(p) {
            *o += w * v;
        }
    }
    out
}

pub(crate) fn weighted_sq(weights: &[f64], seg: &Segment) -> f64 {
    weights
        .iter()
        .zip(seg.values().chunks_exact(seg.dim()))
        .map(|(w, p)| w * euclid_sq(p))
        .sum()
}

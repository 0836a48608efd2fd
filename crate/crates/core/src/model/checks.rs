//! Randomized falsification of the contraction, drift, diffusion and
//! monotone conditions. A pass means no violation was found among the
//! sampled segments, nothing more.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ledger::ConstantLedger;
use super::sampler::{random_pair, PairKind, Shape};
use super::{diff_sq, dot, norm_sq, GridModel, NeutralModel};
use crate::error::{Error, Result};
use crate::fading_memory::Segment;
use crate::measures::DEFAULT_TOL_TAIL;
use crate::rng::{keyed_rng, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "CheckConfig::default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "CheckConfig::default_grid_step")]
    pub grid_step: f64,
    /// Relative tolerance on each inequality.
    #[serde(default = "CheckConfig::default_tol")]
    pub tol: f64,
    /// Tail tolerance relative to `μ^(2r)`.
    #[serde(default = "CheckConfig::default_tol_tail")]
    pub tol_tail: f64,
}

impl CheckConfig {
    fn default_trials() -> usize {
        10_000
    }
    fn default_grid_step() -> f64 {
        0.05
    }
    fn default_tol() -> f64 {
        1e-9
    }
    fn default_tol_tail() -> f64 {
        DEFAULT_TOL_TAIL
    }

    pub fn with_trials(trials: usize, seed: u64) -> Self {
        CheckConfig { trials, seed, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.grid_step > 0.0 && self.tol >= 0.0 && self.tol_tail > 0.0) {
            return Err(Error::InvalidParameter(
                "grid_step and tol_tail must be positive, tol non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            trials: Self::default_trials(),
            seed: 0,
            grid_step: Self::default_grid_step(),
            tol: Self::default_tol(),
            tol_tail: Self::default_tol_tail(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trial: usize,
    pub shape: Option<Shape>,
    pub pair_kind: Option<PairKind>,
    pub lhs: f64,
    pub rhs: f64,
    pub phi: Segment,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub condition: String,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    /// Largest `lhs / rhs` seen (for ratio-type conditions).
    pub max_ratio: Option<f64>,
    /// Largest relative violation `(lhs − rhs) / scale`; positive beyond
    /// `tol` means falsified.
    pub max_excess: f64,
    pub worst_trial: usize,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub note: String,
}

#[derive(Clone, Copy)]
struct Sample {
    lhs: f64,
    rhs: f64,
    ratio: Option<f64>,
    excess: f64,
}

/// What one trial looks at.
struct Draw {
    phi: Segment,
    psi: Segment,
    shape: Option<Shape>,
    kind: Option<PairKind>,
}

fn draw(cfg: &CheckConfig, grid: &GridModel<'_>, trial: usize) -> Draw {
    let model = grid.model();
    let (h, depth, d) = (grid.grid_step(), grid.depth(), model.dim());
    if trial == 0 {
        // the degenerate case every condition must accept
        let zero = Segment::constant(h, depth, &vec![0.0; d]).expect("finite");
        return Draw { phi: zero.clone(), psi: zero, shape: Some(Shape::Constant), kind: Some(PairKind::Equal) };
    }
    let mut rng = keyed_rng(cfg.seed, Domain::Checks, trial as u64);
    let (phi, psi, kind, shape) = random_pair(&mut rng, h, depth, d, model.r());
    Draw { phi, psi, shape: Some(shape), kind: Some(kind) }
}

fn grid_for<'a>(model: &'a NeutralModel, cfg: &CheckConfig) -> Result<GridModel<'a>> {
    cfg.validate()?;
    let mu = model.measure();
    let mu2r = mu.check_in_mr(2.0 * model.r())?;
    let depth = mu.required_grid_depth(model.r(), cfg.tol_tail * mu2r, cfg.grid_step)?;
    Ok(model.on_grid(cfg.grid_step, depth))
}

fn run<F>(
    condition: &str,
    cfg: &CheckConfig,
    grid: &GridModel<'_>,
    pairwise: bool,
    eval: F,
) -> Result<CheckReport>
where
    F: Fn(&Draw) -> Result<Sample> + Sync,
{
    let samples: Vec<Sample> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| eval(&draw(cfg, grid, t)))
        .collect::<Result<_>>()?;
    // ties go to the lowest trial index, independent of scheduling
    let mut worst = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.excess > samples[worst].excess {
            worst = i;
        }
    }
    let max_ratio = samples.iter().filter_map(|s| s.ratio).fold(None, |m: Option<f64>, r| {
        Some(m.map_or(r, |m| m.max(r)))
    });
    let max_excess = samples[worst].excess;
    let pass = max_excess <= cfg.tol;
    let witness = (!pass).then(|| {
        let d = draw(cfg, grid, worst);
        Witness {
            trial: worst,
            shape: d.shape,
            pair_kind: if pairwise { d.kind } else { None },
            lhs: samples[worst].lhs,
            rhs: samples[worst].rhs,
            phi: d.phi,
            psi: pairwise.then_some(d.psi),
        }
    });
    let note = if pass {
        format!("no violation in {} sampled cases (falsification test, not a proof)", cfg.trials)
    } else {
        format!("violated at trial {worst} by relative excess {max_excess:.3e}")
    };
    Ok(CheckReport {
        condition: condition.into(),
        trials: cfg.trials,
        seed: cfg.seed,
        tol: cfg.tol,
        max_ratio,
        max_excess,
        worst_trial: worst,
        pass,
        witness,
        note,
    })
}

/// Ratio-type comparison `lhs ≤ rhs`; `0/0` passes and `x/0` fails outright.
fn ratio_sample(lhs: f64, rhs: f64) -> Sample {
    if rhs > 0.0 {
        let ratio = lhs / rhs;
        Sample { lhs, rhs, ratio: Some(ratio), excess: ratio - 1.0 }
    } else if lhs > 0.0 {
        Sample { lhs, rhs, ratio: None, excess: f64::MAX }
    } else {
        Sample { lhs, rhs, ratio: None, excess: 0.0 }
    }
}

/// Signed comparison `lhs ≤ rhs` scaled by the magnitude of the terms.
fn signed_sample(lhs: f64, rhs: f64, scale: f64) -> Sample {
    let excess = if scale > 0.0 { (lhs - rhs) / scale } else { 0.0 };
    Sample { lhs, rhs, ratio: None, excess }
}

/// `|D(φ) − D(ψ)|² ≤ k ∫ |φ − ψ|² dμ`
pub fn verify_h1(model: &NeutralModel, cfg: &CheckConfig) -> Result<CheckReport> {
    let grid = grid_for(model, cfg)?;
    let k = model.declared().k;
    let mut rep = run("H1", cfg, &grid, true, |d| {
        let diff = d.phi.sub(&d.psi)?;
        let lhs = norm_sq(&grid.neutral(&diff)?);
        let rhs = k * grid.integral_sq(&diff)?;
        Ok(ratio_sample(lhs, rhs))
    })?;
    // report the ratio against ∫|Δ|² so it compares directly with k
    rep.max_ratio = rep.max_ratio.map(|r| r * k);
    Ok(rep)
}

/// `[Δ(0) − (D(φ) − D(ψ))]ᵀ[b(φ) − b(ψ)] ≤ −λ₁|Δ(0)|² + λ₂ ∫|Δ|² dμ`
pub fn verify_h2_drift(model: &NeutralModel, cfg: &CheckConfig) -> Result<CheckReport> {
    let grid = grid_for(model, cfg)?;
    let p = model.declared();
    run("H2 drift", cfg, &grid, true, |d| {
        let diff = d.phi.sub(&d.psi)?;
        let dd: Vec<f64> = diff
            .at_zero()
            .iter()
            .zip(grid.neutral(&diff)?)
            .map(|(x, n)| x - n)
            .collect();
        let db: Vec<f64> = grid
            .drift(&d.phi)?
            .iter()
            .zip(grid.drift(&d.psi)?)
            .map(|(a, b)| a - b)
            .collect();
        let lhs = dot(&dd, &db);
        let a = p.lambda1 * norm_sq(diff.at_zero());
        let b = p.lambda2 * grid.integral_sq(&diff)?;
        Ok(signed_sample(lhs, b - a, lhs.abs() + a + b))
    })
}

/// `|σ(φ) − σ(ψ)|² ≤ λ₃|Δ(0)|² + λ₄ ∫|Δ|² dμ` in the trace norm.
pub fn verify_h2_diffusion(model: &NeutralModel, cfg: &CheckConfig) -> Result<CheckReport> {
    let grid = grid_for(model, cfg)?;
    let p = model.declared();
    run("H2 diffusion", cfg, &grid, true, |d| {
        let diff = d.phi.sub(&d.psi)?;
        let lhs = (grid.diffusion(&d.phi)? - grid.diffusion(&d.psi)?).norm_squared();
        let rhs = p.lambda3 * norm_sq(diff.at_zero()) + p.lambda4 * grid.integral_sq(&diff)?;
        Ok(ratio_sample(lhs, rhs))
    })
}

/// `2[φ(0) − D(φ)]ᵀ b(φ) + |σ(φ)|² ≤ −α₁|φ(0)|² + α₂ ∫|φ|² dμ + N`
pub fn monotone_check(
    model: &NeutralModel,
    ledger: &ConstantLedger,
    cfg: &CheckConfig,
) -> Result<CheckReport> {
    let grid = grid_for(model, cfg)?;
    run("monotone", cfg, &grid, false, |d| {
        let phi = &d.phi;
        let y: Vec<f64> =
            phi.at_zero().iter().zip(grid.neutral(phi)?).map(|(x, n)| x - n).collect();
        let lhs = 2.0 * dot(&y, &grid.drift(phi)?) + grid.diffusion(phi)?.norm_squared();
        let a = ledger.alpha1 * norm_sq(phi.at_zero());
        let b = ledger.alpha2 * grid.integral_sq(phi)?;
        let scale = lhs.abs() + a.abs() + b.abs() + ledger.n_const.abs();
        Ok(signed_sample(lhs, -a + b + ledger.n_const, scale))
    })
}

/// `|ξ(0) − D(ξ)|² ≤ M‖ξ‖²_r` and its pairwise analogue, on sampled segments.
/// Returns the largest observed `lhs / (M‖·‖²_r)` for the single and the
/// pairwise form.
pub fn neutral_bound_ratios(
    model: &NeutralModel,
    cfg: &CheckConfig,
) -> Result<(f64, f64)> {
    let grid = grid_for(model, cfg)?;
    let m = (1.0 + model.declared().k) * (1.0 + model.measure().r_moment(2.0 * model.r()));
    let r = model.r();
    let ratios: Vec<(f64, f64)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let d = draw(cfg, &grid, t);
            let single = {
                let n = d.phi.cr_norm(r)?;
                let lhs = grid.transformed_sq(&d.phi)?;
                if n > 0.0 { lhs / (m * n * n) } else { 0.0 }
            };
            let pair = {
                let diff = d.phi.sub(&d.psi)?;
                let n = diff.cr_norm(r)?;
                let lhs = diff_sq(diff.at_zero(), &grid.neutral(&diff)?);
                if n > 0.0 { lhs / (m * n * n) } else { 0.0 }
            };
            Ok((single, pair))
        })
        .collect::<Result<_>>()?;
    Ok(ratios.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (f64::max(a, x), f64::max(b, y))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeclaredParams, ExampleConstants};

    fn ex5(c: f64) -> NeutralModel {
        NeutralModel::example5(c, 1.0, 1.0, 0.25, ExampleConstants::Stated).unwrap()
    }

    fn cfg(trials: usize) -> CheckConfig {
        CheckConfig { trials, seed: 1, grid_step: 0.1, ..Default::default() }
    }

    fn with(model: &NeutralModel, f: impl FnOnce(&mut DeclaredParams)) -> NeutralModel {
        let mut p = model.declared();
        f(&mut p);
        model.with_declared(p).unwrap()
    }

    #[test]
    fn h1_passes_at_quarter_and_fails_below() {
        let m = ex5(10.0);
        let rep = verify_h1(&m, &cfg(2000)).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.max_ratio.unwrap() <= 0.25 * (1.0 + 1e-9));
        let bad = verify_h1(&with(&m, |p| p.k = 0.1), &cfg(2000)).unwrap();
        assert!(!bad.pass);
        let w = bad.witness.unwrap();
        assert!(w.psi.is_some());
        assert!(w.lhs > w.rhs);
        assert!(bad.max_ratio.unwrap() > 0.24);
    }

    #[test]
    fn drift_constants_as_printed_are_falsified() {
        // with a constant difference the neutral cross term gives −c/2, not −3c/4
        let m = ex5(10.0);
        let rep = verify_h2_drift(&m, &cfg(2000)).unwrap();
        assert!(!rep.pass);
        let fixed = NeutralModel::example5(10.0, 1.0, 1.0, 0.25, ExampleConstants::Corrected).unwrap();
        assert!(verify_h2_drift(&fixed, &cfg(2000)).unwrap().pass);
        let doubled = with(&fixed, |p| p.lambda1 = 20.0);
        assert!(!verify_h2_drift(&doubled, &cfg(2000)).unwrap().pass);
    }

    #[test]
    fn diffusion_check() {
        let m = ex5(10.0);
        assert!(verify_h2_diffusion(&m, &cfg(2000)).unwrap().pass);
        let weak = with(&m, |p| {
            p.lambda3 = 0.5;
            p.lambda4 = 0.5
        });
        let rep = verify_h2_diffusion(&weak, &cfg(2000)).unwrap();
        assert!(!rep.pass);
        assert!(rep.witness.is_some());
    }

    #[test]
    fn reports_are_deterministic() {
        let m = ex5(10.0);
        let a = verify_h2_diffusion(&m, &cfg(500)).unwrap();
        let b = verify_h2_diffusion(&m, &cfg(500)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(verify_h1(&ex5(1.0), &cfg(0)).is_err());
    }
}

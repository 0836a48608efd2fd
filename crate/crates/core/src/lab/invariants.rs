//! Pathwise inequalities and ledger bound checks.

use serde::{Deserialize, Serialize};

use super::bounds::BoundCheck;
use super::coupling::CouplingReport;
use super::{second_moment_curve, segment_norm_curve};
use crate::error::{Error, Result};
use crate::fading_memory::Path;
use crate::integrator::Ensemble;
use crate::model::{diff_sq, norm_sq, ConstantLedger, NeutralModel};

/// One pathwise inequality `lhs(t) ≤ rhs(t)` tracked over all steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityTrace {
    /// Largest `lhs − rhs − slack`; non-positive means the inequality holds.
    pub max_excess: f64,
    /// Time where `max_excess` is attained.
    pub worst_t: f64,
    pub pass: bool,
}

impl InequalityTrace {
    fn new() -> Self {
        InequalityTrace { max_excess: f64::NEG_INFINITY, worst_t: 0.0, pass: true }
    }

    fn record(&mut self, t: f64, lhs: f64, rhs: f64, slack: f64) {
        let e = lhs - rhs - slack;
        if e > self.max_excess {
            self.max_excess = e;
            self.worst_t = t;
        }
        self.pass &= e <= 0.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathInvariants {
    /// `∫₀^t∫|x(s+θ)|²μ(dθ)ds ≤ (1/2r)‖ξ‖²_r μ^(2r) + ∫₀^t|x(s)|²ds`
    pub occupation: InequalityTrace,
    /// `sup_{s≤t}|x(s)|² ≤ k₁‖ξ‖²_r + k₂ sup_{s≤t}|x(s) − D(x_s)|²`
    pub neutral_sup: InequalityTrace,
    pub pass: bool,
}

/// Checks both pathwise inequalities at every step of `path`. Time integrals
/// are left Riemann sums; the slack is `h` times the right side.
pub fn check_path_invariants(
    model: &NeutralModel,
    path: &Path,
    ledger: &ConstantLedger,
) -> Result<PathInvariants> {
    let xi = path.pre_history();
    if xi.dim() != model.dim() {
        return Err(Error::ShapeMismatch("path and model differ in dimension".into()));
    }
    let h = path.grid_step();
    let r = model.r();
    let grid = model.on_grid(h, xi.depth());
    let xi_norm = xi.cr_norm(r)?;
    let xi_sq = xi_norm * xi_norm;
    let head = xi_sq * ledger.mu2r / (2.0 * r);

    let mut occupation = InequalityTrace::new();
    let mut neutral_sup = InequalityTrace::new();
    let (mut lhs_int, mut rhs_int) = (0.0, 0.0);
    let (mut sup_x, mut sup_y) = (0.0f64, 0.0f64);
    for n in 0..path.steps() {
        let seg = path.segment_at_step(n)?;
        lhs_int += h * grid.integral_sq(&seg)?;
        rhs_int += h * norm_sq(seg.at_zero());
        let t = (n + 1) as f64 * h;
        let rhs = head + rhs_int;
        occupation.record(t, lhs_int, rhs, h * rhs);

        let next = path.segment_at_step(n + 1)?;
        let x = next.at_zero();
        let y = diff_sq(x, &grid.neutral(&next)?);
        sup_x = sup_x.max(norm_sq(x));
        sup_y = sup_y.max(y);
        let rhs = ledger.k1 * xi_sq + ledger.k2 * sup_y;
        neutral_sup.record(t, sup_x, rhs, h * rhs);
    }
    let pass = occupation.pass && neutral_sup.pass;
    Ok(PathInvariants { occupation, neutral_sup, pass })
}

/// `E|x(t)|² ≤ C₁ + C₂‖ξ‖²_r e^{−λt}`
pub fn moment_bound_check(ens: &Ensemble, ledger: &ConstantLedger) -> BoundCheck {
    let xi = ens.initial_norm_sq;
    BoundCheck::evaluate("second_moment", &second_moment_curve(ens), ens.h, |t| {
        ledger.moment_bound(t, xi)
    })
}

/// `E‖x_t‖²_r ≤ C₄ + C₅‖ξ‖²_r e^{−λt}`
pub fn segment_bound_check(ens: &Ensemble, ledger: &ConstantLedger) -> BoundCheck {
    let xi = ens.initial_norm_sq;
    BoundCheck::evaluate("segment_norm", &segment_norm_curve(ens), ens.h, |t| {
        ledger.segment_bound(t, xi)
    })
}

/// `E sup_{s≤t}|Δ(s)|² ≤ C₃‖ξ − η‖²_r e^{−λt}` on the running sup.
pub fn coupling_bound_check(rep: &CouplingReport, ledger: &ConstantLedger, h: f64) -> BoundCheck {
    let d = rep.initial_diff_norm_sq;
    BoundCheck::evaluate("coupling_running_sup", &rep.running_sup_curve(), h, |t| {
        ledger.coupling_bound(t, d)
    })
}

/// `E‖Δ_t‖²_r ≤ C₆‖ξ − η‖²_r e^{−λt}`
pub fn segment_coupling_bound_check(
    rep: &CouplingReport,
    ledger: &ConstantLedger,
    h: f64,
) -> BoundCheck {
    let d = rep.initial_diff_norm_sq;
    BoundCheck::evaluate("coupling_segment_norm", &rep.segment_norm_curve(), h, |t| {
        ledger.segment_coupling_bound(t, d)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading_memory::InitialData;
    use crate::integrator::{simulate_ensemble, EnsembleOptions, SchemeConfig};
    use crate::model::{EpsChoice, ExampleConstants};

    #[test]
    fn invariants_hold_on_example_paths() {
        let model = NeutralModel::example5(450.0, 2f64.sqrt(), 1.0, 0.25, ExampleConstants::Stated).unwrap();
        let ledger = ConstantLedger::compute(&model, EpsChoice::Search, None).unwrap();
        let cfg = SchemeConfig::new(0.01, 2.0, 5);
        let xi = cfg.initial_segment(&model, &InitialData::constant(&[1.0])).unwrap();
        let opts = EnsembleOptions::at(&[1.0, 2.0]).with_paths();
        let ens = simulate_ensemble(&model, &xi, 4, &cfg, &opts).unwrap();
        for p in ens.paths.as_ref().unwrap() {
            let inv = check_path_invariants(&model, p, &ledger).unwrap();
            assert!(inv.pass, "{inv:?}");
        }
        assert!(moment_bound_check(&ens, &ledger).pass);
        assert!(segment_bound_check(&ens, &ledger).pass);
    }

    #[test]
    fn a_wrong_ledger_is_caught() {
        let model = NeutralModel::example5(450.0, 2f64.sqrt(), 1.0, 0.25, ExampleConstants::Stated).unwrap();
        let mut ledger = ConstantLedger::compute(&model, EpsChoice::Search, None).unwrap();
        ledger.k1 = 0.0;
        ledger.k2 = 0.0;
        let cfg = SchemeConfig::new(0.01, 0.5, 5);
        let xi = cfg.initial_segment(&model, &InitialData::constant(&[1.0])).unwrap();
        let path = crate::integrator::simulate_path(
            &model,
            &xi,
            &cfg,
            &mut crate::rng::NoiseStream::new(5, 0, 1, 0.01),
        )
        .unwrap();
        let inv = check_path_invariants(&model, &path, &ledger).unwrap();
        assert!(!inv.neutral_sup.pass && inv.neutral_sup.max_excess > 0.0);
    }
}

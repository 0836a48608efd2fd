//! Monte Carlo diagnostics: moment curves, ledger bound checks, coupling
//! decay and distances between segment laws.

use serde::{Deserialize, Serialize};

use crate::integrator::{Ensemble, Estimate};

pub mod bounds;
pub mod coupling;
pub mod distribution;
pub mod dl;
pub mod fit;
pub mod invariants;

pub use bounds::{BoundCheck, Counterexample};
pub use coupling::{coupling_decay, CouplingOptions, CouplingReport};
pub use distribution::{stability_in_distribution_report, DistributionOptions, DlReport};
pub use dl::{empirical_dl, DlEstimate};
pub use fit::{fit_decay_rate, DecayFit, PlateauMode};
pub use invariants::{check_path_invariants, PathInvariants};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
}

impl CurvePoint {
    pub fn from_estimate(t: f64, e: Estimate) -> Self {
        CurvePoint { t, estimate: e.estimate, stderr: e.stderr }
    }
}

/// `E|x(t)|²` at the ensemble checkpoints.
pub fn second_moment_curve(ens: &Ensemble) -> Vec<CurvePoint> {
    ens.checkpoints.iter().map(|c| CurvePoint::from_estimate(c.t, c.second_moment)).collect()
}

/// `E‖x_t‖²_r` at the ensemble checkpoints. The norm was taken with the
/// model's `r` during simulation.
pub fn segment_norm_curve(ens: &Ensemble) -> Vec<CurvePoint> {
    ens.checkpoints.iter().map(|c| CurvePoint::from_estimate(c.t, c.segment_norm_sq)).collect()
}

/// Writes `t, estimate, stderr`.
pub fn write_curve_csv<W: std::io::Write>(curve: &[CurvePoint], out: W) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "estimate", "stderr"])?;
    for p in curve {
        w.write_record([p.t.to_string(), p.estimate.to_string(), p.stderr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

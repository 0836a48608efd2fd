//! Comparing Monte Carlo curves with ledger bounds.

use serde::{Deserialize, Serialize};

use super::CurvePoint;

/// Allowed excess: three standard errors plus `h` times the bound.
pub fn slack(stderr: f64, bound: f64, h: f64) -> f64 {
    3.0 * stderr + h * bound.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: Option<f64>,
    pub slack: f64,
    /// `None` when the ledger provides no bound.
    pub pass: Option<bool>,
}

/// A machine-readable record of a bound that failed at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub bound: String,
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound_value: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub points: Vec<BoundPoint>,
    /// Whether the ledger produced a bound at all.
    pub checked: bool,
    pub pass: bool,
    pub counterexamples: Vec<Counterexample>,
}

impl BoundCheck {
    pub fn evaluate(
        name: &str,
        curve: &[CurvePoint],
        h: f64,
        bound: impl Fn(f64) -> Option<f64>,
    ) -> BoundCheck {
        let mut counterexamples = Vec::new();
        let points: Vec<BoundPoint> = curve
            .iter()
            .map(|p| {
                let b = bound(p.t);
                let s = b.map_or(3.0 * p.stderr, |b| slack(p.stderr, b, h));
                let pass = b.map(|b| p.estimate <= b + s);
                if let (Some(false), Some(b)) = (pass, b) {
                    counterexamples.push(Counterexample {
                        bound: name.into(),
                        t: p.t,
                        estimate: p.estimate,
                        stderr: p.stderr,
                        bound_value: b,
                        slack: s,
                    });
                }
                BoundPoint { t: p.t, estimate: p.estimate, stderr: p.stderr, bound: b, slack: s, pass }
            })
            .collect();
        let checked = points.iter().all(|p| p.bound.is_some()) && !points.is_empty();
        BoundCheck {
            name: name.into(),
            checked,
            pass: counterexamples.is_empty(),
            points,
            counterexamples,
        }
    }

    /// Rows `t, estimate, stderr, bound, pass` (empty cells when unchecked).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> crate::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "estimate", "stderr", "bound", "pass"])?;
        for p in &self.points {
            w.write_record([
                p.t.to_string(),
                p.estimate.to_string(),
                p.stderr.to_string(),
                p.bound.map(|b| b.to_string()).unwrap_or_default(),
                p.pass.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

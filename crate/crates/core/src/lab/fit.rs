//! Log-linear decay fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least squares `y ≈ slope·x + intercept`; returns
/// `(slope, intercept, r²)`. `r²` is 1 for an exact fit and NaN when `y` is
/// constant.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { f64::NAN };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlateauMode {
    #[default]
    Zero,
    /// Mean of the last quarter of the curve (at least two points).
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `λ̂` in `value − plateau ≈ e^{intercept − λ̂ t}`
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub plateau: f64,
    pub points_used: usize,
}

/// Fits `value(t) ≈ plateau + e^{intercept}·e^{−rate·t}`.
pub fn fit_decay_rate(t: &[f64], value: &[f64], mode: PlateauMode) -> Result<DecayFit> {
    if t.len() != value.len() {
        return Err(Error::Fit("times and values differ in length".into()));
    }
    let n = t.len();
    if n < 4 {
        return Err(Error::Fit(format!("{n} points, at least 4 needed")));
    }
    if value.iter().chain(t).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite input".into()));
    }
    let (plateau, keep) = match mode {
        PlateauMode::Zero => (0.0, n),
        PlateauMode::Estimated => {
            let tail = (n / 4).max(2);
            let tv = &value[n - tail..];
            let mean = tv.iter().sum::<f64>() / tail as f64;
            let sd = (tv.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tail - 1) as f64).sqrt();
            // only points that stand clearly above the plateau carry a rate
            let floor = 10.0 * sd;
            let keep = value[..n - tail].iter().take_while(|v| **v - mean > floor).count();
            (mean, keep)
        }
    };
    let mut xs = Vec::with_capacity(keep);
    let mut ys = Vec::with_capacity(keep);
    for i in 0..keep {
        let r = value[i] - plateau;
        if !(r > 0.0) {
            return Err(Error::Fit(format!(
                "value {} at t = {} is not above the plateau {plateau}",
                value[i], t[i]
            )));
        }
        xs.push(t[i]);
        ys.push(r.ln());
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!("only {} points above the plateau", xs.len())));
    }
    let (slope, intercept, r2) = least_squares(&xs, &ys);
    if r2.is_nan() {
        return Err(Error::Fit("curve is constant; no decay to fit".into()));
    }
    Ok(DecayFit { rate: -slope, intercept, r_squared: r2, plateau, points_used: xs.len() })
}

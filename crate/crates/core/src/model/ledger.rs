//! Every derived constant of the stability analysis, with the admissibility
//! verdict.

use serde::{Deserialize, Serialize};

use super::NeutralModel;
use crate::error::{Error, Result};

/// Coefficient of the diffusion constants in the mean-square estimate.
pub const BOUND_FACTOR: f64 = 73.0;

/// How `ε₁, ε₂` are picked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsChoice {
    Fixed {
        eps1: f64,
        eps2: f64,
    },
    /// Coarse grid: among points with a positive bracket, the one with the
    /// smallest `C₁ + C₂`; otherwise the largest bracket.
    #[default]
    Search,
}

pub fn eps1_grid() -> Vec<f64> {
    // 13 log-spaced points on [1e-3, 1]
    (0..13).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect()
}

pub fn eps2_grid() -> Vec<f64> {
    let mut g = vec![1e-3, 2e-3, 5e-3, 0.01, 0.02];
    g.extend((1..=19).map(|i| 0.05 * i as f64));
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub eps1: f64,
    pub eps2: f64,
    pub k: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub r: f64,
    pub mu2r: f64,
    #[serde(rename = "b0_sq")]
    pub b0_sq: f64,
    #[serde(rename = "sigma0_sq")]
    pub sigma0_sq: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(rename = "N")]
    pub n_const: f64,
    #[serde(rename = "M")]
    pub m_const: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// `2λ₁ − (73λ₃ + 2λ₂μ^(2r) + 73λ₄μ^(2r))`
    pub margin: f64,
    pub lambda_max: f64,
    pub lambda: Option<f64>,
    /// The ε-dependent bracket that must stay positive at the chosen `λ`.
    pub bracket: Option<f64>,
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    #[serde(rename = "C3")]
    pub c3: Option<f64>,
    #[serde(rename = "C4")]
    pub c4: Option<f64>,
    /// Multiplies `E‖ξ‖²_r`.
    #[serde(rename = "C5")]
    pub c5: Option<f64>,
    /// Multiplies `E‖ξ − η‖²_r`.
    #[serde(rename = "C6")]
    pub c6: Option<f64>,
    pub admissible: bool,
    pub reasons: Vec<String>,
}

struct Base {
    k: f64,
    l1: f64,
    l2: f64,
    l3: f64,
    l4: f64,
    r: f64,
    mu: f64,
    m: f64,
}

impl Base {
    fn bracket(&self, lambda: f64, e1: f64, e2: f64) -> f64 {
        let f = BOUND_FACTOR;
        2.0 * self.l1 - self.m * lambda - 2.0 * e1 - f * self.l3 / (1.0 - e2)
            - (2.0 * self.l2 + 2.0 * self.k * e1 + f * self.l4 / (1.0 - e2)) * self.mu
    }

    fn c1(&self, lambda: f64, e1: f64, e2: f64, b0: f64, s0: f64) -> f64 {
        let k2 = 1.0 / ((1.0 - self.k) * (1.0 - self.k));
        2.0 * k2 / lambda * (BOUND_FACTOR * s0 / e2 + b0 / e1)
    }

    fn c2(&self, lambda: f64, e1: f64, e2: f64) -> f64 {
        let k1 = self.k * self.mu / (1.0 - self.k);
        let k2 = 1.0 / ((1.0 - self.k) * (1.0 - self.k));
        let inner = (1.0 + self.k) * lambda
            + 2.0 * self.l2
            + 2.0 * self.k * e1
            + BOUND_FACTOR * self.l4 / (1.0 - e2);
        k1 + 2.0 * k2 * (self.m + self.mu / (2.0 * self.r - lambda) * inner)
    }

    fn c3(&self, lambda: f64) -> f64 {
        let k3 = self.k * self.mu / (1.0 - self.k);
        let k4 = 1.0 / ((1.0 - self.k) * (1.0 - self.k));
        let inner = (1.0 + self.k) * lambda + 2.0 * self.l2 + BOUND_FACTOR * self.l4;
        k3 + 2.0 * k4 * (self.m + self.mu / (2.0 * self.r - lambda) * inner)
    }
}

impl ConstantLedger {
    /// Computes the ledger. `lambda = None` takes the midpoint of
    /// `(0, lambda_max)` when that interval is non-empty.
    pub fn compute(model: &NeutralModel, eps: EpsChoice, lambda: Option<f64>) -> Result<Self> {
        let p = model.declared();
        let r = model.r();
        let mu = model.measure().check_in_mr(2.0 * r)?;
        let k = p.k;
        let base = Base {
            k,
            l1: p.lambda1,
            l2: p.lambda2,
            l3: p.lambda3,
            l4: p.lambda4,
            r,
            mu,
            m: (1.0 + k) * (1.0 + mu),
        };
        let f = BOUND_FACTOR;
        let margin = 2.0 * p.lambda1 - (f * p.lambda3 + 2.0 * p.lambda2 * mu + f * p.lambda4 * mu);
        let lambda_max = (margin / base.m).min(2.0 * r);
        let lambda = match lambda {
            Some(l) if l > 0.0 && l < lambda_max => Some(l),
            Some(l) => {
                return Err(Error::InvalidParameter(format!(
                    "lambda = {l} outside the admissible interval (0, {lambda_max})"
                )))
            }
            None if lambda_max > 0.0 => Some(0.5 * lambda_max),
            None => None,
        };
        let b0 = model.drift_at_zero_sq();
        let s0 = model.diffusion_at_zero_sq();

        let (eps1, eps2) = match eps {
            EpsChoice::Fixed { eps1, eps2 } => {
                if !(eps1 > 0.0 && eps2 > 0.0 && eps2 < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "need eps1 > 0 and 0 < eps2 < 1, got ({eps1}, {eps2})"
                    )));
                }
                (eps1, eps2)
            }
            EpsChoice::Search => search_eps(&base, lambda, b0, s0),
        };

        let k1 = k * mu / (1.0 - k);
        let k2 = 1.0 / ((1.0 - k) * (1.0 - k));
        let bracket = lambda.map(|l| base.bracket(l, eps1, eps2));
        let (c1, c2, c3) = match lambda {
            Some(l) => (
                Some(base.c1(l, eps1, eps2, b0, s0)),
                Some(base.c2(l, eps1, eps2)),
                Some(base.c3(l)),
            ),
            None => (None, None, None),
        };

        let mut reasons = Vec::new();
        if !(margin > 0.0) {
            reasons.push(format!(
                "2*lambda1 = {} does not exceed 73*lambda3 + 2*lambda2*mu2r + 73*lambda4*mu2r = {}",
                2.0 * p.lambda1,
                2.0 * p.lambda1 - margin
            ));
        }
        if !(k * mu < 1.0) {
            reasons.push(format!("k*mu2r = {} is not below 1", k * mu));
        }
        match bracket {
            Some(b) if b > 0.0 => {}
            Some(b) => reasons.push(format!(
                "bracket at lambda = {}, eps = ({eps1}, {eps2}) is {b}, not positive",
                lambda.unwrap_or(0.0)
            )),
            None => reasons.push("the decay-rate interval is empty".into()),
        }

        Ok(ConstantLedger {
            eps1,
            eps2,
            k,
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            lambda3: p.lambda3,
            lambda4: p.lambda4,
            r,
            mu2r: mu,
            b0_sq: b0,
            sigma0_sq: s0,
            alpha1: 2.0 * p.lambda1 - 2.0 * eps1 - p.lambda3 / (1.0 - eps2),
            alpha2: 2.0 * p.lambda2 + 2.0 * k * eps1 + p.lambda4 / (1.0 - eps2),
            n_const: b0 / eps1 + s0 / eps2,
            m_const: base.m,
            k1,
            k2,
            k3: k1,
            k4: k2,
            margin,
            lambda_max,
            lambda,
            bracket,
            c1,
            c2,
            c3,
            c4: c1,
            c5: c2.map(|c| 1.0 + c),
            c6: c3.map(|c| 1.0 + c),
            admissible: reasons.is_empty(),
            reasons,
        })
    }

    /// `C₁ + C₂ E‖ξ‖²_r e^{−λt}`
    pub fn moment_bound(&self, t: f64, xi_norm_sq: f64) -> Option<f64> {
        Some(self.c1? + self.c2? * xi_norm_sq * (-self.lambda? * t).exp())
    }

    /// `C₃ E‖ξ − η‖²_r e^{−λt}`
    pub fn coupling_bound(&self, t: f64, diff_norm_sq: f64) -> Option<f64> {
        Some(self.c3? * diff_norm_sq * (-self.lambda? * t).exp())
    }

    /// `C₄ + C₅ E‖ξ‖²_r e^{−λt}`
    pub fn segment_bound(&self, t: f64, xi_norm_sq: f64) -> Option<f64> {
        Some(self.c4? + self.c5? * xi_norm_sq * (-self.lambda? * t).exp())
    }

    /// `C₆ E‖ξ − η‖²_r e^{−λt}`
    pub fn segment_coupling_bound(&self, t: f64, diff_norm_sq: f64) -> Option<f64> {
        Some(self.c6? * diff_norm_sq * (-self.lambda? * t).exp())
    }
}

fn search_eps(base: &Base, lambda: Option<f64>, b0: f64, s0: f64) -> (f64, f64) {
    let l = lambda.unwrap_or(0.0);
    let mut best_ok: Option<(f64, f64, f64)> = None;
    let mut best_bracket: Option<(f64, f64, f64)> = None;
    for &e1 in &eps1_grid() {
        for &e2 in &eps2_grid() {
            let b = base.bracket(l, e1, e2);
            if best_bracket.is_none_or(|(v, _, _)| b > v) {
                best_bracket = Some((b, e1, e2));
            }
            if b > 0.0 && l > 0.0 {
                let cost = base.c1(l, e1, e2, b0, s0) + base.c2(l, e1, e2);
                if best_ok.is_none_or(|(v, _, _)| cost < v) {
                    best_ok = Some((cost, e1, e2));
                }
            }
        }
    }
    let (_, e1, e2) = best_ok.or(best_bracket).expect("grids are non-empty");
    (e1, e2)
}

/// Smallest `c` for which the built-in example satisfies the mean-square
/// condition.
pub fn example5_threshold(eps: f64, mu2r: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    if !(mu2r > 0.0) {
        return Err(Error::InvalidParameter(format!("mu2r = {mu2r} must be positive")));
    }
    if mu2r >= 4.0 {
        return Err(Error::InvalidParameter(format!(
            "mu2r = {mu2r} >= 4: no value of c is admissible"
        )));
    }
    let f = 2.0 * BOUND_FACTOR;
    Ok((4.0 + f * (1.0 + eps) + f * (1.0 + 1.0 / eps) * mu2r) / (4.0 - mu2r))
}

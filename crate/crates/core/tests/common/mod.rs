#![allow(dead_code)]

use nsfde_core::model::{
    DeclaredParams, DiffusionSpec, DriftSpec, MatrixSpec, ModelSpec, NeutralSpec, Pointwise,
};
use nsfde_core::{FadingMeasure, NeutralModel};

/// Scalar model `d[x − κ∫x_t dμ] = a·x dt + (g(x) + σ₀) dw`, memory `exp(1)`.
pub fn scalar(a: f64, kappa: f64, g: Pointwise, sigma0: f64) -> NeutralModel {
    NeutralModel::new(ModelSpec {
        name: None,
        dim: 1,
        r: 0.25,
        measure: FadingMeasure::exponential(1.0).unwrap(),
        neutral: NeutralSpec { kappa: MatrixSpec::Scalar(kappa) },
        drift: DriftSpec { a: MatrixSpec::Scalar(a), ..Default::default() },
        diffusion: DiffusionSpec { g, c: MatrixSpec::Scalar(0.0), sigma0: MatrixSpec::Scalar(sigma0) },
        declared: DeclaredParams { k: 0.5, lambda1: 1.0, lambda2: 1.0, lambda3: 1.0, lambda4: 1.0 },
    })
    .unwrap()
}

/// Adaptive Simpson on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `∫ e^{−rθ} μ(dθ)` by quadrature: atoms summed directly, each density
/// integrated on `(−∞, 0]` through `θ = −s/(1−s)`, `s ∈ [0, 1)`.
pub fn moment_oracle(mu: &FadingMeasure, r: f64) -> f64 {
    let mut total: f64 = mu.atoms().iter().map(|a| a.w * (-r * a.theta).exp()).sum();
    for e in mu.exp_components() {
        let f = |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let theta = -s / (1.0 - s);
            let jac = 1.0 / ((1.0 - s) * (1.0 - s));
            e.w * e.rho * ((e.rho - r) * theta).exp() * jac
        };
        total += simpson(&f, 0.0, 1.0, 1e-13);
    }
    total
}

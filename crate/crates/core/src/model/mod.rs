//! Structured neutral coefficients.
//!
//! With `I(φ) = ∫ φ(θ) μ(dθ)`:
//!
//! ```text
//! D(φ) = κ·I(φ)
//! b(φ) = A·φ(0) + B·I(φ) + b₀
//! σ(φ) = diag(g(φ(0)) + C·I(φ)) + σ₀        (d × d, noise dimension m = d)
//! ```
//!
//! `g` acts componentwise and is drawn from a small registry of Lipschitz
//! maps. `D` has no constant term, so `D(0) = 0` holds by construction.

pub mod checks;
pub mod sampler;
pub mod ledger;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading_memory::{euclid_sq, Segment};
use crate::measures::{weighted_sq, weighted_sum, FadingMeasure};

pub use checks::{
    monotone_check, verify_h1, verify_h2_diffusion, verify_h2_drift, CheckConfig, CheckReport,
    Witness,
};
pub use ledger::{example5_threshold, ConstantLedger, EpsChoice, BOUND_FACTOR};

/// A `d × d` matrix in config files: a scalar means `s·I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec::Scalar(0.0)
    }
}

impl MatrixSpec {
    fn build(&self, dim: usize, what: &str) -> Result<DMatrix<f64>> {
        let m = match self {
            MatrixSpec::Scalar(s) => DMatrix::identity(dim, dim) * *s,
            MatrixSpec::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidModel(format!("{what} must be {dim}x{dim}")));
                }
                DMatrix::from_fn(dim, dim, |i, j| rows[i][j])
            }
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!("{what} has non-finite entries")));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    Full(Vec<f64>),
}

impl Default for VectorSpec {
    fn default() -> Self {
        VectorSpec::Scalar(0.0)
    }
}

impl VectorSpec {
    fn build(&self, dim: usize, what: &str) -> Result<DVector<f64>> {
        let v = match self {
            VectorSpec::Scalar(s) => DVector::from_element(dim, *s),
            VectorSpec::Full(v) if v.len() == dim => DVector::from_column_slice(v),
            VectorSpec::Full(_) => {
                return Err(Error::InvalidModel(format!("{what} must have {dim} entries")))
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel(format!("{what} has non-finite entries")));
        }
        Ok(v)
    }
}

/// Componentwise nonlinearity in the diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pointwise {
    #[default]
    Zero,
    IdentityScale {
        scale: f64,
    },
    Cos {
        scale: f64,
    },
    Sin {
        scale: f64,
    },
    /// Piecewise-linear through `(x, y)` knots, constant outside.
    Table {
        knots: Vec<[f64; 2]>,
    },
}

impl Pointwise {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Pointwise::Zero => 0.0,
            Pointwise::IdentityScale { scale } => scale * x,
            Pointwise::Cos { scale } => scale * x.cos(),
            Pointwise::Sin { scale } => scale * x.sin(),
            Pointwise::Table { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if x <= first[0] {
                    return first[1];
                }
                if x >= last[0] {
                    return last[1];
                }
                let k = knots.partition_point(|p| p[0] <= x);
                let (a, b) = (knots[k - 1], knots[k]);
                a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Pointwise::Zero => 0.0,
            Pointwise::IdentityScale { scale }
            | Pointwise::Cos { scale }
            | Pointwise::Sin { scale } => scale.abs(),
            Pointwise::Table { knots } => knots
                .windows(2)
                .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                .fold(0.0, f64::max),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Pointwise::IdentityScale { scale }
            | Pointwise::Cos { scale }
            | Pointwise::Sin { scale }
                if !scale.is_finite() =>
            {
                Err(Error::InvalidModel("pointwise scale must be finite".into()))
            }
            Pointwise::Table { knots } => {
                if knots.len() < 2 {
                    return Err(Error::InvalidModel("table needs at least two knots".into()));
                }
                if knots.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("table knots must be finite".into()));
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::InvalidModel("table abscissae must increase".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NeutralSpec {
    #[serde(default)]
    pub kappa: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    #[serde(default)]
    pub a: MatrixSpec,
    #[serde(default)]
    pub b: MatrixSpec,
    #[serde(default)]
    pub b0: VectorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    #[serde(default)]
    pub g: Pointwise,
    #[serde(default)]
    pub c: MatrixSpec,
    #[serde(default)]
    pub sigma0: MatrixSpec,
}

/// Constants the model claims to satisfy in the contraction and monotonicity
/// conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredParams {
    pub k: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    pub r: f64,
    pub measure: FadingMeasure,
    #[serde(default)]
    pub neutral: NeutralSpec,
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default)]
    pub diffusion: DiffusionSpec,
    pub declared: DeclaredParams,
}

/// Which drift constants the built-in example declares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExampleConstants {
    /// `λ₁ = c, λ₂ = c/4`, the constants stated for the example.
    #[default]
    Stated,
    /// `λ₁ = 3c/4, λ₂ = c/4`, which the drift actually satisfies.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct NeutralModel {
    spec: ModelSpec,
    kappa: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    b0: DVector<f64>,
    c: DMatrix<f64>,
    sigma0: DMatrix<f64>,
}

impl TryFrom<ModelSpec> for NeutralModel {
    type Error = Error;
    fn try_from(spec: ModelSpec) -> Result<Self> {
        NeutralModel::new(spec)
    }
}

impl From<NeutralModel> for ModelSpec {
    fn from(m: NeutralModel) -> Self {
        m.spec
    }
}

impl NeutralModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let d = spec.dim;
        if d == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if !(spec.r > 0.0 && spec.r.is_finite()) {
            return Err(Error::InvalidModel(format!("fading rate r = {} must be positive", spec.r)));
        }
        let p = spec.declared;
        if !(p.k > 0.0 && p.k < 1.0) {
            return Err(Error::InvalidModel(format!("declared k = {} must lie in (0, 1)", p.k)));
        }
        for (name, v) in [
            ("lambda1", p.lambda1),
            ("lambda2", p.lambda2),
            ("lambda3", p.lambda3),
            ("lambda4", p.lambda4),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidModel(format!("declared {name} = {v} must be positive")));
            }
        }
        spec.diffusion.g.validate()?;
        Ok(NeutralModel {
            kappa: spec.neutral.kappa.build(d, "neutral.kappa")?,
            a: spec.drift.a.build(d, "drift.a")?,
            b: spec.drift.b.build(d, "drift.b")?,
            b0: spec.drift.b0.build(d, "drift.b0")?,
            c: spec.diffusion.c.build(d, "diffusion.c")?,
            sigma0: spec.diffusion.sigma0.build(d, "diffusion.sigma0")?,
            spec,
        })
    }

    /// The scalar example `d[x − ½∫x_t dμ] = −c x dt + (cos x + ∫x_t dμ) dw`
    /// with `μ` exponential of rate `rho`.
    pub fn example5(c: f64, eps: f64, rho: f64, r: f64, constants: ExampleConstants) -> Result<Self> {
        if !(c > 0.0 && eps > 0.0) {
            return Err(Error::InvalidParameter("c and eps must be positive".into()));
        }
        let measure = FadingMeasure::exponential(rho)?;
        measure.check_in_mr(2.0 * r)?;
        let lambda1 = match constants {
            ExampleConstants::Stated => c,
            ExampleConstants::Corrected => 0.75 * c,
        };
        NeutralModel::new(ModelSpec {
            name: Some(format!("example5(c={c}, eps={eps}, rho={rho}, r={r})")),
            dim: 1,
            r,
            measure,
            neutral: NeutralSpec { kappa: MatrixSpec::Scalar(0.5) },
            drift: DriftSpec { a: MatrixSpec::Scalar(-c), ..Default::default() },
            diffusion: DiffusionSpec {
                g: Pointwise::Cos { scale: 1.0 },
                c: MatrixSpec::Scalar(1.0),
                sigma0: MatrixSpec::Scalar(0.0),
            },
            declared: DeclaredParams {
                k: 0.25,
                lambda1,
                lambda2: c / 4.0,
                lambda3: 1.0 + eps,
                lambda4: (1.0 + eps) / eps,
            },
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn name(&self) -> String {
        self.spec.name.clone().unwrap_or_else(|| "model".into())
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn r(&self) -> f64 {
        self.spec.r
    }

    pub fn measure(&self) -> &FadingMeasure {
        &self.spec.measure
    }

    pub fn declared(&self) -> DeclaredParams {
        self.spec.declared
    }

    pub fn with_declared(&self, declared: DeclaredParams) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.declared = declared;
        NeutralModel::new(spec)
    }

    pub fn kappa(&self) -> &DMatrix<f64> {
        &self.kappa
    }

    pub fn drift_a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn drift_b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn pointwise(&self) -> &Pointwise {
        &self.spec.diffusion.g
    }

    /// `|b(0)|²`
    pub fn drift_at_zero_sq(&self) -> f64 {
        self.b0.norm_squared()
    }

    /// `|σ(0)|²` in the trace norm.
    pub fn diffusion_at_zero_sq(&self) -> f64 {
        let d = self.dim();
        let zero = vec![0.0; d];
        self.diffusion_from(&zero, &zero).norm_squared()
    }

    /// `D` from the history integral `I`.
    pub fn neutral_from(&self, integral: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        mat_vec_add(&self.kappa, integral, &mut out);
        out
    }

    pub fn drift_from(&self, x0: &[f64], integral: &[f64]) -> Vec<f64> {
        let mut out = self.b0.as_slice().to_vec();
        mat_vec_add(&self.a, x0, &mut out);
        mat_vec_add(&self.b, integral, &mut out);
        out
    }

    pub fn diffusion_from(&self, x0: &[f64], integral: &[f64]) -> DMatrix<f64> {
        let mut s = self.sigma0.clone();
        self.add_state_diffusion(x0, integral, &mut s);
        s
    }

    /// Adds `diag(g(x0) + C·I)` to `out`.
    pub(crate) fn add_state_diffusion(&self, x0: &[f64], integral: &[f64], out: &mut DMatrix<f64>) {
        let d = self.dim();
        let g = &self.spec.diffusion.g;
        for i in 0..d {
            let mut v = g.eval(x0[i]);
            for j in 0..d {
                v += self.c[(i, j)] * integral[j];
            }
            out[(i, i)] += v;
        }
    }

    pub(crate) fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    pub(crate) fn b0(&self) -> &DVector<f64> {
        &self.b0
    }

    /// Binds the model to a segment grid so repeated evaluations reuse the
    /// quadrature weights.
    pub fn on_grid(&self, h: f64, depth: usize) -> GridModel<'_> {
        GridModel { model: self, weights: self.measure().quadrature_weights(h, depth), h, depth }
    }

    fn grid_for(&self, seg: &Segment) -> Result<GridModel<'_>> {
        if seg.dim() != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "segment dimension {} vs model dimension {}",
                seg.dim(),
                self.dim()
            )));
        }
        Ok(self.on_grid(seg.grid_step(), seg.depth()))
    }

    pub fn neutral(&self, seg: &Segment) -> Result<Vec<f64>> {
        self.grid_for(seg)?.neutral(seg)
    }

    pub fn drift(&self, seg: &Segment) -> Result<Vec<f64>> {
        self.grid_for(seg)?.drift(seg)
    }

    pub fn diffusion(&self, seg: &Segment) -> Result<DMatrix<f64>> {
        self.grid_for(seg)?.diffusion(seg)
    }
}

pub(crate) fn mat_vec_add(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, x) in v.iter().enumerate() {
            acc += m[(i, j)] * x;
        }
        *o += acc;
    }
}

/// A model evaluated on one fixed segment grid.
pub struct GridModel<'a> {
    model: &'a NeutralModel,
    weights: Vec<f64>,
    h: f64,
    depth: usize,
}

impl<'a> GridModel<'a> {
    pub fn model(&self) -> &'a NeutralModel {
        self.model
    }

    pub fn grid_step(&self) -> f64 {
        self.h
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check(&self, seg: &Segment) -> Result<()> {
        if seg.depth() != self.depth
            || seg.dim() != self.model.dim()
            || (seg.grid_step() - self.h).abs() > 1e-12 * self.h
        {
            return Err(Error::ShapeMismatch("segment does not match the bound grid".into()));
        }
        Ok(())
    }

    /// `∫ φ dμ`
    pub fn integral(&self, seg: &Segment) -> Result<Vec<f64>> {
        self.check(seg)?;
        Ok(weighted_sum(&self.weights, seg))
    }

    /// `∫ |φ|² dμ`
    pub fn integral_sq(&self, seg: &Segment) -> Result<f64> {
        self.check(seg)?;
        Ok(weighted_sq(&self.weights, seg))
    }

    pub fn neutral(&self, seg: &Segment) -> Result<Vec<f64>> {
        Ok(self.model.neutral_from(&self.integral(seg)?))
    }

    pub fn drift(&self, seg: &Segment) -> Result<Vec<f64>> {
        Ok(self.model.drift_from(seg.at_zero(), &self.integral(seg)?))
    }

    pub fn diffusion(&self, seg: &Segment) -> Result<DMatrix<f64>> {
        Ok(self.model.diffusion_from(seg.at_zero(), &self.integral(seg)?))
    }

    /// `|φ(0) − D(φ)|²`
    pub fn transformed_sq(&self, seg: &Segment) -> Result<f64> {
        let dv = self.neutral(seg)?;
        Ok(seg.at_zero().iter().zip(&dv).map(|(x, d)| (x - d) * (x - d)).sum())
    }
}

pub(crate) fn diff_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    euclid_sq(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_coefficients() {
        let m = NeutralModel::example5(10.0, 1.0, 1.0, 0.25, ExampleConstants::Stated).unwrap();
        assert_eq!(m.neutral_from(&[2.0]), vec![1.0]);
        assert_eq!(m.drift_from(&[0.3], &[5.0]), vec![-3.0]);
        let s = m.diffusion_from(&[0.0], &[0.5]);
        assert!((s[(0, 0)] - 1.5).abs() < 1e-15);
        assert_eq!(m.diffusion_at_zero_sq(), 1.0);
        assert_eq!(m.drift_at_zero_sq(), 0.0);
        assert!(NeutralModel::example5(10.0, 1.0, 0.5, 0.25, ExampleConstants::Stated).is_err());
    }

    #[test]
    fn neutral_vanishes_at_zero() {
        let m = NeutralModel::example5(10.0, 1.0, 1.0, 0.25, ExampleConstants::Stated).unwrap();
        let zero = Segment::constant(0.1, 400, &[0.0]).unwrap();
        assert_eq!(m.neutral(&zero).unwrap(), vec![0.0]);
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let t = Pointwise::Table { knots: vec![[-1.0, -0.5], [0.0, 0.0], [2.0, 1.0]] };
        assert!(t.validate().is_ok());
        assert_eq!(t.eval(-5.0), -0.5);
        assert_eq!(t.eval(5.0), 1.0);
        assert!((t.eval(1.0) - 0.5).abs() < 1e-15);
        assert!((t.eval(-0.5) + 0.25).abs() < 1e-15);
        assert_eq!(t.lipschitz(), 0.5);
        let bad = Pointwise::Table { knots: vec![[0.0, 0.0], [0.0, 1.0]] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn model_json_round_trip_and_validation() {
        let json = r#"{
            "dim": 2, "r": 0.25,
            "measure": {"exp": [{"rho": 1.0, "w": 1.0}]},
            "neutral": {"kappa": [[0.1, 0.0], [0.0, 0.2]]},
            "drift": {"a": -3.0, "b0": [1.0, 0.0]},
            "diffusion": {"g": {"kind": "sin", "scale": 0.5}, "sigma0": 0.1},
            "declared": {"k": 0.1, "lambda1": 2.0, "lambda2": 0.1, "lambda3": 0.3, "lambda4": 0.1}
        }"#;
        let m: NeutralModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.drift_from(&[1.0, 1.0], &[0.0, 0.0]), vec![-2.0, -3.0]);
        let back = serde_json::to_string(&m).unwrap();
        let again: NeutralModel = serde_json::from_str(&back).unwrap();
        assert_eq!(again, m);

        let bad_shape = json.replace("[[0.1, 0.0], [0.0, 0.2]]", "[[0.1]]");
        assert!(serde_json::from_str::<NeutralModel>(&bad_shape).is_err());
        let bad_k = json.replace("\"k\": 0.1", "\"k\": 1.5");
        assert!(serde_json::from_str::<NeutralModel>(&bad_k).is_err());
        let unknown = json.replace("\"r\": 0.25", "\"r\": 0.25, \"colour\": 1");
        assert!(serde_json::from_str::<NeutralModel>(&unknown).is_err());
    }
}

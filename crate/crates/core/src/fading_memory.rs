//! Truncated histories on a uniform grid and the weighted sup norm of the
//! fading-memory state space.
//!
//! A [`Segment`] stores `depth + 1` points at `θ_i = -(depth - i)·h`, oldest
//! first, so the window covers `[-depth·h, 0]` and the last point is `θ = 0`.
//! Anything older than the window is not represented; the measure layer
//! extends the oldest value when it needs mass beyond the window.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack (in units of one step) accepted when snapping a time to the grid.
pub const GRID_SNAP_TOL: f64 = 1e-6;

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn euclid_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Index `n` with `t = n·h`, or an alignment error.
pub fn grid_index(t: f64, h: f64) -> Result<usize> {
    if !t.is_finite() || t < -GRID_SNAP_TOL * h {
        return Err(Error::OutOfRange { t, horizon: f64::INFINITY });
    }
    let n = (t / h).round();
    if (t - n * h).abs() > GRID_SNAP_TOL * h {
        return Err(Error::GridAlignment { t, h });
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSegment")]
pub struct Segment {
    grid_step: f64,
    dim: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSegment {
    grid_step: f64,
    dim: usize,
    values: Vec<f64>,
}

impl TryFrom<RawSegment> for Segment {
    type Error = Error;
    fn try_from(raw: RawSegment) -> Result<Self> {
        Segment::new(raw.grid_step, raw.dim, raw.values)
    }
}

impl Segment {
    /// Builds a segment from flattened row-major values (oldest point first).
    pub fn new(grid_step: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(grid_step > 0.0 && grid_step.is_finite()) {
            return Err(Error::InvalidSegment(format!("grid step {grid_step} must be positive")));
        }
        if dim == 0 {
            return Err(Error::InvalidSegment("dimension must be positive".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidSegment(format!(
                "{} values do not split into points of dimension {dim}",
                values.len()
            )));
        }
        if values.len() / dim < 2 {
            return Err(Error::InvalidSegment("depth must be at least 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSegment(format!(
                "non-finite value at point {}",
                i / dim
            )));
        }
        Ok(Segment { grid_step, dim, values })
    }

    /// Samples `f(θ)` on the grid covering `[-depth·h, 0]`.
    pub fn from_fn<F>(grid_step: f64, depth: usize, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity((depth + 1) * dim);
        for i in 0..=depth {
            let theta = (i as f64 - depth as f64) * grid_step;
            let v = f(theta);
            if v.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "sampler returned {} components, expected {dim}",
                    v.len()
                )));
            }
            values.extend_from_slice(&v);
        }
        Segment::new(grid_step, dim, values)
    }

    pub fn from_scalar_fn<F>(grid_step: f64, depth: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> f64,
    {
        Segment::from_fn(grid_step, depth, 1, |theta| vec![f(theta)])
    }

    pub fn constant(grid_step: f64, depth: usize, value: &[f64]) -> Result<Self> {
        Segment::from_fn(grid_step, depth, value.len(), |_| value.to_vec())
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid intervals in the window.
    pub fn depth(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Length of the history window, `T_mem = depth·h`.
    pub fn memory_span(&self) -> f64 {
        self.depth() as f64 * self.grid_step
    }

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 - self.depth() as f64) * self.grid_step
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn at_zero(&self) -> &[f64] {
        self.point(self.depth())
    }

    pub fn oldest(&self) -> &[f64] {
        self.point(0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.values
            .chunks_exact(self.dim)
            .enumerate()
            .map(move |(i, p)| (self.theta(i), p))
    }

    pub fn same_shape(&self, other: &Segment) -> bool {
        self.dim == other.dim
            && self.values.len() == other.values.len()
            && (self.grid_step - other.grid_step).abs() <= 1e-12 * self.grid_step
    }

    /// `max_i e^{rθ_i}|φ(θ_i)|` over the stored window.
    pub fn cr_norm(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("fading rate r = {r} must be positive")));
        }
        Ok(self
            .points()
            .map(|(theta, p)| (r * theta).exp() * euclid(p))
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .chunks_exact(self.dim)
            .map(euclid)
            .fold(0.0, f64::max)
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &Segment) -> Result<Segment> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "segments ({} points, dim {}, h {}) and ({} points, dim {}, h {})",
                self.len(),
                self.dim,
                self.grid_step,
                other.len(),
                other.dim,
                other.grid_step
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Segment { grid_step: self.grid_step, dim: self.dim, values })
    }

    pub fn scaled(&self, c: f64) -> Segment {
        Segment {
            grid_step: self.grid_step,
            dim: self.dim,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Keeps every `stride`-th point counted back from `θ = 0`.
    pub fn subsample(&self, stride: usize) -> Result<Segment> {
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be positive".into()));
        }
        if stride == 1 {
            return Ok(self.clone());
        }
        let depth = self.depth() / stride;
        let offset = self.depth() - depth * stride;
        let mut values = Vec::with_capacity((depth + 1) * self.dim);
        for k in 0..=depth {
            values.extend_from_slice(self.point(offset + k * stride));
        }
        Segment::new(self.grid_step * stride as f64, self.dim, values)
    }

    /// CSV with columns `theta, x_1, .., x_d`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["theta".to_string()];
        header.extend((1..=self.dim).map(|j| format!("x_{j}")));
        w.write_record(&header)?;
        for (theta, p) in self.points() {
            let mut row = vec![theta.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `cr_norm(seg, r)` as a free function.
pub fn cr_norm(seg: &Segment, r: f64) -> Result<f64> {
    seg.cr_norm(r)
}

pub fn sup_norm(seg: &Segment) -> f64 {
    seg.sup_norm()
}

pub fn segment_sub(a: &Segment, b: &Segment) -> Result<Segment> {
    a.sub(b)
}

/// A simulated trajectory: initial history plus values at `h, 2h, .., T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pre_history: Segment,
    post_values: Vec<f64>,
}

impl Path {
    pub fn new(pre_history: Segment, post_values: Vec<f64>) -> Result<Self> {
        if !post_values.len().is_multiple_of(pre_history.dim()) {
            return Err(Error::ShapeMismatch(format!(
                "{} post values do not split into points of dimension {}",
                post_values.len(),
                pre_history.dim()
            )));
        }
        Ok(Path { pre_history, post_values })
    }

    pub fn grid_step(&self) -> f64 {
        self.pre_history.grid_step()
    }

    pub fn dim(&self) -> usize {
        self.pre_history.dim()
    }

    pub fn pre_history(&self) -> &Segment {
        &self.pre_history
    }

    pub fn post_values(&self) -> &[f64] {
        &self.post_values
    }

    /// Number of steps taken after `t = 0`.
    pub fn steps(&self) -> usize {
        self.post_values.len() / self.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.grid_step()
    }

    /// Value at `t = n·h`; `n = 0` is `ξ(0)`.
    pub fn value_at_step(&self, n: usize) -> &[f64] {
        if n == 0 {
            self.pre_history.at_zero()
        } else {
            let d = self.dim();
            &self.post_values[(n - 1) * d..n * d]
        }
    }

    pub fn final_value(&self) -> &[f64] {
        self.value_at_step(self.steps())
    }

    /// The segment `x_t`, with the same depth as the initial history.
    pub fn segment_at(&self, t: f64) -> Result<Segment> {
        let h = self.grid_step();
        let n = grid_index(t, h).map_err(|e| match e {
            Error::OutOfRange { t, .. } => Error::OutOfRange { t, horizon: self.horizon() },
            other => other,
        })?;
        if n > self.steps() {
            return Err(Error::OutOfRange { t, horizon: self.horizon() });
        }
        self.segment_at_step(n)
    }

    pub fn segment_at_step(&self, n: usize) -> Result<Segment> {
        if n > self.steps() {
            return Err(Error::OutOfRange {
                t: n as f64 * self.grid_step(),
                horizon: self.horizon(),
            });
        }
        if n == 0 {
            return Ok(self.pre_history.clone());
        }
        let d = self.dim();
        let depth = self.pre_history.depth();
        let pre = self.pre_history.values();
        let mut values = Vec::with_capacity((depth + 1) * d);
        // window covers global indices n-depth ..= n, where index 0 is t = 0
        for k in (n as isize - depth as isize)..=(n as isize) {
            if k <= 0 {
                let i = (depth as isize + k) as usize;
                values.extend_from_slice(&pre[i * d..(i + 1) * d]);
            } else {
                values.extend_from_slice(self.value_at_step(k as usize));
            }
        }
        Segment::new(self.grid_step(), d, values)
    }

    /// CSV with columns `t, x_1, .., x_d` for `t = 0, h, .., T`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("x_{j}")));
        w.write_record(&header)?;
        for n in 0..=self.steps() {
            let mut row = vec![(n as f64 * self.grid_step()).to_string()];
            row.extend(self.value_at_step(n).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parametric initial histories, sampled onto whatever grid a run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant { value: Vec<f64> },
    /// `intercept + slope·θ`
    Affine { intercept: Vec<f64>, slope: Vec<f64> },
    /// `offset + amplitude·cos(frequency·θ)`
    Cosine { offset: Vec<f64>, amplitude: Vec<f64>, frequency: f64 },
}

impl InitialData {
    pub fn constant(value: &[f64]) -> Self {
        InitialData::Constant { value: value.to_vec() }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialData::Constant { value } => value.len(),
            InitialData::Affine { intercept, .. } => intercept.len(),
            InitialData::Cosine { offset, .. } => offset.len(),
        }
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        match self {
            InitialData::Constant { value } => value.clone(),
            InitialData::Affine { intercept, slope } => {
                intercept.iter().zip(slope).map(|(a, b)| a + b * theta).collect()
            }
            InitialData::Cosine { offset, amplitude, frequency } => offset
                .iter()
                .zip(amplitude)
                .map(|(o, a)| o + a * (frequency * theta).cos())
                .collect(),
        }
    }

    pub fn to_segment(&self, grid_step: f64, depth: usize) -> Result<Segment> {
        match self {
            InitialData::Affine { intercept, slope } if intercept.len() != slope.len() => {
                return Err(Error::ShapeMismatch("affine intercept/slope lengths differ".into()))
            }
            InitialData::Cosine { offset, amplitude, .. } if offset.len() != amplitude.len() => {
                return Err(Error::ShapeMismatch("cosine offset/amplitude lengths differ".into()))
            }
            _ => {}
        }
        Segment::from_fn(grid_step, depth, self.dim(), |theta| self.eval(theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(h: f64, depth: usize) -> Segment {
        Segment::from_scalar_fn(h, depth, |theta| theta).unwrap()
    }

    #[test]
    fn constant_segment_has_unit_norm() {
        let s = Segment::constant(0.01, 500, &[1.0]).unwrap();
        for r in [0.01, 0.5, 3.0] {
            assert_eq!(s.cr_norm(r).unwrap(), 1.0);
        }
    }

    #[test]
    fn growing_history_is_flattened_by_weight() {
        let s = Segment::from_scalar_fn(1e-3, 2000, |theta| (-theta).exp()).unwrap();
        assert!((s.cr_norm(1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_history_peaks_at_one() {
        // max of e^θ|θ| over θ ≤ 0 is e^{-1} at θ = -1
        let h = 1e-3;
        let s = line(h, 3000);
        let scan = (0..=300_000)
            .map(|i| -(i as f64) * 1e-5)
            .map(|t| t.exp() * t.abs())
            .fold(0.0, f64::max);
        assert!((scan - (-1.0f64).exp()).abs() < 1e-9);
        assert!((s.cr_norm(1.0).unwrap() - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(Segment::constant(0.1, 10, &[2.0, 0.0]).unwrap().sup_norm(), 2.0);
        assert!((line(0.01, 300).sup_norm() - 3.0).abs() < 1e-12);
        let a = line(0.01, 300);
        assert_eq!(a.sub(&a).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn difference_of_constants() {
        let a = Segment::constant(0.1, 4, &[1.0]).unwrap();
        let b = Segment::constant(0.1, 4, &[0.25]).unwrap();
        let d = a.sub(&b).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.75));
        let c = Segment::constant(0.1, 5, &[0.25]).unwrap();
        assert!(matches!(a.sub(&c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(Segment::new(0.1, 1, vec![1.0]).is_err());
        assert!(Segment::new(0.1, 1, vec![1.0, f64::NAN]).is_err());
        assert!(Segment::new(-0.1, 1, vec![1.0, 1.0]).is_err());
        assert!(Segment::new(0.1, 2, vec![1.0, 1.0, 1.0]).is_err());
        let s = Segment::constant(0.1, 3, &[1.0]).unwrap();
        assert!(s.cr_norm(0.0).is_err());
        let json = r#"{"grid_step":0.1,"dim":1,"values":[1.0]}"#;
        assert!(serde_json_from_str(json).is_err());
    }

    fn serde_json_from_str(s: &str) -> std::result::Result<Segment, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn segment_window_arithmetic() {
        // pre-history of zeros on [-4h, 0], post values ones at h..4h
        let h = 0.5;
        let pre = Segment::constant(h, 4, &[0.0]).unwrap();
        let path = Path::new(pre.clone(), vec![1.0; 4]).unwrap();
        assert_eq!(path.segment_at(0.0).unwrap(), pre);
        let s = path.segment_at(2.0).unwrap();
        // entry at θ = -T_mem is x(0)
        assert_eq!(s.oldest(), path.value_at_step(0));
        assert_eq!(s.values(), &[0.0, 1.0, 1.0, 1.0, 1.0]);
        let mid = path.segment_at(1.0).unwrap();
        assert_eq!(mid.values(), &[0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(path.segment_at(2.0).unwrap().at_zero(), path.final_value());
    }

    #[test]
    fn segment_at_errors() {
        let pre = Segment::constant(0.5, 4, &[0.0]).unwrap();
        let path = Path::new(pre, vec![1.0; 4]).unwrap();
        assert!(matches!(path.segment_at(2.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(path.segment_at(0.7), Err(Error::GridAlignment { .. })));
        assert!(matches!(path.segment_at(-1.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn subsample_keeps_zero_point() {
        let s = line(0.1, 10);
        let sub = s.subsample(3).unwrap();
        assert_eq!(sub.depth(), 3);
        assert_eq!(sub.at_zero(), s.at_zero());
        assert!((sub.grid_step() - 0.3).abs() < 1e-15);
        assert!((sub.oldest()[0] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let s = Segment::constant(0.5, 2, &[1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "theta,x_1,x_2\n-1,1,2\n-0.5,1,2\n0,1,2\n");
    }
}

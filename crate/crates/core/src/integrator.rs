//! Fixed-step integration on the transformed variable `y = x − D(x_t)`.
//!
//! One step reads
//!
//! ```text
//! y_{n+1} = y_n + h·b(X_•) + σ(X_n)·ΔW_n
//! x_{n+1} = y_{n+1} + D(X_{n+1}(x_{n+1}))     (fixed point)
//! ```
//!
//! where `X_•` is `X_n` for the explicit drift and the linear part of the
//! drift is taken at `n+1` for the implicit one. Exponential components of
//! the measure carry running accumulators, so a step costs `O(d²)`
//! regardless of the memory length.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading_memory::{euclid, grid_index, InitialData, Path, Segment};
use crate::measures::{slice_weights, DEFAULT_TOL_TAIL};
use crate::model::{mat_vec_add, ConstantLedger, EpsChoice, NeutralModel};
use crate::rng::NoiseStream;

/// Paths whose state norm exceeds this are aborted.
pub const BLOW_UP_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftTreatment {
    /// Linear part `A·x(t) + B·∫x_t dμ` at the new time level.
    #[default]
    Implicit,
    /// Plain Euler–Maruyama.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NeutralSolve {
    #[default]
    FixedPoint,
    /// One fixed-point sweep from the previous value.
    Predictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "SchemeConfig::default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "SchemeConfig::default_fp_max_iter")]
    pub fp_max_iter: usize,
    /// Relative to `μ^(2r)`.
    #[serde(default = "SchemeConfig::default_tol_tail")]
    pub tol_tail: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub drift: DriftTreatment,
    #[serde(default)]
    pub neutral_solve: NeutralSolve,
    /// Simulate even when the ledger says the model is not admissible.
    #[serde(default)]
    pub force: bool,
}

impl SchemeConfig {
    fn default_fp_tol() -> f64 {
        1e-12
    }
    fn default_fp_max_iter() -> usize {
        64
    }
    fn default_tol_tail() -> f64 {
        DEFAULT_TOL_TAIL
    }

    pub fn new(h: f64, horizon: f64, master_seed: u64) -> Self {
        SchemeConfig {
            h,
            horizon,
            fp_tol: Self::default_fp_tol(),
            fp_max_iter: Self::default_fp_max_iter(),
            tol_tail: Self::default_tol_tail(),
            master_seed,
            drift: DriftTreatment::default(),
            neutral_solve: NeutralSolve::default(),
            force: false,
        }
    }

    pub fn forced(mut self) -> Self {
        self.force = true;
        self
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!("step h = {} must be positive", self.h)));
        }
        if !(self.horizon >= self.h) {
            return Err(Error::InvalidParameter(format!(
                "horizon T = {} must be at least h = {}",
                self.horizon, self.h
            )));
        }
        if !(self.fp_tol > 0.0) || self.fp_max_iter == 0 || !(self.tol_tail > 0.0) {
            return Err(Error::InvalidParameter(
                "fp_tol, fp_max_iter and tol_tail must be positive".into(),
            ));
        }
        grid_index(self.horizon, self.h)
    }

    /// Grid intervals the initial history needs for this model.
    pub fn required_depth(&self, model: &NeutralModel) -> Result<usize> {
        let mu = model.measure();
        let mu2r = mu.check_in_mr(2.0 * model.r())?;
        mu.required_grid_depth(model.r(), self.tol_tail * mu2r, self.h)
    }

    /// Samples `init` on the scheme grid with the required depth.
    pub fn initial_segment(&self, model: &NeutralModel, init: &InitialData) -> Result<Segment> {
        init.to_segment(self.h, self.required_depth(model)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PathStats {
    pub max_fp_iterations: usize,
    /// `max_n |y_n − (x_n − D(X_n))| / (1 + |x_n|)`
    pub max_consistency_residual: f64,
}

impl PathStats {
    fn merge(&mut self, o: &PathStats) {
        self.max_fp_iterations = self.max_fp_iterations.max(o.max_fp_iterations);
        self.max_consistency_residual = self.max_consistency_residual.max(o.max_consistency_residual);
    }
}

struct Comp {
    rho: f64,
    w: f64,
    decay: f64,
    w_new: f64,
    w_old: f64,
}

/// Atom read as `(1 − frac)·x[top − back] + frac·x[top − back − 1]`.
struct Tap {
    w: f64,
    back: usize,
    frac: f64,
}

/// Everything about a run that does not depend on the noise.
pub struct PathSimulator<'a> {
    model: &'a NeutralModel,
    xi: &'a Segment,
    cfg: SchemeConfig,
    steps: usize,
    comps: Vec<Comp>,
    taps: Vec<Tap>,
    omega: f64,
    /// `(I − hA − hωB)⁻¹`, or the identity for the explicit drift.
    solve: DMatrix<f64>,
    /// `I − M`, so that the scheme target is `rhs + (I − M)·x`.
    implicit_part: DMatrix<f64>,
    neutral_active: bool,
    contraction: f64,
    init_acc: Vec<f64>,
    init_integral: Vec<f64>,
    init_y: Vec<f64>,
}

impl<'a> PathSimulator<'a> {
    pub fn new(model: &'a NeutralModel, xi: &'a Segment, cfg: &SchemeConfig) -> Result<Self> {
        let steps = cfg.steps()?;
        let d = model.dim();
        let h = cfg.h;
        if xi.dim() != d {
            return Err(Error::ShapeMismatch(format!(
                "initial data has dimension {}, model {}",
                xi.dim(),
                d
            )));
        }
        if (xi.grid_step() - h).abs() > 1e-12 * h {
            return Err(Error::ShapeMismatch(format!(
                "initial data grid step {} differs from scheme step {}",
                xi.grid_step(),
                h
            )));
        }
        let need = cfg.required_depth(model)?;
        if xi.depth() < need {
            let tail = model.measure().tail(2.0 * model.r(), xi.memory_span());
            let norm = xi.cr_norm(model.r())?;
            return Err(Error::Truncation {
                tail,
                tol: cfg.tol_tail * model.measure().r_moment(2.0 * model.r()),
                bound: 2.0 * norm * norm * tail,
            });
        }
        if !cfg.force {
            let ledger = ConstantLedger::compute(model, EpsChoice::Search, None)?;
            if !ledger.admissible {
                return Err(Error::InvalidModel(format!(
                    "model is not admissible ({}); set force to simulate anyway",
                    ledger.reasons.join("; ")
                )));
            }
        }

        let comps: Vec<Comp> = model
            .measure()
            .exp_components()
            .iter()
            .map(|e| {
                let (w_new, w_old) = slice_weights(e.rho, h);
                Comp { rho: e.rho, w: e.w, decay: (-e.rho * h).exp(), w_new, w_old }
            })
            .collect();
        let taps: Vec<Tap> = model
            .measure()
            .atoms()
            .iter()
            .map(|a| {
                let offset = -a.theta / h;
                let mut back = offset.floor();
                let mut frac = offset - back;
                if frac > 1.0 - 1e-9 {
                    back += 1.0;
                    frac = 0.0;
                } else if frac < 1e-9 {
                    frac = 0.0;
                }
                Tap { w: a.w, back: back as usize, frac }
            })
            .collect();
        let omega = comps.iter().map(|c| c.w * c.w_new).sum::<f64>()
            + taps.iter().filter(|t| t.back == 0).map(|t| t.w * (1.0 - t.frac)).sum::<f64>();

        let eye = DMatrix::<f64>::identity(d, d);
        let m = match cfg.drift {
            DriftTreatment::Implicit => {
                &eye - model.drift_a() * h - model.drift_b() * (h * omega)
            }
            DriftTreatment::Explicit => eye.clone(),
        };
        let solve = m.clone().try_inverse().ok_or_else(|| {
            Error::InvalidModel("implicit drift system is singular at this step size".into())
        })?;
        let implicit_part = &eye - &m;
        let neutral_active = model.kappa().iter().any(|v| *v != 0.0);
        let contraction = (&solve * model.kappa()).norm() * omega;

        let mut sim = PathSimulator {
            model,
            xi,
            cfg: cfg.clone(),
            steps,
            comps,
            taps,
            omega,
            solve,
            implicit_part,
            neutral_active,
            contraction,
            init_acc: Vec::new(),
            init_integral: Vec::new(),
            init_y: Vec::new(),
        };
        sim.prepare_initial_state();
        Ok(sim)
    }

    fn prepare_initial_state(&mut self) {
        let d = self.model.dim();
        let depth = self.xi.depth();
        let mut acc = vec![0.0; self.comps.len() * d];
        for (c, a) in self.comps.iter().zip(acc.chunks_mut(d)) {
            let rho = c.rho;
            for k in 1..=depth {
                let f = (rho * self.xi.theta(k)).exp();
                let (new, old) = (self.xi.point(k), self.xi.point(k - 1));
                for j in 0..d {
                    a[j] += f * (c.w_new * new[j] + c.w_old * old[j]);
                }
            }
            let f0 = (rho * self.xi.theta(0)).exp();
            for j in 0..d {
                a[j] += f0 * self.xi.point(0)[j];
            }
        }
        let hist = self.xi.values();
        let top = depth;
        let mut integral = vec![0.0; d];
        for (c, a) in self.comps.iter().zip(acc.chunks(d)) {
            for j in 0..d {
                integral[j] += c.w * a[j];
            }
        }
        self.add_taps(hist, top, &mut integral, true);
        let dv = self.model.neutral_from(&integral);
        self.init_y = self.xi.at_zero().iter().zip(&dv).map(|(x, n)| x - n).collect();
        self.init_acc = acc;
        self.init_integral = integral;
    }

    /// Adds atom contributions for the segment ending at global index `top`.
    /// With `include_top = false` the weight on `top` itself is left out (it
    /// is the unknown of the implicit solve).
    fn add_taps(&self, hist: &[f64], top: usize, out: &mut [f64], include_top: bool) {
        let d = out.len();
        let at = |i: isize| -> &[f64] {
            let i = i.max(0) as usize;
            &hist[i * d..(i + 1) * d]
        };
        for t in &self.taps {
            let i = top as isize - t.back as isize;
            if t.back > 0 || include_top {
                let p = at(i);
                for j in 0..d {
                    out[j] += t.w * (1.0 - t.frac) * p[j];
                }
            }
            if t.frac > 0.0 {
                let p = at(i - 1);
                for j in 0..d {
                    out[j] += t.w * t.frac * p[j];
                }
            }
        }
    }

    pub fn model(&self) -> &NeutralModel {
        self.model
    }

    pub fn initial(&self) -> &Segment {
        self.xi
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    /// Estimated contraction constant of the neutral fixed-point map.
    pub fn contraction(&self) -> f64 {
        self.contraction
    }

    /// Weight the history integral puts on the newest point.
    pub fn newest_weight(&self) -> f64 {
        self.omega
    }

    pub fn start(&self) -> PathState<'_, 'a> {
        let d = self.model.dim();
        let mut hist = Vec::with_capacity(self.xi.values().len() + self.steps * d);
        hist.extend_from_slice(self.xi.values());
        PathState {
            sim: self,
            hist,
            acc: self.init_acc.clone(),
            integral: self.init_integral.clone(),
            y: self.init_y.clone(),
            n: 0,
            stats: PathStats::default(),
            sigma: DMatrix::zeros(d, d),
            buf: vec![0.0; 6 * d],
        }
    }

    /// Runs one path on the keyed noise stream.
    pub fn run(&self, stream: &mut NoiseStream) -> Result<(Path, PathStats)> {
        let d = self.model.dim();
        let mut dw = vec![0.0; d];
        let mut st = self.start();
        for _ in 0..self.steps {
            stream.next_into(&mut dw);
            st.step(&dw)?;
        }
        Ok(st.finish())
    }

    pub fn run_index(&self, path_index: u64) -> Result<(Path, PathStats)> {
        let mut stream =
            NoiseStream::new(self.cfg.master_seed, path_index, self.model.dim(), self.cfg.h);
        self.run(&mut stream)
    }
}

/// Mutable state of one path in progress.
pub struct PathState<'s, 'a> {
    sim: &'s PathSimulator<'a>,
    hist: Vec<f64>,
    acc: Vec<f64>,
    integral: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    stats: PathStats,
    sigma: DMatrix<f64>,
    buf: Vec<f64>,
}

impl PathState<'_, '_> {
    pub fn step_index(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.sim.cfg.h
    }

    pub fn current(&self) -> &[f64] {
        let d = self.sim.model.dim();
        &self.hist[self.hist.len() - d..]
    }

    /// `∫ x_t dμ` at the current time.
    pub fn integral(&self) -> &[f64] {
        &self.integral
    }

    /// The scheme's transformed variable `y_n`.
    pub fn transformed(&self) -> &[f64] {
        &self.y
    }

    pub fn stats(&self) -> PathStats {
        self.stats
    }

    /// Advances one step with Brownian increment `dw` (variance `h`).
    pub fn step(&mut self, dw: &[f64]) -> Result<()> {
        let sim = self.sim;
        let model = sim.model;
        let d = model.dim();
        let h = sim.cfg.h;
        let top = self.hist.len() / d - 1;
        let (xn_buf, rest) = self.buf.split_at_mut(d);
        let (rhs, rest) = rest.split_at_mut(d);
        let (tail, rest) = rest.split_at_mut(d);
        let (x, rest) = rest.split_at_mut(d);
        let (dv, x_new) = rest.split_at_mut(d);
        xn_buf.copy_from_slice(&self.hist[top * d..]);
        let xn: &[f64] = xn_buf;

        // σ(X_n)·ΔW
        self.sigma.copy_from(model.sigma0());
        model.add_state_diffusion(xn, &self.integral, &mut self.sigma);
        rhs.copy_from_slice(&self.y);
        mat_vec_add(&self.sigma, dw, rhs);

        // history integral at n+1 without the unknown newest point
        tail.iter_mut().for_each(|v| *v = 0.0);
        for (c, a) in sim.comps.iter().zip(self.acc.chunks(d)) {
            for j in 0..d {
                tail[j] += c.w * (c.decay * a[j] + c.w_old * xn[j]);
            }
        }
        sim.add_taps(&self.hist, top + 1, tail, false);

        match sim.cfg.drift {
            DriftTreatment::Explicit => {
                let mut b = model.b0().as_slice().to_vec();
                mat_vec_add(model.drift_a(), xn, &mut b);
                mat_vec_add(model.drift_b(), &self.integral, &mut b);
                for j in 0..d {
                    rhs[j] += h * b[j];
                }
            }
            DriftTreatment::Implicit => {
                let mut b = model.b0().as_slice().to_vec();
                mat_vec_add(model.drift_b(), tail, &mut b);
                for j in 0..d {
                    rhs[j] += h * b[j];
                }
            }
        }

        // x = M⁻¹(rhs + κ(ω x + tail))
        let omega = sim.omega;
        x.copy_from_slice(xn);
        let mut iterations = 0;
        let mut last_update = 0.0;
        let max_iter = match sim.cfg.neutral_solve {
            NeutralSolve::FixedPoint if sim.neutral_active => sim.cfg.fp_max_iter,
            _ => 1,
        };
        let mut converged = max_iter == 1;
        while iterations < max_iter {
            iterations += 1;
            let arg: Vec<f64> = (0..d).map(|j| omega * x[j] + tail[j]).collect();
            dv.iter_mut().for_each(|v| *v = 0.0);
            mat_vec_add(model.kappa(), &arg, dv);
            for j in 0..d {
                dv[j] += rhs[j];
            }
            x_new.iter_mut().for_each(|v| *v = 0.0);
            mat_vec_add(&sim.solve, dv, x_new);
            last_update = x_new.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            x.copy_from_slice(x_new);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::BlowUp { time: (self.n + 1) as f64 * h, norm: f64::INFINITY });
            }
            if last_update <= sim.cfg.fp_tol * (1.0 + euclid(x)) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::FixedPoint {
                time: (self.n + 1) as f64 * h,
                iterations,
                contraction: sim.contraction,
                last_update,
            });
        }
        let norm = euclid(x);
        if !(norm <= BLOW_UP_NORM) {
            return Err(Error::BlowUp { time: (self.n + 1) as f64 * h, norm });
        }

        // integral, transformed variable and accumulators at n+1
        for j in 0..d {
            self.integral[j] = omega * x[j] + tail[j];
        }
        let mut y_new = rhs.to_vec();
        mat_vec_add(&sim.implicit_part, x, &mut y_new);
        let d_new = model.neutral_from(&self.integral);
        let resid = (0..d)
            .map(|j| {
                let e = y_new[j] - (x[j] - d_new[j]);
                e * e
            })
            .sum::<f64>()
            .sqrt();
        self.stats.max_consistency_residual =
            self.stats.max_consistency_residual.max(resid / (1.0 + norm));
        self.stats.max_fp_iterations = self.stats.max_fp_iterations.max(iterations);
        self.y = y_new;
        for (c, a) in sim.comps.iter().zip(self.acc.chunks_mut(d)) {
            for j in 0..d {
                a[j] = c.decay * a[j] + c.w_new * x[j] + c.w_old * xn[j];
            }
        }
        self.hist.extend_from_slice(x);
        self.n += 1;
        Ok(())
    }

    pub fn finish(self) -> (Path, PathStats) {
        let pre = self.sim.xi.values().len();
        let post = self.hist[pre..].to_vec();
        let path = Path::new(self.sim.xi.clone(), post).expect("dimensions are consistent");
        (path, self.stats)
    }
}

/// One path on stream `stream`.
pub fn simulate_path(
    model: &NeutralModel,
    xi: &Segment,
    cfg: &SchemeConfig,
    stream: &mut NoiseStream,
) -> Result<Path> {
    Ok(PathSimulator::new(model, xi, cfg)?.run(stream)?.0)
}

/// Two paths from `xi` and `eta` driven by the same increments.
pub fn simulate_coupled_pair(
    model: &NeutralModel,
    xi: &Segment,
    eta: &Segment,
    cfg: &SchemeConfig,
    stream: &mut NoiseStream,
) -> Result<(Path, Path)> {
    if !xi.same_shape(eta) {
        return Err(Error::ShapeMismatch("coupled initial data differ in shape".into()));
    }
    let a = PathSimulator::new(model, xi, cfg)?;
    let b = PathSimulator::new(model, eta, cfg)?;
    let ((pa, _), (pb, _)) = run_coupled(&a, &b, stream)?;
    Ok((pa, pb))
}

pub(crate) fn run_coupled(
    a: &PathSimulator<'_>,
    b: &PathSimulator<'_>,
    stream: &mut NoiseStream,
) -> Result<((Path, PathStats), (Path, PathStats))> {
    let mut dw = vec![0.0; a.model().dim()];
    let (mut sa, mut sb) = (a.start(), b.start());
    for _ in 0..a.steps() {
        stream.next_into(&mut dw);
        sa.step(&dw)?;
        sb.step(&dw)?;
    }
    Ok((sa.finish(), sb.finish()))
}

/// Mean with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Sample mean and its standard error, summed in index order.
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate { estimate: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Estimate { estimate: mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        Estimate { estimate: mean, stderr: (var / n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleOptions {
    pub checkpoints: Vec<f64>,
    /// Store `x_t` at each checkpoint for every path.
    #[serde(default)]
    pub keep_segments: bool,
    /// Keep every `segment_stride`-th point of stored segments.
    #[serde(default = "one")]
    pub segment_stride: usize,
    #[serde(default)]
    pub keep_paths: bool,
    /// Noise-stream index of the first path.
    #[serde(default)]
    pub first_path: u64,
}

fn one() -> usize {
    1
}

impl EnsembleOptions {
    pub fn at(checkpoints: &[f64]) -> Self {
        EnsembleOptions {
            checkpoints: checkpoints.to_vec(),
            keep_segments: false,
            segment_stride: 1,
            keep_paths: false,
            first_path: 0,
        }
    }

    pub fn with_segments(mut self, stride: usize) -> Self {
        self.keep_segments = true;
        self.segment_stride = stride.max(1);
        self
    }

    pub fn with_paths(mut self) -> Self {
        self.keep_paths = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub step: usize,
    pub mean: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    /// `E|x(t)|²`
    pub second_moment: Estimate,
    /// `E‖x_t‖²_r`
    pub segment_norm_sq: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub model: String,
    pub n_paths: usize,
    pub h: f64,
    pub horizon: f64,
    pub r: f64,
    pub master_seed: u64,
    /// `‖ξ‖²_r`
    pub initial_norm_sq: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub stats: PathStats,
    /// `segments[k][p]` is path `p` at checkpoint `k`.
    #[serde(skip)]
    pub segments: Option<Vec<Vec<Segment>>>,
    #[serde(skip)]
    pub paths: Option<Vec<Path>>,
}

struct PathRecord {
    x: Vec<Vec<f64>>,
    norm_sq: Vec<f64>,
    segs: Vec<Segment>,
    path: Option<Path>,
    stats: PathStats,
}

pub(crate) fn checkpoint_steps(checkpoints: &[f64], h: f64, steps: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("checkpoint {t} is negative")));
        }
        let n = grid_index(t, h)?;
        if n > steps {
            return Err(Error::OutOfRange { t, horizon: steps as f64 * h });
        }
        if out.last().is_some_and(|&p| p >= n) {
            return Err(Error::InvalidParameter("checkpoints must increase".into()));
        }
        out.push(n);
    }
    Ok(out)
}

/// Runs `f` for path indices `0..n` in parallel and returns results in index
/// order; the first failing index wins.
pub(crate) fn ordered_paths<T: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(&f).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| e.at_path(i)))
        .collect()
}

/// `n_paths` independent paths; path `i` uses noise stream `first_path + i`.
/// Results do not depend on the thread count.
pub fn simulate_ensemble(
    model: &NeutralModel,
    xi: &Segment,
    n_paths: usize,
    cfg: &SchemeConfig,
    opts: &EnsembleOptions,
) -> Result<Ensemble> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    let sim = PathSimulator::new(model, xi, cfg)?;
    let cps = checkpoint_steps(&opts.checkpoints, cfg.h, sim.steps())?;
    let r = model.r();
    let records = ordered_paths(n_paths, |i| {
        let (path, stats) = sim.run_index(opts.first_path + i as u64)?;
        let mut rec = PathRecord {
            x: Vec::with_capacity(cps.len()),
            norm_sq: Vec::with_capacity(cps.len()),
            segs: Vec::new(),
            path: None,
            stats,
        };
        for &n in &cps {
            rec.x.push(path.value_at_step(n).to_vec());
            let seg = path.segment_at_step(n)?;
            let nr = seg.cr_norm(r)?;
            rec.norm_sq.push(nr * nr);
            if opts.keep_segments {
                rec.segs.push(if opts.segment_stride > 1 { seg.subsample(opts.segment_stride)? } else { seg });
            }
        }
        if opts.keep_paths {
            rec.path = Some(path);
        }
        Ok(rec)
    })?;

    let d = model.dim();
    let mut checkpoints = Vec::with_capacity(cps.len());
    for (k, &n) in cps.iter().enumerate() {
        let mut mean = Vec::with_capacity(d);
        let mut mean_stderr = Vec::with_capacity(d);
        for j in 0..d {
            let e = Estimate::from_samples(&records.iter().map(|r| r.x[k][j]).collect::<Vec<_>>());
            mean.push(e.estimate);
            mean_stderr.push(e.stderr);
        }
        let sq: Vec<f64> = records.iter().map(|r| r.x[k].iter().map(|v| v * v).sum()).collect();
        let ns: Vec<f64> = records.iter().map(|r| r.norm_sq[k]).collect();
        checkpoints.push(Checkpoint {
            t: n as f64 * cfg.h,
            step: n,
            mean,
            mean_stderr,
            second_moment: Estimate::from_samples(&sq),
            segment_norm_sq: Estimate::from_samples(&ns),
        });
    }
    let mut stats = PathStats::default();
    records.iter().for_each(|r| stats.merge(&r.stats));
    let xi_norm = xi.cr_norm(r)?;
    let mut records = records;
    let segments = opts.keep_segments.then(|| {
        (0..cps.len())
            .map(|k| records.iter_mut().map(|r| std::mem::replace(&mut r.segs[k], placeholder())).collect())
            .collect()
    });
    let paths = opts
        .keep_paths
        .then(|| records.iter_mut().map(|r| r.path.take().expect("kept")).collect());
    Ok(Ensemble {
        model: model.name(),
        n_paths,
        h: cfg.h,
        horizon: sim.steps() as f64 * cfg.h,
        r,
        master_seed: cfg.master_seed,
        initial_norm_sq: xi_norm * xi_norm,
        checkpoints,
        stats,
        segments,
        paths,
    })
}

fn placeholder() -> Segment {
    Segment::constant(1.0, 1, &[0.0]).expect("valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub h: Vec<f64>,
    pub rms_error: Vec<f64>,
    pub reference_h: f64,
    pub n_paths: usize,
    pub slope: f64,
}

/// Strong convergence order from endpoint errors against a reference
/// solution on `h_min/16`, all grids sharing the same Brownian path.
pub fn strong_order_probe(
    model: &NeutralModel,
    init: &InitialData,
    h_list: &[f64],
    horizon: f64,
    n_paths: usize,
    cfg: &SchemeConfig,
) -> Result<OrderReport> {
    if h_list.len() < 3 {
        return Err(Error::InvalidParameter("the order probe needs at least three step sizes".into()));
    }
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be at least 1".into()));
    }
    let h_ref = h_list[h_list.len() - 1] / 16.0;
    let mut ratios = Vec::with_capacity(h_list.len());
    for (i, &h) in h_list.iter().enumerate() {
        if i > 0 && !(h < h_list[i - 1]) {
            return Err(Error::InvalidParameter("step sizes must be descending".into()));
        }
        let q = h / h_ref;
        if (q - q.round()).abs() > 1e-9 * q {
            return Err(Error::InvalidParameter(format!("step {h} is not a multiple of {h_ref}")));
        }
        ratios.push(q.round() as usize);
    }
    for w in h_list.windows(2) {
        let q = w[0] / w[1];
        if (q - q.round()).abs() > 1e-9 * q {
            return Err(Error::InvalidParameter("step sizes must be nested".into()));
        }
    }
    let with_h = |h: f64| SchemeConfig { h, horizon, ..cfg.clone() };
    let ref_cfg = with_h(h_ref);
    let n_ref = ref_cfg.steps()?;
    let ref_xi = ref_cfg.initial_segment(model, init)?;
    let ref_sim = PathSimulator::new(model, &ref_xi, &ref_cfg)?;
    let cfgs: Vec<SchemeConfig> = h_list.iter().map(|&h| with_h(h)).collect();
    let xis: Vec<Segment> =
        cfgs.iter().map(|c| c.initial_segment(model, init)).collect::<Result<_>>()?;
    let sims: Vec<PathSimulator<'_>> = cfgs
        .iter()
        .zip(&xis)
        .map(|(c, x)| PathSimulator::new(model, x, c))
        .collect::<Result<_>>()?;
    let d = model.dim();

    let errors = ordered_paths(n_paths, |p| {
        let mut stream = NoiseStream::new(cfg.master_seed, p as u64, d, h_ref);
        let mut fine = vec![0.0; n_ref * d];
        for chunk in fine.chunks_mut(d) {
            stream.next_into(chunk);
        }
        let mut st = ref_sim.start();
        for dw in fine.chunks(d) {
            st.step(dw)?;
        }
        let reference = st.current().to_vec();
        let mut errs = Vec::with_capacity(sims.len());
        for (sim, &q) in sims.iter().zip(&ratios) {
            let mut st = sim.start();
            let mut dw = vec![0.0; d];
            for block in fine.chunks(q * d) {
                dw.iter_mut().for_each(|v| *v = 0.0);
                for inc in block.chunks(d) {
                    for j in 0..d {
                        dw[j] += inc[j];
                    }
                }
                st.step(&dw)?;
            }
            let e: f64 = st.current().iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum();
            errs.push(e);
        }
        Ok(errs)
    })?;

    let rms_error: Vec<f64> = (0..h_list.len())
        .map(|i| (errors.iter().map(|e| e[i]).sum::<f64>() / n_paths as f64).sqrt())
        .collect();
    let lx: Vec<f64> = h_list.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = rms_error.iter().map(|e| e.ln()).collect();
    let slope = crate::lab::fit::least_squares(&lx, &ly).0;
    Ok(OrderReport { h: h_list.to_vec(), rms_error, reference_h: h_ref, n_paths, slope })
}

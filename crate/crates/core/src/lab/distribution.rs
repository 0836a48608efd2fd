//! Stability in distribution through empirical `d_L` between ensembles.

use serde::{Deserialize, Serialize};

use super::dl::empirical_dl;
use crate::error::{Error, Result};
use crate::fading_memory::Segment;
use crate::integrator::{simulate_ensemble, EnsembleOptions, SchemeConfig};
use crate::model::NeutralModel;

/// Allowed distance above the noise floor at the last checkpoint.
pub const FINAL_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionOptions {
    pub checkpoints: Vec<f64>,
    pub n_paths: usize,
    #[serde(default = "DistributionOptions::default_family")]
    pub family_size: usize,
    /// Seed of the test family.
    #[serde(default)]
    pub family_seed: u64,
    /// Keep every `segment_stride`-th point; 0 picks a stride that leaves
    /// about 256 points.
    #[serde(default)]
    pub segment_stride: usize,
}

impl DistributionOptions {
    fn default_family() -> usize {
        1000
    }

    pub fn new(checkpoints: &[f64], n_paths: usize) -> Self {
        DistributionOptions {
            checkpoints: checkpoints.to_vec(),
            n_paths,
            family_size: Self::default_family(),
            family_seed: 0,
            segment_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlReport {
    pub checkpoints: Vec<f64>,
    pub n_paths: usize,
    pub family_size: usize,
    pub segment_stride: usize,
    /// Largest pairwise cross-initial-data estimate at each checkpoint.
    pub cross: Vec<f64>,
    /// Largest split-half estimate within one ensemble at each checkpoint.
    pub noise_floor: Vec<f64>,
    /// `consecutive[i][k]`: ensemble `i` between checkpoints `k` and `k+1`.
    pub consecutive: Vec<Vec<f64>>,
    /// Every step either decreases strictly or is already at the floor.
    pub cross_decreasing: bool,
    pub final_tolerance: f64,
    /// `cross ≤ floor + tolerance` at the last checkpoint.
    pub final_within_floor: bool,
    pub pass: bool,
    pub note: String,
}

/// Simulates one ensemble per initial history, all on the same noise streams,
/// and tracks how fast their segment laws merge.
pub fn stability_in_distribution_report(
    model: &NeutralModel,
    xi_list: &[Segment],
    cfg: &SchemeConfig,
    opts: &DistributionOptions,
) -> Result<DlReport> {
    if xi_list.len() < 2 {
        return Err(Error::InvalidParameter("at least two initial histories are needed".into()));
    }
    if opts.n_paths < 2 {
        return Err(Error::InvalidParameter("split halves need at least two paths".into()));
    }
    if opts.checkpoints.is_empty() {
        return Err(Error::InvalidParameter("no checkpoints".into()));
    }
    let depth = xi_list[0].depth();
    let stride = if opts.segment_stride == 0 { depth.div_ceil(256).max(1) } else { opts.segment_stride };
    let eopts = EnsembleOptions::at(&opts.checkpoints).with_segments(stride);
    let ensembles = xi_list
        .iter()
        .map(|xi| simulate_ensemble(model, xi, opts.n_paths, cfg, &eopts))
        .collect::<Result<Vec<_>>>()?;
    let segs: Vec<&Vec<Vec<Segment>>> =
        ensembles.iter().map(|e| e.segments.as_ref().expect("requested")).collect();
    let r = model.r();
    let (fs, seed) = (opts.family_size, opts.family_seed);
    let k_count = opts.checkpoints.len();
    let half = opts.n_paths / 2;

    let mut cross = Vec::with_capacity(k_count);
    let mut floor = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let mut c: f64 = 0.0;
        for i in 0..segs.len() {
            for j in i + 1..segs.len() {
                c = c.max(empirical_dl(&segs[i][k], &segs[j][k], r, fs, seed)?.estimate);
            }
        }
        let mut f: f64 = 0.0;
        for s in &segs {
            let (a, b) = s[k].split_at(half);
            f = f.max(empirical_dl(a, b, r, fs, seed)?.estimate);
        }
        cross.push(c);
        floor.push(f);
    }
    let consecutive = segs
        .iter()
        .map(|s| {
            (0..k_count.saturating_sub(1))
                .map(|k| Ok(empirical_dl(&s[k], &s[k + 1], r, fs, seed)?.estimate))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let cross_decreasing = (1..k_count).all(|k| cross[k] < cross[k - 1] || cross[k] <= floor[k]);
    let last = k_count - 1;
    let final_within_floor = cross[last] <= floor[last] + FINAL_TOLERANCE;
    let pass = cross_decreasing && final_within_floor;
    let note = if pass {
        "cross-initial-data distance decays to the Monte Carlo floor".to_string()
    } else if !cross_decreasing {
        "cross-initial-data distance fails to decrease above the noise floor".to_string()
    } else {
        format!(
            "final distance {:.4} exceeds noise floor {:.4} + {}",
            cross[last], floor[last], FINAL_TOLERANCE
        )
    };
    Ok(DlReport {
        checkpoints: opts.checkpoints.clone(),
        n_paths: opts.n_paths,
        family_size: fs,
        segment_stride: stride,
        cross,
        noise_floor: floor,
        consecutive,
        cross_decreasing,
        final_tolerance: FINAL_TOLERANCE,
        final_within_floor,
        pass,
        note,
    })
}

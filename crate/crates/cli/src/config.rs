//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nsfde_core::integrator::{DriftTreatment, NeutralSolve};
use nsfde_core::measures::DEFAULT_TOL_TAIL;
use nsfde_core::model::{ExampleConstants, ModelSpec};
use nsfde_core::{CheckConfig, EpsChoice, InitialData, SchemeConfig};

/// Step-size and solver settings. The seed lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "default_fp_max_iter")]
    pub fp_max_iter: usize,
    #[serde(default = "default_tol_tail")]
    pub tol_tail: f64,
    #[serde(default)]
    pub drift: DriftTreatment,
    #[serde(default)]
    pub neutral_solve: NeutralSolve,
    #[serde(default)]
    pub force: bool,
}

fn default_fp_tol() -> f64 {
    1e-12
}
fn default_fp_max_iter() -> usize {
    64
}
fn default_tol_tail() -> f64 {
    DEFAULT_TOL_TAIL
}

impl SchemeSection {
    pub fn new(h: f64, horizon: f64) -> Self {
        SchemeSection {
            h,
            horizon,
            fp_tol: default_fp_tol(),
            fp_max_iter: default_fp_max_iter(),
            tol_tail: default_tol_tail(),
            drift: DriftTreatment::default(),
            neutral_solve: NeutralSolve::default(),
            force: false,
        }
    }

    pub fn with_seed(&self, master_seed: u64) -> SchemeConfig {
        SchemeConfig {
            h: self.h,
            horizon: self.horizon,
            fp_tol: self.fp_tol,
            fp_max_iter: self.fp_max_iter,
            tol_tail: self.tol_tail,
            master_seed,
            drift: self.drift,
            neutral_solve: self.neutral_solve,
            force: self.force,
        }
    }
}

/// How to pick `ε₁, ε₂` and `λ` for the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LedgerSection {
    #[serde(default)]
    pub eps: EpsChoice,
    #[serde(default)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Check {
        #[serde(default)]
        check: CheckSection,
        #[serde(default)]
        ledger: LedgerSection,
    },
    Constants {
        #[serde(default)]
        ledger: LedgerSection,
    },
    Simulate {
        #[serde(default)]
        initial: Option<InitialData>,
        n_paths: usize,
        checkpoints: Vec<f64>,
        #[serde(default)]
        ledger: LedgerSection,
        /// Paths checked for the pathwise inequalities.
        #[serde(default)]
        invariant_paths: usize,
        /// Write the first path to `path_0.csv`.
        #[serde(default)]
        write_path: bool,
    },
    Coupling {
        #[serde(default)]
        xi: Option<InitialData>,
        #[serde(default)]
        eta: Option<InitialData>,
        n_pairs: usize,
        checkpoints: Vec<f64>,
        #[serde(default = "default_window")]
        window: f64,
        #[serde(default)]
        burn_in: f64,
        #[serde(default)]
        ledger: LedgerSection,
    },
    Distribution {
        initial: Vec<InitialData>,
        n_paths: usize,
        checkpoints: Vec<f64>,
        #[serde(default = "default_family")]
        family_size: usize,
        #[serde(default)]
        segment_stride: usize,
        #[serde(default)]
        ledger: LedgerSection,
    },
    Order {
        #[serde(default)]
        initial: Option<InitialData>,
        h_list: Vec<f64>,
        horizon: f64,
        n_paths: usize,
    },
    Example5(Example5Params),
}

fn default_window() -> f64 {
    1.0
}
fn default_family() -> usize {
    1000
}

/// Trials and tolerances for the hypothesis checks; the seed is derived
/// from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_trials() -> usize {
    10_000
}
fn default_grid_step() -> f64 {
    0.05
}
fn default_tol() -> f64 {
    1e-9
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection { trials: default_trials(), grid_step: default_grid_step(), tol: default_tol() }
    }
}

impl CheckSection {
    pub fn with_seed(&self, seed: u64) -> CheckConfig {
        CheckConfig { trials: self.trials, seed, grid_step: self.grid_step, tol: self.tol, ..Default::default() }
    }
}

/// The built-in scalar example with every run it supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example5Params {
    pub c: f64,
    pub eps: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub constants: ExampleConstants,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_family")]
    pub family_size: usize,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub ledger: LedgerSection,
}

fn default_rho() -> f64 {
    1.0
}
fn default_r() -> f64 {
    0.25
}
fn default_n_paths() -> usize {
    2000
}
fn default_checkpoints() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0]
}

impl Example5Params {
    pub fn new(c: f64, eps: f64, rho: f64, r: f64) -> Self {
        Example5Params {
            c,
            eps,
            rho,
            r,
            constants: ExampleConstants::default(),
            n_paths: default_n_paths(),
            checkpoints: default_checkpoints(),
            family_size: default_family(),
            check: CheckSection::default(),
            ledger: LedgerSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required by every kind except `example5`.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Required by the simulation kinds; `example5` defaults to `h = 0.01`
    /// and `T` = the last checkpoint.
    #[serde(default)]
    pub scheme: Option<SchemeSection>,
    pub experiment: Experiment,
    /// Seed for every random draw of the run.
    #[serde(default)]
    pub master_seed: u64,
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Reads and validates a config; errors name the offending field path.
pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn parse_config(text: &str) -> anyhow::Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        anyhow::anyhow!("invalid config at `{at}`: {}", e.into_inner())
    })
}

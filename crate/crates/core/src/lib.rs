//! Simulation and verification toolkit for neutral stochastic functional
//! differential equations with infinite fading memory.

// `!(x > 0.0)` is used deliberately so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fading_memory;
pub mod integrator;
pub mod lab;
pub mod measures;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use fading_memory::{cr_norm, segment_sub, sup_norm, InitialData, Path, Segment};
pub use measures::{FadingMeasure, IntegrationMode, Integral};
pub use model::{
    example5_threshold, CheckConfig, CheckReport, ConstantLedger, EpsChoice, ExampleConstants,
    NeutralModel,
};
pub use integrator::{
    simulate_coupled_pair, simulate_ensemble, simulate_path, strong_order_probe, Ensemble,
    EnsembleOptions, Estimate, OrderReport, SchemeConfig,
};
pub use lab::{
    coupling_decay, empirical_dl, fit_decay_rate, second_moment_curve, segment_norm_curve,
    stability_in_distribution_report, CouplingOptions, CouplingReport, CurvePoint,
    DistributionOptions, DlReport,
};
pub use rng::NoiseStream;

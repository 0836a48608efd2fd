use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("time {t} is not aligned with the grid (step {h})")]
    GridAlignment { t: f64, h: f64 },

    #[error("time {t} lies outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// The measure has an infinite exponential moment at this rate.
    #[error("measure is not in M_r for r = {r}: component with rate {rho} <= r")]
    NotInMr { r: f64, rho: f64 },

    #[error(
        "history window too short: tail weight {tail:.3e} exceeds tolerance {tol:.3e} \
         (error bound {bound:.3e})"
    )]
    Truncation { tail: f64, tol: f64, bound: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "neutral fixed point did not converge at t = {time} after {iterations} iterations \
         (contraction estimate {contraction:.3e}, last update {last_update:.3e})"
    )]
    FixedPoint {
        time: f64,
        iterations: usize,
        contraction: f64,
        last_update: f64,
    },

    #[error("explosion at t = {time}: state norm {norm:.3e}")]
    BlowUp { time: f64, norm: f64 },

    #[error("path {index}: {source}")]
    Path {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("decay fit impossible: {0}")]
    Fit(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_path(self, index: usize) -> Error {
        Error::Path {
            index,
            source: Box::new(self),
        }
    }
}

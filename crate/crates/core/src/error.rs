use thiserror::Error;

/// Everything that can go wrong inside the simulator and estimator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate spectrum: total intensity is not positive")]
    DegenerateSpectrum,

    #[error("incompatible wavelength grids: {0}")]
    IncompatibleGrids(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Pre- and post-selected states are exactly orthogonal, so nothing is
    /// post-selected and the weak value is undefined.
    #[error("orthogonal post-selection: post-selection probability is zero")]
    OrthogonalPostselection,

    #[error("no photons survive post-selection (total intensity {total:e})")]
    NoPhotons { total: f64 },

    #[error("non-invertible calibration: {0}")]
    NonInvertible(String),

    #[error("calibration curve is not monotone on alpha interval [{lo}, {hi}]")]
    NonMonotone { lo: f64, hi: f64 },

    #[error("shift {value} nm lies outside the calibrated range [{min}, {max}] nm")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("zero calibration slope: {0}")]
    ZeroSlope(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

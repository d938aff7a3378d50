use std::fmt;

use weakphase::Error;

/// Process exit codes.
pub mod code {
    pub const IO: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const PHYSICS: u8 = 3;
    pub const CALIBRATION: u8 = 4;
    pub const RANGE: u8 = 5;
}

/// A user-facing error together with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: code::CONFIG, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: code::IO, message: message.into() }
    }

    /// Library error raised while checking the config section at `path`.
    pub fn field(path: &str, err: Error) -> Self {
        let f = Self::from(err);
        Self { message: format!("{path}: {}", f.message), ..f }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::NoPhotons { .. } | Error::DegenerateSpectrum | Error::OrthogonalPostselection => code::PHYSICS,
            Error::NonInvertible(_) | Error::NonMonotone { .. } | Error::ZeroSlope(_) => code::CALIBRATION,
            Error::OutOfRange { .. } => code::RANGE,
            Error::InvalidConfig(_)
            | Error::IncompatibleGrids(_)
            | Error::Domain(_)
            | Error::Parse(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => code::CONFIG,
        };
        Self { code, message: err.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

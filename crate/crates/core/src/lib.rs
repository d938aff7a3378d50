//! Weak-measurement phase estimation with a broadband source.
//!
//! A pre-selected polarization passes a thin effective birefringent plate of
//! phase `α` and is post-selected nearly orthogonally (parameter `β`). The
//! imaginary weak value that the plate itself generates shifts the centroid
//! of the transmitted spectrum by
//!
//! ```text
//! δλ = 2 Δλ² α² / (λ0 (β² + α²))
//! ```
//!
//! * [`spectral`]: sampled spectra, centroids and widths.
//! * [`polarization`]: Jones vectors and wavelength-dependent elements.
//! * [`weakvalue`]: exact and small-angle weak values, analytic shifts.
//! * [`simulator`]: full Jones-calculus propagation and detector model.
//! * [`estimator`]: calibration curves, inversion and precision.

pub mod error;
pub mod estimator;
mod fmt;
mod pchip;
pub mod polarization;
pub mod simulator;
pub mod spectral;
pub mod weakvalue;

pub use error::{Error, Result};
pub use fmt::sig9;

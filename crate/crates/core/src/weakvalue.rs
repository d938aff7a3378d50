//! Analytic weak values of `A = |H⟩⟨H| − |V⟩⟨V|` and the pointer shifts
//! they produce.
//!
//! Two normalizations of the coupling circulate for this setup. Writing the
//! plate's relative phase as `α`:
//!
//! * [`Convention::Scaled`] pairs `k = α/P0` with `Im A_w = α/(β²+α²)`.
//! * [`Convention::Physical`] pairs `k = α/(2 P0)` with the first-order
//!   expansion of the exact weak value, `Im A_w = 2α/(β²+α²)`.
//!
//! Both give the same momentum and wavelength shifts, which are the
//! quantities the simulator reproduces independently.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{post_state, pre_state, JonesMatrix, PolarizationState};
use crate::spectral::SourceParams;

/// Below this the post-selection amplitude counts as zero.
const MIN_OVERLAP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakValue {
    pub re: f64,
    pub im: f64,
}

impl WeakValue {
    fn from_complex(z: Complex64) -> Result<Self> {
        if z.re.is_finite() && z.im.is_finite() {
            Ok(Self { re: z.re, im: z.im })
        } else {
            Err(Error::OrthogonalPostselection)
        }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

fn plate(phase: f64) -> JonesMatrix {
    JonesMatrix::diag(Complex64::cis(-phase / 2.0), Complex64::cis(phase / 2.0))
}

/// Weak value from the two-state vector at fractional depth `x ∈ [0, 1]`
/// inside the plate: the forward state has crossed a phase `α·x`, the
/// backward state `α·(1 − x)`.
pub fn weak_value_at_position(alpha: f64, beta: f64, x: f64) -> Result<WeakValue> {
    let forward = plate(alpha * x).apply(&pre_state().amplitudes());
    let backward_op = plate(alpha * (1.0 - x)).adjoint();
    let post = post_state(beta);
    // ⟨φ(x)| = ⟨post| U(α(1−x)), i.e. |φ(x)⟩ = U† |post⟩.
    let back = backward_op.apply(&post.amplitudes());
    let back = PolarizationState::new(back[0], back[1])?;
    let denominator = back.overlap(&forward);
    if denominator.norm() < MIN_OVERLAP {
        return Err(Error::OrthogonalPostselection);
    }
    let numerator = back.overlap(&JonesMatrix::observable_a().apply(&forward));
    WeakValue::from_complex(numerator / denominator)
}

/// Exact weak value `⟨φ|A U|ψ⟩ / ⟨φ|U|ψ⟩` for plate phase `α` and
/// post-selection parameter `β`.
///
/// Evaluated from inner products rather than the cotangent form so that
/// `β = π/2` is regular (it gives `A_w = −1`).
pub fn weak_value_exact(alpha: f64, beta: f64) -> Result<WeakValue> {
    weak_value_at_position(alpha, beta, 0.0)
}

/// Small-angle form `1/(β − iα)`.
pub fn weak_value_smallangle(alpha: f64, beta: f64) -> Result<WeakValue> {
    let r2 = alpha * alpha + beta * beta;
    if r2 == 0.0 {
        return Err(Error::OrthogonalPostselection);
    }
    Ok(WeakValue { re: beta / r2, im: alpha / r2 })
}

/// `Im A_w ≈ α/(β² + α²)`.
pub fn im_weak_value_smallangle(alpha: f64, beta: f64) -> Result<f64> {
    Ok(weak_value_smallangle(alpha, beta)?.im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Scaled,
    Physical,
}

/// Integrated coupling `k` together with the angles it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub alpha: f64,
    pub beta: f64,
    /// Integrated coupling, nm/rad.
    pub k: f64,
    pub lambda0: f64,
    pub convention: Convention,
}

impl CouplingParams {
    pub fn new(alpha: f64, beta: f64, lambda0: f64, convention: Convention) -> Result<Self> {
        if !(lambda0 > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda0 must be > 0, got {lambda0}")));
        }
        let p0 = TAU / lambda0;
        let k = match convention {
            Convention::Scaled => alpha / p0,
            Convention::Physical => alpha / (2.0 * p0),
        };
        Ok(Self { alpha, beta, k, lambda0, convention })
    }

    /// `Im A_w` matching this convention's normalization of `k`.
    pub fn im_weak_value(&self) -> Result<f64> {
        let im = im_weak_value_smallangle(self.alpha, self.beta)?;
        Ok(match self.convention {
            Convention::Scaled => im,
            Convention::Physical => 2.0 * im,
        })
    }
}

/// Pointer momentum shift `δP = 2k(ΔP)² Im A_w`, rad/nm.
pub fn momentum_shift(cp: &CouplingParams, delta_p: f64) -> Result<f64> {
    Ok(2.0 * cp.k * delta_p * delta_p * cp.im_weak_value()?)
}

/// Converts a momentum shift to a wavelength-shift magnitude via `λ = 2π/P`.
pub fn momentum_to_wavelength_shift(delta_p_shift: f64, lambda0: f64) -> f64 {
    lambda0 * lambda0 * delta_p_shift / TAU
}

/// `δλ = 2Δλ²α² / (λ0(β² + α²))`, nm.
pub fn wavelength_shift_analytic(alpha: f64, beta: f64, src: &SourceParams) -> Result<f64> {
    let r2 = alpha * alpha + beta * beta;
    if r2 == 0.0 {
        return Err(Error::OrthogonalPostselection);
    }
    Ok(saturated_shift(src) * (alpha * alpha / r2))
}

/// The `β = 0` ceiling `2Δλ²/λ0` of the analytic shift.
pub fn saturated_shift(src: &SourceParams) -> f64 {
    2.0 * src.delta_lambda * src.delta_lambda / src.lambda0
}

/// `∂δλ/∂α = (2Δλ²/λ0)·2αβ²/(β² + α²)²`.
pub fn wavelength_shift_slope(alpha: f64, beta: f64, src: &SourceParams) -> Result<f64> {
    let r2 = alpha * alpha + beta * beta;
    if r2 == 0.0 {
        return Err(Error::OrthogonalPostselection);
    }
    Ok(saturated_shift(src) * 2.0 * alpha * beta * beta / (r2 * r2))
}

/// Analytic inverse of [`wavelength_shift_analytic`] for `β ≠ 0`, α ≥ 0.
pub fn alpha_from_shift(delta_lambda: f64, beta: f64, src: &SourceParams) -> Result<f64> {
    let ceiling = saturated_shift(src);
    if beta == 0.0 {
        return Err(Error::NonInvertible("shift is independent of alpha at beta = 0".into()));
    }
    if !(0.0..ceiling).contains(&delta_lambda) {
        return Err(Error::OutOfRange { value: delta_lambda, min: 0.0, max: ceiling });
    }
    Ok(beta.abs() * (delta_lambda / (ceiling - delta_lambda)).sqrt())
}

//! Phase estimation from measured spectral shifts.
//!
//! A [`CalibrationCurve`] tabulates the expected shift magnitude `|δλ|`
//! against the plate phase `α` at fixed post-selection and source. Measured
//! shifts are inverted through a monotone cubic interpolant of that table and
//! the phase uncertainty is `σ_δλ / |∂δλ/∂α|`.
//!
//! At `β = 0` with ideal polarizers the shift does not depend on `α`, so that
//! regime needs a curve built with the polarizer spread.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pchip::Pchip;
use crate::simulator::{simulate, SetupConfig, SpectrometerConfig, SpreadWeighting};
use crate::spectral::{read_two_column, shift_between, SourceParams, Spectrum};
use crate::weakvalue::{alpha_from_shift, wavelength_shift_analytic, wavelength_shift_slope};

/// Default node count over the default α range.
pub const DEFAULT_NODES: usize = 121;
/// Default calibrated α range, rad.
pub const DEFAULT_ALPHA_RANGE: (f64, f64) = (0.0, 0.013);

/// How the expected shifts of a curve were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CurveMode {
    /// Closed-form shift with ideal polarizers.
    Analytic,
    /// Jones-calculus simulation with ideal polarizers.
    Simulated,
    /// Simulation averaged over the polarizer spread.
    SimulatedWithSpread { spread: f64, weighting: SpreadWeighting },
}

/// Monotone table of `(α, |δλ|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    beta: f64,
    source: SourceParams,
    mode: CurveMode,
    interp: Pchip,
}

impl CalibrationCurve {
    /// Validates that both columns are strictly increasing.
    pub fn from_points(beta: f64, source: SourceParams, mode: CurveMode, points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidConfig(format!("calibration needs ≥ 3 points, got {}", points.len())));
        }
        for w in points.windows(2) {
            let ((a0, d0), (a1, d1)) = (w[0], w[1]);
            if !(a1 > a0) || !(d1 > d0) {
                return Err(Error::NonMonotone { lo: a0, hi: a1 });
            }
        }
        let (xs, ys) = points.iter().copied().unzip();
        Ok(Self { beta, source, mode, interp: Pchip::new(xs, ys) })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn source(&self) -> SourceParams {
        self.source
    }

    pub fn mode(&self) -> CurveMode {
        self.mode
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.interp.xs().iter().copied().zip(self.interp.ys().iter().copied())
    }

    pub fn alpha_range(&self) -> (f64, f64) {
        let xs = self.interp.xs();
        (xs[0], xs[xs.len() - 1])
    }

    pub fn shift_range(&self) -> (f64, f64) {
        let ys = self.interp.ys();
        (ys[0], ys[ys.len() - 1])
    }

    /// Interpolated shift magnitude at `alpha`.
    pub fn shift_at(&self, alpha: f64) -> f64 {
        self.interp.eval(alpha)
    }

    /// Interpolated `∂|δλ|/∂α`.
    pub fn slope_at(&self, alpha: f64) -> f64 {
        self.interp.derivative(alpha)
    }

    /// `alpha_rad,delta_lambda_nm` rows, written with round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha_rad,delta_lambda_nm\n");
        for (a, d) in self.points() {
            s.push_str(&format!("{a},{d}\n"));
        }
        s
    }

    pub fn sidecar(&self) -> CalibrationSidecar {
        CalibrationSidecar {
            format_version: 1,
            beta_rad: self.beta,
            source: self.source,
            mode: self.mode,
            n_points: self.interp.xs().len(),
            build_hash: sha256_hex(self.to_csv().as_bytes()),
        }
    }

    pub fn write<W1: Write, W2: Write>(&self, mut csv: W1, sidecar: W2) -> Result<()> {
        csv.write_all(self.to_csv().as_bytes())?;
        serde_json::to_writer_pretty(sidecar, &self.sidecar())?;
        Ok(())
    }

    /// Reloads a curve; the CSV must hash to the sidecar's `build_hash`.
    pub fn read<R1: Read, R2: Read>(mut csv: R1, sidecar: R2) -> Result<Self> {
        let meta: CalibrationSidecar = serde_json::from_reader(sidecar)?;
        let mut text = String::new();
        csv.read_to_string(&mut text)?;
        let hash = sha256_hex(text.as_bytes());
        if hash != meta.build_hash {
            return Err(Error::Parse(format!(
                "calibration table hash {hash} does not match sidecar {}",
                meta.build_hash
            )));
        }
        let (xs, ys) = read_two_column(text.as_bytes(), ["alpha_rad", "delta_lambda_nm"])?;
        let points: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
        Self::from_points(meta.beta_rad, meta.source, meta.mode, &points)
    }
}

/// JSON metadata stored next to a calibration CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSidecar {
    pub format_version: u32,
    pub beta_rad: f64,
    pub source: SourceParams,
    pub mode: CurveMode,
    pub n_points: usize,
    pub build_hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn alpha_nodes(alpha_range: (f64, f64), n_points: usize) -> Result<Vec<f64>> {
    let (lo, hi) = alpha_range;
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha range must satisfy 0 ≤ lo < hi, got [{lo}, {hi}]")));
    }
    if n_points < 3 {
        return Err(Error::InvalidConfig(format!("calibration needs ≥ 3 points, got {n_points}")));
    }
    let step = (hi - lo) / (n_points - 1) as f64;
    Ok((0..n_points).map(|i| if i == n_points - 1 { hi } else { lo + i as f64 * step }).collect())
}

/// Builds a curve for an ideal Gaussian source and detector.
pub fn build_calibration(
    beta: f64,
    source: SourceParams,
    alpha_range: (f64, f64),
    n_points: usize,
    mode: CurveMode,
) -> Result<CalibrationCurve> {
    let template = SetupConfig::ideal(source, 0.0, beta)?;
    build_calibration_from(&template, alpha_range, n_points, mode)
}

/// Builds a curve whose simulated shifts go through the same source,
/// dispersion, grid and detector window as `template`, with detector noise
/// switched off.
pub fn build_calibration_from(
    template: &SetupConfig,
    alpha_range: (f64, f64),
    n_points: usize,
    mode: CurveMode,
) -> Result<CalibrationCurve> {
    let beta = template.postsel.beta;
    let source = template.source;
    let alphas = alpha_nodes(alpha_range, n_points)?;

    let mut base = template.clone();
    base.spectrometer = SpectrometerConfig { window: template.spectrometer.window, ..SpectrometerConfig::ideal() };
    match mode {
        CurveMode::Analytic | CurveMode::Simulated if beta == 0.0 => {
            return Err(Error::NonInvertible(
                "with ideal polarizers at beta = 0 the shift is independent of alpha; use a spread-mode curve".into(),
            ));
        }
        CurveMode::Simulated => base.postsel.spread = 0.0,
        CurveMode::SimulatedWithSpread { spread, weighting } => {
            base.postsel.spread = spread;
            base.weighting = weighting;
        }
        CurveMode::Analytic => {}
    }

    let shifts: Vec<f64> = match mode {
        CurveMode::Analytic => {
            alphas.iter().map(|&a| wavelength_shift_analytic(a, beta, &source)).collect::<Result<_>>()?
        }
        _ => alphas
            .par_iter()
            .map(|&a| simulate(&base.with_alpha(a)).map(|r| r.delta_lambda.abs()))
            .collect::<Result<_>>()?,
    };
    let points: Vec<(f64, f64)> = alphas.into_iter().zip(shifts).collect();
    CalibrationCurve::from_points(beta, source, mode, &points)
}

/// Phase whose calibrated shift equals `measured_dl` (a magnitude, nm).
pub fn invert_shift(curve: &CalibrationCurve, measured_dl: f64) -> Result<f64> {
    let (min, max) = curve.shift_range();
    if !(measured_dl >= min && measured_dl <= max) {
        return Err(Error::OutOfRange { value: measured_dl, min, max });
    }
    Ok(curve.interp.inverse_increasing(measured_dl))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    CurveInversion,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(rename = "alpha_hat_rad")]
    pub alpha_hat: f64,
    /// `+∞` where the calibration slope vanishes (serialized as `null`).
    #[serde(rename = "sigma_alpha_rad")]
    pub sigma_alpha: f64,
    #[serde(rename = "beta_used_rad")]
    pub beta_used: f64,
    pub method: EstimateMethod,
}

/// Inverts `measured_dl` on `curve` and propagates `sigma_dl` through the
/// local curve slope.
pub fn estimate(curve: &CalibrationCurve, measured_dl: f64, sigma_dl: f64) -> Result<Estimate> {
    let alpha_hat = invert_shift(curve, measured_dl)?;
    let slope = curve.slope_at(alpha_hat);
    let sigma_alpha = if sigma_dl == 0.0 {
        0.0
    } else if slope > 0.0 {
        sigma_dl / slope
    } else {
        f64::INFINITY
    };
    Ok(Estimate { alpha_hat, sigma_alpha, beta_used: curve.beta(), method: EstimateMethod::CurveInversion })
}

/// Inverts the analytic shift formula directly (ideal polarizers, `β ≠ 0`).
pub fn estimate_closed_form(beta: f64, source: &SourceParams, measured_dl: f64, sigma_dl: f64) -> Result<Estimate> {
    let alpha_hat = alpha_from_shift(measured_dl, beta, source)?;
    let sigma_alpha = precision(alpha_hat, beta, source, sigma_dl)?;
    Ok(Estimate { alpha_hat, sigma_alpha, beta_used: beta, method: EstimateMethod::ClosedForm })
}

/// `|δλ|` between two spectra sampled on the same grid.
pub fn shift_from_spectra(reference: &Spectrum, measured: &Spectrum) -> Result<f64> {
    Ok(shift_between(reference, measured)?.abs())
}

/// Phase uncertainty `σ_α = σ_δλ / |∂δλ/∂α|` from the analytic shift.
///
/// At `β = α` this is `λ0·α·σ_δλ/Δλ²`. At `α = 0` the slope vanishes and the
/// bound is `+∞`. `β = 0` is an error because the slope is zero everywhere.
pub fn precision(alpha: f64, beta: f64, source: &SourceParams, sigma_dl: f64) -> Result<f64> {
    if beta == 0.0 {
        return Err(Error::ZeroSlope(
            "the ideal-polarizer shift is flat in alpha at beta = 0; use a spread-mode calibration curve".into(),
        ));
    }
    if !(sigma_dl >= 0.0) {
        return Err(Error::InvalidConfig(format!("sigma_dl must be ≥ 0, got {sigma_dl}")));
    }
    if sigma_dl == 0.0 {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(sigma_dl / wavelength_shift_slope(alpha, beta, source)?.abs())
}

/// Post-selection parameter giving the best precision for a phase near
/// `alpha_prior`.
pub fn optimal_beta(alpha_prior: f64) -> Result<f64> {
    if !(alpha_prior > 0.0) {
        return Err(Error::Domain(format!("alpha prior must be > 0, got {alpha_prior}")));
    }
    Ok(alpha_prior)
}

/// Brute-force minimizer of [`precision`] over `β ∈ [α/4, 4α]` on a
/// log-uniform grid of `n` points.
pub fn scan_optimal_beta(alpha: f64, source: &SourceParams, sigma_dl: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0) || n < 2 {
        return Err(Error::Domain("scan needs alpha > 0 and at least two points".into()));
    }
    let (lo, hi) = ((alpha / 4.0).ln(), (4.0 * alpha).ln());
    let mut best = (f64::INFINITY, alpha);
    for i in 0..n {
        let beta = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
        let s = precision(alpha, beta, source, sigma_dl)?;
        if s < best.0 {
            best = (s, beta);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn led() -> SourceParams {
        SourceParams::led808()
    }

    #[test]
    fn analytic_curve_passes_equal_angle_point() {
        let c = build_calibration(0.004, led(), (0.0, 0.013), 131, CurveMode::Analytic).unwrap();
        let node = c.points().find(|(a, _)| (a - 0.004).abs() < 1e-12).unwrap();
        assert_relative_eq!(node.1, 38.8 * 38.8 / 808.0, max_relative = 1e-12);
        assert_eq!(c.shift_range().0, 0.0);
    }

    #[test]
    fn analytic_curve_at_orthogonal_is_rejected() {
        let err = build_calibration(0.0, led(), (0.0, 0.013), 11, CurveMode::Analytic).unwrap_err();
        assert!(matches!(err, Error::NonInvertible(_)));
        assert!(err.to_string().contains("non-invertible"));
    }

    #[test]
    fn bad_ranges_are_rejected() {
        assert!(build_calibration(0.004, led(), (0.01, 0.001), 11, CurveMode::Analytic).is_err());
        assert!(build_calibration(0.004, led(), (-0.01, 0.01), 11, CurveMode::Analytic).is_err());
        assert!(build_calibration(0.004, led(), (0.0, 0.01), 2, CurveMode::Analytic).is_err());
    }

    #[test]
    fn non_monotone_points_name_the_interval() {
        let pts = [(0.0, 0.0), (0.001, 0.5), (0.002, 0.4), (0.003, 0.9)];
        match CalibrationCurve::from_points(0.004, led(), CurveMode::Analytic, &pts) {
            Err(Error::NonMonotone { lo, hi }) => {
                assert_eq!((lo, hi), (0.001, 0.002));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inversion_of_analytic_curve() {
        let c = build_calibration(0.004, led(), DEFAULT_ALPHA_RANGE, DEFAULT_NODES, CurveMode::Analytic).unwrap();
        let a = invert_shift(&c, 38.8 * 38.8 / 808.0).unwrap();
        assert!((a - 0.004).abs() < 1e-5, "{a}");
        assert_eq!(invert_shift(&c, 0.0).unwrap(), 0.0);
        let (_, max) = c.shift_range();
        match invert_shift(&c, max + 0.1) {
            Err(Error::OutOfRange { min, max: m, .. }) => assert_eq!((min, m), c.shift_range()),
            other => panic!("unexpected {other:?}"),
        }
        assert!(invert_shift(&c, -0.01).is_err());
    }

    #[test]
    fn precision_values() {
        let s = precision(0.004, 0.004, &led(), 0.1).unwrap();
        assert_relative_eq!(s, 808.0 * 0.004 * 0.1 / (38.8 * 38.8), max_relative = 1e-10);
        assert!((s - 2.15e-4).abs() < 0.01e-4);
        assert!((s / 0.004 - 0.054).abs() < 0.001);
        assert_eq!(precision(0.004, 0.004, &led(), 0.0).unwrap(), 0.0);
        assert_eq!(precision(0.0, 0.004, &led(), 0.1).unwrap(), f64::INFINITY);
        assert!(matches!(precision(0.004, 0.0, &led(), 0.1), Err(Error::ZeroSlope(_))));
    }

    #[test]
    fn optimal_beta_rule_and_scan() {
        assert_eq!(optimal_beta(0.004).unwrap(), 0.004);
        assert_eq!(optimal_beta(0.013).unwrap(), 0.013);
        assert!(optimal_beta(0.0).is_err());
        let b = scan_optimal_beta(0.004, &led(), 0.1, 4001).unwrap();
        assert!((0.0036..=0.0044).contains(&b), "{b}");
    }

    #[test]
    fn closed_form_estimate() {
        let d = wavelength_shift_analytic(0.006, 0.004, &led()).unwrap();
        let e = estimate_closed_form(0.004, &led(), d, 0.1).unwrap();
        assert_relative_eq!(e.alpha_hat, 0.006, max_relative = 1e-10);
        assert_eq!(e.method, EstimateMethod::ClosedForm);
        assert_relative_eq!(e.sigma_alpha, precision(0.006, 0.004, &led(), 0.1).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn curve_estimate_sigma_matches_analytic_precision() {
        let c = build_calibration(0.004, led(), DEFAULT_ALPHA_RANGE, DEFAULT_NODES, CurveMode::Analytic).unwrap();
        let d = wavelength_shift_analytic(0.006, 0.004, &led()).unwrap();
        let e = estimate(&c, d, 0.1).unwrap();
        assert_relative_eq!(e.sigma_alpha, precision(0.006, 0.004, &led(), 0.1).unwrap(), max_relative = 1e-3);
        // The curve is flat at the origin; the end-cubic slope there is small
        // and the resulting bound uninformative.
        let at_zero = estimate(&c, 0.0, 0.1).unwrap();
        assert_eq!(at_zero.alpha_hat, 0.0);
        assert!(at_zero.sigma_alpha > 100.0 * e.sigma_alpha);
        assert_eq!(estimate(&c, d, 0.0).unwrap().sigma_alpha, 0.0);
    }

    #[test]
    fn persistence_round_trip_is_bit_exact() {
        let c = build_calibration(0.004, led(), DEFAULT_ALPHA_RANGE, 41, CurveMode::Analytic).unwrap();
        let (mut csv, mut meta) = (Vec::new(), Vec::new());
        c.write(&mut csv, &mut meta).unwrap();
        let back = CalibrationCurve::read(csv.as_slice(), meta.as_slice()).unwrap();
        assert_eq!(back, c);
        for d in [0.1, 1.0, 1.863, 3.0] {
            assert_eq!(invert_shift(&back, d).unwrap().to_bits(), invert_shift(&c, d).unwrap().to_bits());
        }
        let mut tampered = csv.clone();
        let n = tampered.len();
        tampered[n - 2] = if tampered[n - 2] == b'9' { b'8' } else { b'9' };
        assert!(CalibrationCurve::read(tampered.as_slice(), meta.as_slice()).is_err());
    }
}

//! Sampled optical spectra.
//!
//! A [`Spectrum`] is a non-negative intensity density on a uniform
//! [`WavelengthGrid`]. All integrals use the trapezoidal rule on that grid so
//! that every statistic is bit-reproducible for a given input.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig9;

/// Spectrometer sampling period, nm.
pub const SPECTROMETER_STEP_NM: f64 = 0.02;
/// Lower edge of the spectrometer window, nm.
pub const SPECTROMETER_START_NM: f64 = 715.0;
/// Upper edge of the spectrometer window, nm.
pub const SPECTROMETER_END_NM: f64 = 915.0;

/// Uniform wavelength sampling `start + i * step` for `i in 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    start: f64,
    step: f64,
    count: usize,
}

impl WavelengthGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        if !start.is_finite() || !step.is_finite() {
            return Err(Error::InvalidConfig("grid start and step must be finite".into()));
        }
        if step <= 0.0 {
            return Err(Error::InvalidConfig(format!("grid step must be > 0, got {step}")));
        }
        if count < 2 {
            return Err(Error::InvalidConfig(format!("grid needs at least 2 points, got {count}")));
        }
        Ok(Self { start, step, count })
    }

    /// Grid from `lo` to (approximately) `hi` inclusive.
    pub fn spanning(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if hi <= lo {
            return Err(Error::InvalidConfig(format!("empty grid span [{lo}, {hi}]")));
        }
        let count = ((hi - lo) / step).round() as usize + 1;
        Self::new(lo, step, count)
    }

    /// The 715–915 nm window sampled every 0.02 nm.
    pub fn spectrometer() -> Self {
        Self::spanning(SPECTROMETER_START_NM, SPECTROMETER_END_NM, SPECTROMETER_STEP_NM)
            .expect("static spectrometer grid is valid")
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.point(self.count - 1)
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.point(i))
    }

    /// Trapezoidal integral of `values` sampled on this grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.count);
        let n = values.len();
        let interior = compensated_sum(&values[1..n - 1]);
        self.step * (interior + 0.5 * (values[0] + values[n - 1]))
    }

    /// Linear interpolation of samples on this grid at `lambda`; zero outside.
    pub fn interpolate(&self, values: &[f64], lambda: f64) -> f64 {
        let t = (lambda - self.start) / self.step;
        if !(t >= 0.0) || t > (self.count - 1) as f64 {
            return 0.0;
        }
        let i = t.floor() as usize;
        if i >= self.count - 1 {
            return values[self.count - 1];
        }
        let frac = t - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }
}

/// Neumaier summation.
fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0_f64, 0.0_f64);
    for &v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Central wavelength and RMS spectral width of a broadband source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub lambda0: f64,
    pub delta_lambda: f64,
}

impl SourceParams {
    pub fn new(lambda0: f64, delta_lambda: f64) -> Result<Self> {
        if !(lambda0 > 0.0) || !lambda0.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda0 must be > 0, got {lambda0}")));
        }
        if !(delta_lambda > 0.0 && delta_lambda < lambda0) {
            return Err(Error::InvalidConfig(format!(
                "delta_lambda must lie in (0, lambda0), got {delta_lambda}"
            )));
        }
        Ok(Self { lambda0, delta_lambda })
    }

    /// Bare LED: 808 nm, 38.8 nm RMS.
    pub fn led808() -> Self {
        Self { lambda0: 808.0, delta_lambda: 38.8 }
    }

    /// LED seen through the 1 mm ZnSe crystal: 805 nm, 41.6 nm.
    pub fn znse() -> Self {
        Self { lambda0: 805.0, delta_lambda: 41.6 }
    }

    /// LED filtered by the crystal: 795 nm, 18.9 nm.
    pub fn filtered() -> Self {
        Self { lambda0: 795.0, delta_lambda: 18.9 }
    }

    /// `lambda0 ± 5 delta_lambda` sampled at `step`.
    pub fn extended_grid(&self, step: f64) -> Result<WavelengthGrid> {
        let half = 5.0 * self.delta_lambda;
        WavelengthGrid::spanning(self.lambda0 - half, self.lambda0 + half, step)
    }

    /// `(P0, ΔP)` in rad/nm.
    pub fn momentum_stats(&self) -> (f64, f64) {
        momentum_from_wavelength(self.lambda0, self.delta_lambda)
    }
}

/// `P0 = 2π/λ0` and the first-order width `ΔP = 2πΔλ/λ0²`.
pub fn momentum_from_wavelength(lambda0: f64, delta_lambda: f64) -> (f64, f64) {
    (TAU / lambda0, TAU * delta_lambda / (lambda0 * lambda0))
}

/// Non-negative intensity density on a [`WavelengthGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: WavelengthGrid,
    density: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: WavelengthGrid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.count() {
            return Err(Error::InvalidConfig(format!(
                "density has {} samples, grid has {}",
                density.len(),
                grid.count()
            )));
        }
        if let Some(bad) = density.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::InvalidConfig(format!("density must be finite and >= 0, found {bad}")));
        }
        Ok(Self { grid, density })
    }

    /// Samples `f` at every grid point. Negative or non-finite values are rejected.
    pub fn from_fn(grid: WavelengthGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let density = grid.points().map(f).collect();
        Self::new(grid, density)
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.density)
    }

    pub fn normalized(&self) -> Result<Self> {
        let total = self.positive_integral()?;
        Ok(self.scaled(1.0 / total))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid, density: self.density.iter().map(|d| d * c).collect() }
    }

    /// Pointwise product with a non-negative weight evaluated on the grid.
    pub fn weighted(&self, weight: impl Fn(f64) -> f64) -> Result<Self> {
        let density = self.grid.points().zip(&self.density).map(|(l, d)| d * weight(l)).collect();
        Self::new(self.grid, density)
    }

    /// Intensity-weighted mean wavelength.
    pub fn centroid(&self) -> Result<f64> {
        let total = self.positive_integral()?;
        let first: Vec<f64> = self.grid.points().zip(&self.density).map(|(l, d)| l * d).collect();
        Ok(self.grid.integrate(&first) / total)
    }

    /// Square root of the intensity-weighted variance about the centroid.
    pub fn rms_width(&self) -> Result<f64> {
        let total = self.positive_integral()?;
        let mean = self.centroid()?;
        let second: Vec<f64> = self
            .grid
            .points()
            .zip(&self.density)
            .map(|(l, d)| (l - mean) * (l - mean) * d)
            .collect();
        Ok((self.grid.integrate(&second) / total).sqrt())
    }

    /// Shifts the spectrum by `d` nm (positive = redshift), resampling linearly.
    pub fn translated(&self, d: f64) -> Self {
        let density = self.grid.points().map(|l| self.grid.interpolate(&self.density, l - d)).collect();
        Self { grid: self.grid, density }
    }

    /// Linear resampling onto `grid`; zero outside the current support.
    pub fn resampled(&self, grid: WavelengthGrid) -> Self {
        let density = grid.points().map(|l| self.grid.interpolate(&self.density, l)).collect();
        Self { grid, density }
    }

    fn positive_integral(&self) -> Result<f64> {
        let total = self.integral();
        if total > 0.0 {
            Ok(total)
        } else {
            Err(Error::DegenerateSpectrum)
        }
    }

    /// Reads a two-column `wavelength_nm,intensity` CSV and resamples it onto `grid`.
    pub fn read_csv<R: Read>(reader: R, grid: WavelengthGrid) -> Result<Self> {
        let (wl, values) = read_two_column(reader, ["wavelength_nm", "intensity"])?;
        let density = grid.points().map(|l| interp_table(&wl, &values, l).unwrap_or(0.0)).collect();
        Self::new(grid, density)
    }

    /// Reads a spectrum file on its own sampling: the grid runs from the first
    /// to the last tabulated wavelength with the same number of points.
    pub fn read_csv_native<R: Read>(reader: R) -> Result<Self> {
        let (wl, values) = read_two_column(reader, ["wavelength_nm", "intensity"])?;
        let n = wl.len();
        let step = (wl[n - 1] - wl[0]) / (n - 1) as f64;
        let grid = WavelengthGrid::new(wl[0], step, n)?;
        let density = grid.points().map(|l| interp_table(&wl, &values, l).unwrap_or(0.0)).collect();
        Self::new(grid, density)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "wavelength_nm,intensity")?;
        for (l, d) in self.grid.points().zip(&self.density) {
            writeln!(out, "{},{}", sig9(l), sig9(*d))?;
        }
        Ok(())
    }
}

/// Normalized Gaussian of mean `lambda0` and standard deviation
/// `delta_lambda`, truncated to `grid`.
pub fn gaussian_spectrum(params: SourceParams, grid: WavelengthGrid) -> Result<Spectrum> {
    let SourceParams { lambda0, delta_lambda: sigma } = params;
    if grid.end() < lambda0 - 5.0 * sigma || grid.start() > lambda0 + 5.0 * sigma {
        return Err(Error::InvalidConfig(format!(
            "grid [{}, {}] nm lies entirely outside {lambda0} ± 5·{sigma} nm",
            grid.start(),
            grid.end()
        )));
    }
    if grid.start() > lambda0 - 2.5 * sigma || grid.end() < lambda0 + 2.5 * sigma {
        log::warn!(
            "grid [{}, {}] nm truncates the source inside ±2.5σ; width statistics will be biased",
            grid.start(),
            grid.end()
        );
    }
    Spectrum::from_fn(grid, |l| {
        let z = (l - lambda0) / sigma;
        (-0.5 * z * z).exp()
    })?
    .normalized()
}

/// Signed centroid shift `measured − reference`, nm. Positive is a redshift.
pub fn shift_between(reference: &Spectrum, measured: &Spectrum) -> Result<f64> {
    if reference.grid != measured.grid {
        return Err(Error::IncompatibleGrids(format!("{:?} vs {:?}", reference.grid, measured.grid)));
    }
    Ok(measured.centroid()? - reference.centroid()?)
}

pub(crate) fn read_two_column<R: Read>(reader: R, header: [&str; 2]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let found = rdr.headers()?.clone();
    if found.len() != 2 || found[0] != *header[0] || found[1] != *header[1] {
        return Err(Error::Parse(format!("expected header `{},{}`", header[0], header[1])));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("row {}: bad number in column {}", row + 1, header[i])))
        };
        let (x, y) = (parse(0)?, parse(1)?);
        if let Some(&prev) = xs.last() {
            if x <= prev {
                return Err(Error::Parse(format!("row {}: {} must be strictly increasing", row + 1, header[0])));
            }
        }
        xs.push(x);
        ys.push(y);
    }
    if xs.len() < 2 {
        return Err(Error::Parse("need at least two rows".into()));
    }
    Ok((xs, ys))
}

/// Piecewise-linear lookup in a strictly increasing table; `None` outside it.
pub(crate) fn interp_table(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let j = xs.partition_point(|&v| v <= x);
    if j == xs.len() {
        return Some(ys[ys.len() - 1]);
    }
    let i = j - 1;
    let t = (x - xs[i]) / (xs[j] - xs[i]);
    Some(ys[i] + t * (ys[j] - ys[i]))
}

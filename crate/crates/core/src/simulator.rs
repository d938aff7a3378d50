//! Wavelength-resolved propagation of the source spectrum through
//! pre-selection, the effective thin plate, an optional dispersive slab and
//! post-selection, followed by a spectrometer model.
//!
//! Nothing here uses the analytic shift formula: the transmitted spectrum is
//! `S(λ)·|⟨φ_post|U(λ)|ψ_pre⟩|²` evaluated with Jones matrices, and the shift
//! is a difference of centroids.

use std::io::Write;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::polarization::{
    alpha_from_tilt, post_state, pre_state, tilt_from_alpha, DispersiveSlab, JonesMatrix, JonesVector,
    OpticalElement, PlateParams, PolarizationState, PostSelectionParams, Retarder,
};
use crate::spectral::{gaussian_spectrum, SourceParams, Spectrum, WavelengthGrid, SPECTROMETER_STEP_NM};

/// Post-selected intensity below which a run is considered empty.
pub const MIN_TRANSMISSION: f64 = 1e-30;
/// Number of β′ nodes in the polarizer-spread quadrature.
pub const SPREAD_NODES: usize = 241;
/// Half-width of the β′ quadrature, in units of the spread Δ.
pub const SPREAD_HALF_WIDTH: f64 = 6.0;

/// How the polarizer-spread ensemble is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadWeighting {
    /// Gaussian prior on β′, each member weighted by its own post-selection
    /// probability.
    #[default]
    Exact,
    /// `β′²·exp(−(β−β′)²/2Δ²)`, with `β′²` standing in for the
    /// post-selection probability.
    Proxy,
}

/// Sampling used for the physics stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// `λ0 ± 5Δλ`; truncation only happens in [`apply_spectrometer`].
    #[default]
    Extended,
    /// Simulate directly on the spectrometer window.
    Spectrometer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrometerConfig {
    /// Detector sampling. `None` keeps the simulation grid.
    pub window: Option<WavelengthGrid>,
    /// Standard deviation of the additive centroid error, nm.
    pub centroid_noise_nm: f64,
    /// Relative standard deviation of independent per-bin gain noise.
    pub bin_noise_rel: f64,
}

impl SpectrometerConfig {
    /// Noise-free detection on the simulation grid.
    pub fn ideal() -> Self {
        Self { window: None, centroid_noise_nm: 0.0, bin_noise_rel: 0.0 }
    }

    /// The 715–915 nm, 0.02 nm instrument without noise.
    pub fn instrument() -> Self {
        Self { window: Some(WavelengthGrid::spectrometer()), ..Self::ideal() }
    }

    pub fn is_noisy(&self) -> bool {
        self.centroid_noise_nm > 0.0 || self.bin_noise_rel > 0.0
    }
}

impl Default for SpectrometerConfig {
    fn default() -> Self {
        Self::instrument()
    }
}

/// Full description of one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupConfig {
    pub source: SourceParams,
    /// Tabulated source spectrum replacing the Gaussian model.
    pub source_shape: Option<Spectrum>,
    pub plate: PlateParams,
    /// Plate phase used instead of the tilt geometry.
    pub alpha_override: Option<f64>,
    pub postsel: PostSelectionParams,
    pub weighting: SpreadWeighting,
    pub dispersion: Option<DispersiveSlab>,
    pub spectrometer: SpectrometerConfig,
    pub grid_mode: GridMode,
    pub grid_step: f64,
    pub seed: u64,
}

impl SetupConfig {
    /// Gaussian source, direct plate phase, ideal polarizers and detector.
    pub fn ideal(source: SourceParams, alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self {
            source,
            source_shape: None,
            plate: PlateParams::new(0.0, 1.54, source.lambda0)?,
            alpha_override: Some(alpha),
            postsel: PostSelectionParams::ideal(beta)?,
            weighting: SpreadWeighting::Exact,
            dispersion: None,
            spectrometer: SpectrometerConfig::ideal(),
            grid_mode: GridMode::Extended,
            grid_step: SPECTROMETER_STEP_NM,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        SourceParams::new(self.source.lambda0, self.source.delta_lambda)?;
        PlateParams::new(self.plate.theta, self.plate.n0, self.plate.lambda0_design)?;
        PostSelectionParams::new(self.postsel.beta, self.postsel.spread)?;
        if let Some(a) = self.alpha_override {
            if !a.is_finite() {
                return Err(Error::InvalidConfig(format!("alpha must be finite, got {a}")));
            }
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::InvalidConfig(format!("grid step must be > 0, got {}", self.grid_step)));
        }
        let s = &self.spectrometer;
        if !(s.centroid_noise_nm >= 0.0) || !(s.bin_noise_rel >= 0.0) {
            return Err(Error::InvalidConfig("spectrometer noise levels must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Plate phase at the design wavelength.
    pub fn alpha(&self) -> Result<f64> {
        match self.alpha_override {
            Some(a) => Ok(a),
            None => alpha_from_tilt(&self.plate),
        }
    }

    /// Tilt that produces [`Self::alpha`], reported for sweeps driven by α.
    pub fn theta(&self) -> Result<f64> {
        match self.alpha_override {
            Some(a) => tilt_from_alpha(a.abs(), self.plate.n0),
            None => Ok(self.plate.theta),
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha_override: Some(alpha), ..self.clone() }
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        let mut cfg = self.clone();
        cfg.alpha_override = None;
        cfg.plate.theta = theta;
        cfg
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        let mut cfg = self.clone();
        cfg.postsel.beta = beta;
        cfg
    }

    pub fn simulation_grid(&self) -> Result<WavelengthGrid> {
        if let Some(shape) = &self.source_shape {
            return Ok(*shape.grid());
        }
        match self.grid_mode {
            GridMode::Extended => self.source.extended_grid(self.grid_step),
            GridMode::Spectrometer => Ok(self.spectrometer.window.unwrap_or_else(WavelengthGrid::spectrometer)),
        }
    }

    /// Unit-area source density on the simulation grid.
    pub fn source_spectrum(&self) -> Result<Spectrum> {
        match &self.source_shape {
            Some(shape) => shape.normalized(),
            None => gaussian_spectrum(self.source, self.simulation_grid()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Post-selected intensity; integrates to the post-selection probability.
    pub output_spectrum: Spectrum,
    /// The α = 0 output at the same post-selection, used as the zero of δλ.
    pub reference_spectrum: Spectrum,
    pub postselection_probability: f64,
    /// Signed centroid shift, nm. Negative is a blueshift.
    pub delta_lambda: f64,
    pub reference_centroid: f64,
}

/// `|⟨φ_post(β)| U(λ) |ψ_pre⟩|²` for a thin plate of phase `alpha` at design
/// wavelength `lambda0`.
pub fn postselection_probability_at(lambda: f64, alpha: f64, beta: f64, lambda0: f64) -> Result<f64> {
    let psi = Retarder::new(alpha, lambda0)?.jones(lambda)?.apply(&pre_state().amplitudes());
    Ok(post_state(beta).overlap(&psi).norm_sqr())
}

/// `U(λ)|ψ_pre⟩` at every grid point.
fn propagate(config: &SetupConfig, plate: &Retarder, grid: &WavelengthGrid) -> Result<Vec<JonesVector>> {
    let pre = pre_state().amplitudes();
    grid.points()
        .map(|l| {
            let mut u = plate.jones(l)?;
            if let Some(slab) = &config.dispersion {
                u = slab.jones(l)? * u;
            }
            Ok(u.apply(&pre))
        })
        .collect()
}

/// Post-selection effect `Σ wₖ |eₖ⟩⟨eₖ|` kept in its eigenbasis, so that
/// `⟨ψ|M|ψ⟩` is a sum of non-negative terms and free of cancellation.
struct Effect {
    terms: Vec<(f64, PolarizationState)>,
}

impl Effect {
    fn ideal(beta: f64) -> Self {
        Self { terms: vec![(1.0, post_state(beta))] }
    }

    /// Spectral decomposition of a Hermitian 2×2 matrix.
    fn from_hermitian(m: &JonesMatrix) -> Result<Self> {
        let (a, d, b) = (m.0[0][0].re, m.0[1][1].re, m.0[0][1]);
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        let top = mean + radius;
        if radius == 0.0 {
            return Ok(Self { terms: vec![(top, PolarizationState::H), (top, PolarizationState::V)] });
        }
        let bottom = (a * d - b.norm_sqr()) / top;
        // Eigenvector of `top`, from whichever row is better conditioned.
        let e1 = if a >= d {
            PolarizationState::new(Complex64::new(top - d, 0.0), b.conj())?
        } else {
            PolarizationState::new(b, Complex64::new(top - a, 0.0))?
        };
        let e2 = PolarizationState::new(-e1.v().conj(), e1.h().conj())?;
        Ok(Self { terms: vec![(top, e1), (bottom.max(0.0), e2)] })
    }

    fn expectation(&self, psi: &JonesVector) -> f64 {
        self.terms.iter().map(|(w, e)| w * e.overlap(psi).norm_sqr()).sum()
    }
}

fn transmitted(source: &Spectrum, states: &[JonesVector], effect: &Effect) -> Result<Spectrum> {
    let density = source.density().iter().zip(states).map(|(s, psi)| s * effect.expectation(psi)).collect();
    Spectrum::new(*source.grid(), density)
}

/// Effect operator for an ideal post-selection at `beta`.
fn ideal_effect(beta: f64) -> JonesMatrix {
    JonesMatrix::projector(&post_state(beta))
}

/// Post-selected spectrum for plate phase `alpha`.
type OutputFn<'a> = dyn Fn(f64) -> Result<Spectrum> + 'a;

fn assemble(config: &SetupConfig, output_at: &OutputFn) -> Result<SimulationResult> {
    let alpha = config.alpha()?;
    let output = output_at(alpha)?;
    let total = output.integral();
    if !(total >= MIN_TRANSMISSION) {
        return Err(Error::NoPhotons { total });
    }
    let reference = if alpha == 0.0 { output.clone() } else { output_at(0.0)? };
    // With nothing transmitted at α = 0 the reference shape is the source's.
    let reference = if reference.integral() >= MIN_TRANSMISSION { reference } else { config.source_spectrum()? };
    let reference_centroid = reference.centroid()?;
    Ok(SimulationResult {
        delta_lambda: output.centroid()? - reference_centroid,
        postselection_probability: total.min(1.0),
        output_spectrum: output,
        reference_spectrum: reference,
        reference_centroid,
    })
}

/// Ideal-polarizer run at `config.postsel.beta`; the spread is ignored.
pub fn run(config: &SetupConfig) -> Result<SimulationResult> {
    config.validate()?;
    let source = config.source_spectrum()?;
    let effect = Effect::ideal(config.postsel.beta);
    let output_at = |alpha: f64| -> Result<Spectrum> {
        let plate = Retarder::new(alpha, config.plate.lambda0_design)?;
        let states = propagate(config, &plate, source.grid())?;
        transmitted(&source, &states, &effect)
    };
    assemble(config, &output_at)
}

/// Nodes `β′` and Gaussian prior weights `exp(−(β−β′)²/2Δ²)`.
pub fn spread_nodes(beta: f64, spread: f64) -> Vec<(f64, f64)> {
    let lo = beta - SPREAD_HALF_WIDTH * spread;
    let h = 2.0 * SPREAD_HALF_WIDTH * spread / (SPREAD_NODES - 1) as f64;
    (0..SPREAD_NODES)
        .map(|i| {
            let b = lo + i as f64 * h;
            let z = (b - beta) / spread;
            (b, (-0.5 * z * z).exp())
        })
        .collect()
}

/// Source-weighted polarization density matrix `∫ S(λ) |ψ(λ)⟩⟨ψ(λ)| dλ`.
fn source_density_matrix(source: &Spectrum, states: &[JonesVector]) -> JonesMatrix {
    let grid = source.grid();
    let mut elems: [[Vec<Complex64>; 2]; 2] = Default::default();
    for (s, psi) in source.density().iter().zip(states) {
        for i in 0..2 {
            for j in 0..2 {
                elems[i][j].push(psi[i] * psi[j].conj() * *s);
            }
        }
    }
    let integrate = |v: &Vec<Complex64>| {
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        let im: Vec<f64> = v.iter().map(|z| z.im).collect();
        Complex64::new(grid.integrate(&re), grid.integrate(&im))
    };
    JonesMatrix([[integrate(&elems[0][0]), integrate(&elems[0][1])], [integrate(&elems[1][0]), integrate(&elems[1][1])]])
}

/// Ensemble-averaged post-selection over the polarizer spread.
///
/// The conditional centroid is `Σ wᵢ Pᵢ cᵢ / Σ wᵢ Pᵢ` (exact weighting) or
/// `Σ wᵢ cᵢ / Σ wᵢ` with `wᵢ = β′ᵢ² gᵢ` (proxy weighting). Both are centroids
/// of a mixed effect operator `M = Σ μᵢ |φᵢ⟩⟨φᵢ|`, so the transmitted
/// spectrum is `S(λ)⟨ψ(λ)|M|ψ(λ)⟩` and per-member probabilities are
/// `Pᵢ = ⟨φᵢ|ρ_S|φᵢ⟩` with `ρ_S` the source-weighted density matrix.
///
/// A zero spread is an ideal run.
pub fn run_with_polarizer_spread(config: &SetupConfig) -> Result<SimulationResult> {
    config.validate()?;
    let spread = config.postsel.spread;
    if spread == 0.0 {
        return run(config);
    }
    let source = config.source_spectrum()?;
    let nodes = spread_nodes(config.postsel.beta, spread);
    let prior_total: f64 = nodes.iter().map(|(_, g)| g).sum();

    let output_at = |alpha: f64| -> Result<Spectrum> {
        let plate = Retarder::new(alpha, config.plate.lambda0_design)?;
        let states = propagate(config, &plate, source.grid())?;
        let rho = source_density_matrix(&source, &states);
        let mut mean_prob = 0.0;
        let mut exact = JonesMatrix::scalar(Complex64::new(0.0, 0.0));
        let mut proxy = JonesMatrix::scalar(Complex64::new(0.0, 0.0));
        let mut proxy_total = 0.0;
        for &(b, g) in &nodes {
            let e = ideal_effect(b);
            let p = (e * rho).trace().re.max(0.0);
            mean_prob += g * p;
            exact = exact.add(&e.scale(g));
            let w = b * b * g;
            if w > 0.0 && p > 0.0 {
                proxy = proxy.add(&e.scale(w / p));
                proxy_total += w;
            }
        }
        mean_prob /= prior_total;
        let effect = match config.weighting {
            SpreadWeighting::Exact => exact.scale(1.0 / prior_total),
            SpreadWeighting::Proxy if proxy_total > 0.0 => proxy.scale(mean_prob / proxy_total),
            SpreadWeighting::Proxy => return Err(Error::NoPhotons { total: 0.0 }),
        };
        transmitted(&source, &states, &Effect::from_hermitian(&effect)?)
    };
    assemble(config, &output_at)
}

/// Resamples onto the detector window and adds the configured noise.
///
/// All randomness comes from `config.seed`.
pub fn apply_spectrometer(result: &SimulationResult, config: &SetupConfig) -> Result<SimulationResult> {
    let spec = &config.spectrometer;
    let (mut output, reference) = match spec.window {
        Some(window) => (result.output_spectrum.resampled(window), result.reference_spectrum.resampled(window)),
        None => (result.output_spectrum.clone(), result.reference_spectrum.clone()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    if spec.bin_noise_rel > 0.0 {
        let density = output
            .density()
            .iter()
            .map(|d| {
                let z: f64 = StandardNormal.sample(&mut rng);
                d * (1.0 + spec.bin_noise_rel * z).max(0.0)
            })
            .collect();
        output = Spectrum::new(*output.grid(), density)?;
    }
    let reference_centroid = reference.centroid()?;
    let mut delta_lambda = output.centroid()? - reference_centroid;
    if spec.centroid_noise_nm > 0.0 {
        let z: f64 = StandardNormal.sample(&mut rng);
        delta_lambda += spec.centroid_noise_nm * z;
    }
    Ok(SimulationResult {
        output_spectrum: output,
        reference_spectrum: reference,
        postselection_probability: result.postselection_probability,
        delta_lambda,
        reference_centroid,
    })
}

/// Physics stage (ideal or spread-averaged) followed by the spectrometer.
pub fn simulate(config: &SetupConfig) -> Result<SimulationResult> {
    let physics = run_with_polarizer_spread(config)?;
    apply_spectrometer(&physics, config)
}

/// Independent seed for sweep row `index`.
pub fn row_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Which plate parameter a sweep steps through.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    Alpha(Vec<f64>),
    Theta(Vec<f64>),
}

impl SweepAxis {
    fn len(&self) -> usize {
        match self {
            SweepAxis::Alpha(v) | SweepAxis::Theta(v) => v.len(),
        }
    }
}

/// Configurations for every `(β, α|θ)` pair, β-major, each with its own
/// derived seed.
pub fn sweep_configs(base: &SetupConfig, betas: &[f64], axis: &SweepAxis) -> Vec<SetupConfig> {
    let mut out = Vec::with_capacity(betas.len() * axis.len());
    for &beta in betas {
        let with_beta = base.with_beta(beta);
        match axis {
            SweepAxis::Alpha(alphas) => out.extend(alphas.iter().map(|&a| with_beta.with_alpha(a))),
            SweepAxis::Theta(thetas) => out.extend(thetas.iter().map(|&t| with_beta.with_theta(t))),
        }
    }
    for (i, cfg) in out.iter_mut().enumerate() {
        cfg.seed = row_seed(base.seed, i as u64);
    }
    out
}

#[derive(Debug)]
pub struct SweepRow {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub outcome: Result<SweepValues>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepValues {
    /// Signed shift, nm.
    pub delta_lambda: f64,
    pub postselect_prob: f64,
}

/// Runs [`simulate`] for every configuration. Rows are independent and
/// returned in input order; a failing row carries its error.
pub fn sweep(configs: &[SetupConfig]) -> Vec<SweepRow> {
    configs
        .par_iter()
        .map(|cfg| {
            let alpha = cfg.alpha().unwrap_or(f64::NAN);
            let theta = cfg.theta().unwrap_or(f64::NAN);
            let outcome = simulate(cfg)
                .map(|r| SweepValues { delta_lambda: r.delta_lambda, postselect_prob: r.postselection_probability });
            SweepRow { theta, alpha, beta: cfg.postsel.beta, outcome }
        })
        .collect()
}

/// Header of every sweep table.
pub const SWEEP_HEADER: &str = "theta_rad,alpha_rad,beta_rad,delta_lambda_nm,postselect_prob";

/// Writes rows as CSV. Shifts are magnitudes unless `signed`; failed rows
/// carry `NaN` in the value columns.
pub fn write_sweep_csv<'a, W: Write>(rows: impl IntoIterator<Item = &'a SweepRow>, signed: bool, mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for row in rows {
        let (dl, p) = match &row.outcome {
            Ok(v) => (if signed { v.delta_lambda } else { v.delta_lambda.abs() }, v.postselect_prob),
            Err(_) => (f64::NAN, f64::NAN),
        };
        writeln!(out, "{},{},{},{},{}", sig9(row.theta), sig9(row.alpha), sig9(row.beta), sig9(dl), sig9(p))?;
    }
    Ok(())
}

//! TOML run configuration.
//!
//! Precedence, lowest first: built-in defaults, source preset, config file,
//! command-line flags. The fully resolved form is written back into every
//! manifest and can be fed to `--config` again.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use weakphase::polarization::{DispersiveSlab, IndexModel, PlateParams, PostSelectionParams};
use weakphase::simulator::{GridMode, SetupConfig, SpectrometerConfig, SpreadWeighting};
use weakphase::spectral::{SourceParams, Spectrum, WavelengthGrid};

use crate::failure::Failure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Bare LED, 808 nm / 38.8 nm.
    Led808,
    /// LED through the ZnSe crystal, 805 nm / 41.6 nm, slab in the beam.
    Znse,
    /// Crystal-filtered LED, 795 nm / 18.9 nm.
    Filtered,
}

impl Preset {
    fn source(self) -> SourceParams {
        match self {
            Preset::Led808 => SourceParams::led808(),
            Preset::Znse => SourceParams::znse(),
            Preset::Filtered => SourceParams::filtered(),
        }
    }

    fn dispersion(self) -> Dispersion {
        match self {
            Preset::Znse => Dispersion::Znse1mm,
            Preset::Led808 | Preset::Filtered => Dispersion::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "slab", deny_unknown_fields)]
pub enum Dispersion {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "znse_1mm")]
    Znse1mm,
    #[serde(rename = "custom")]
    Custom { thickness_mm: f64, index: IndexModel },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowFlag {
    /// 715–915 nm sampled every 0.02 nm.
    Instrument,
    /// Detector sees the whole simulation grid.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DispersionFlag {
    None,
    #[value(name = "znse_1mm")]
    Znse1mm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_lambda_nm: Option<f64>,
    /// Tabulated `wavelength_nm,intensity` file replacing the Gaussian shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateSection {
    #[serde(default)]
    pub theta_rad: f64,
    /// Plate phase at the design wavelength; takes precedence over the tilt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_rad: Option<f64>,
    #[serde(default = "default_n0")]
    pub n0: f64,
    /// Defaults to the source central wavelength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_wavelength_nm: Option<f64>,
}

fn default_n0() -> f64 {
    1.54
}

impl Default for PlateSection {
    fn default() -> Self {
        Self { theta_rad: 0.0, alpha_rad: None, n0: default_n0(), design_wavelength_nm: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostselectionSection {
    #[serde(default)]
    pub beta_rad: f64,
    #[serde(default)]
    pub spread_rad: f64,
    #[serde(default)]
    pub weighting: SpreadWeighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub start_nm: f64,
    pub end_nm: f64,
    pub step_nm: f64,
}

impl Window {
    pub fn instrument() -> Self {
        Self { start_nm: 715.0, end_nm: 915.0, step_nm: 0.02 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrometerSection {
    /// Detector range; absent means the detector sees the whole simulation grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(default)]
    pub centroid_noise_nm: f64,
    #[serde(default)]
    pub bin_noise_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default)]
    pub grid: GridMode,
    #[serde(default = "default_step")]
    pub step_nm: f64,
}

fn default_step() -> f64 {
    0.02
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { grid: GridMode::Extended, step_nm: default_step() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub plate: PlateSection,
    #[serde(default)]
    pub postselection: PostselectionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<Dispersion>,
    #[serde(default)]
    pub spectrometer: SpectrometerSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            source: SourceSection::default(),
            plate: PlateSection::default(),
            postselection: PostselectionSection::default(),
            dispersion: None,
            spectrometer: SpectrometerSection::default(),
            simulation: SimulationSection::default(),
        }
    }
}

/// Flags shared by the simulation commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub source: Option<Preset>,
    pub seed: Option<u64>,
    pub dispersion: Option<DispersionFlag>,
    pub window: Option<WindowFlag>,
    pub spread: Option<f64>,
    pub weighting: Option<SpreadWeighting>,
    pub alpha: Option<f64>,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let located = |e: &dyn std::fmt::Display| Failure::config(format!("{}: {e}", path.display()));
        let cfg: ConfigFile = if path.extension().is_some_and(|e| e == "json") {
            // A manifest carries its resolved configuration under this key.
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| located(&e))?;
            let value = match value.get("resolved_config") {
                Some(inner) => inner.clone(),
                None => value,
            };
            serde_path_to_error::deserialize(value).map_err(|e| located(&e))?
        } else {
            let mut cfg: ConfigFile =
                serde_path_to_error::deserialize(toml::Deserializer::new(&text)).map_err(|e| located(&e))?;
            // Data files named in a config are relative to that config.
            if let (Some(file), Some(dir)) = (&cfg.source.spectrum_file, path.parent()) {
                if file.is_relative() {
                    cfg.source.spectrum_file = Some(dir.join(file));
                }
            }
            cfg
        };
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Failure::config(format!(
                "schema_version: unsupported version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = o.source {
            self.source = SourceSection { preset: Some(p), spectrum_file: self.source.spectrum_file.clone(), ..Default::default() };
            self.dispersion = None;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        match o.dispersion {
            Some(DispersionFlag::None) => self.dispersion = Some(Dispersion::None),
            Some(DispersionFlag::Znse1mm) => self.dispersion = Some(Dispersion::Znse1mm),
            None => {}
        }
        match o.window {
            Some(WindowFlag::Instrument) => self.spectrometer.window = Some(Window::instrument()),
            Some(WindowFlag::None) => self.spectrometer.window = None,
            None => {}
        }
        if let Some(s) = o.spread {
            self.postselection.spread_rad = s;
        }
        if let Some(w) = o.weighting {
            self.postselection.weighting = w;
        }
        if let Some(t) = o.theta {
            self.plate.theta_rad = t;
            self.plate.alpha_rad = None;
        }
        if let Some(a) = o.alpha {
            self.plate.alpha_rad = Some(a);
        }
        if let Some(b) = o.beta {
            self.postselection.beta_rad = b;
        }
    }

    /// Fills every implicit field and builds the simulator configuration.
    pub fn resolve(&self) -> Result<(ConfigFile, SetupConfig), Failure> {
        let preset = self.source.preset.unwrap_or(Preset::Led808);
        let base = preset.source();
        let lambda0 = self.source.lambda0_nm.unwrap_or(base.lambda0);
        let delta = self.source.delta_lambda_nm.unwrap_or(base.delta_lambda);
        let source = SourceParams::new(lambda0, delta).map_err(|e| Failure::field("source", e))?;
        let dispersion = self.dispersion.clone().unwrap_or_else(|| preset.dispersion());
        let design = self.plate.design_wavelength_nm.unwrap_or(lambda0);

        let explicit = ConfigFile {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            source: SourceSection {
                preset: None,
                lambda0_nm: Some(lambda0),
                delta_lambda_nm: Some(delta),
                spectrum_file: self.source.spectrum_file.clone(),
            },
            plate: PlateSection { design_wavelength_nm: Some(design), ..self.plate.clone() },
            postselection: self.postselection.clone(),
            dispersion: Some(dispersion.clone()),
            spectrometer: self.spectrometer.clone(),
            simulation: self.simulation.clone(),
        };

        let plate = PlateParams::new(self.plate.theta_rad, self.plate.n0, design).map_err(|e| Failure::field("plate", e))?;
        let postsel = PostSelectionParams::new(self.postselection.beta_rad, self.postselection.spread_rad)
            .map_err(|e| Failure::field("postselection", e))?;
        let dispersion = match dispersion {
            Dispersion::None => None,
            Dispersion::Znse1mm => Some(DispersiveSlab::znse_1mm()),
            Dispersion::Custom { thickness_mm, index } => {
                Some(DispersiveSlab::new(thickness_mm, index).map_err(|e| Failure::field("dispersion", e))?)
            }
        };
        let window = match self.spectrometer.window {
            Some(w) => Some(WavelengthGrid::spanning(w.start_nm, w.end_nm, w.step_nm).map_err(|e| Failure::field("spectrometer.window", e))?),
            None => None,
        };
        let source_shape = match &self.source.spectrum_file {
            Some(path) => {
                let file = fs::File::open(path)
                    .map_err(|e| Failure::config(format!("source.spectrum_file: cannot open {}: {e}", path.display())))?;
                Some(Spectrum::read_csv_native(file).map_err(|e| Failure::field("source.spectrum_file", e))?)
            }
            None => None,
        };
        let setup = SetupConfig {
            source,
            source_shape,
            plate,
            alpha_override: self.plate.alpha_rad,
            postsel,
            weighting: self.postselection.weighting,
            dispersion,
            spectrometer: SpectrometerConfig {
                window,
                centroid_noise_nm: self.spectrometer.centroid_noise_nm,
                bin_noise_rel: self.spectrometer.bin_noise_rel,
            },
            grid_mode: self.simulation.grid,
            grid_step: self.simulation.step_nm,
            seed: self.seed,
        };
        setup.validate().map_err(Failure::from)?;
        Ok((explicit, setup))
    }
}

use std::fs::File;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use weakphase::estimator::{build_calibration_from, estimate as estimate_curve, shift_from_spectra, CalibrationCurve, CurveMode};
use weakphase::simulator::{simulate as simulate_setup, sweep as run_sweep, sweep_configs, write_sweep_csv, SweepAxis};
use weakphase::polarization::PostSelectionParams;
use weakphase::spectral::Spectrum;

use crate::config::{ConfigFile, Overrides};
use crate::failure::Failure;
use crate::manifest::{record_input, to_json, Manifest, OutputDir};
use crate::{Common, EstimateArgs, Mode, Range};

/// Spread assumed by `--mode spread` when the config leaves it at zero.
const DEFAULT_SPREAD: f64 = 0.0027;

pub enum Axis {
    Alpha(Range),
    Theta(Range),
}

fn load(common: &Common, overrides: &Overrides) -> Result<(ConfigFile, weakphase::simulator::SetupConfig), Failure> {
    let mut cfg = match &common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    cfg.apply(overrides);
    cfg.resolve()
}

fn manifest(command: &str, argv: &[String], common: Option<&Common>, resolved: Option<ConfigFile>, parameters: serde_json::Value) -> Manifest {
    Manifest {
        tool: "weakphase".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        args: argv.to_vec(),
        config_path: common.and_then(|c| c.config.as_ref()).map(|p| p.display().to_string()),
        seed: resolved.as_ref().map(|c| c.seed),
        resolved_config: resolved,
        parameters,
        inputs: Vec::new(),
        outputs: Vec::new(),
    }
}

fn config_inputs(cfg: &ConfigFile) -> Result<Vec<crate::manifest::FileRecord>, Failure> {
    cfg.source.spectrum_file.iter().map(|p| record_input(p)).collect()
}

fn spectrum_csv(s: &Spectrum) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct SimulationRecord {
    delta_lambda_nm: f64,
    postselect_prob: f64,
    reference_centroid_nm: f64,
}

pub fn simulate(common: &Common, overrides: Overrides, signed: bool, argv: &[String]) -> Result<(), Failure> {
    let (resolved, setup) = load(common, &overrides)?;
    let result = simulate_setup(&setup)?;
    let record = SimulationRecord {
        delta_lambda_nm: if signed { result.delta_lambda } else { result.delta_lambda.abs() },
        postselect_prob: result.postselection_probability,
        reference_centroid_nm: result.reference_centroid,
    };

    let mut out = OutputDir::create(&common.out_dir)?;
    out.write("spectrum.csv", &spectrum_csv(&result.output_spectrum)?)?;
    out.write("reference.csv", &spectrum_csv(&result.reference_spectrum)?)?;
    let json = to_json(&record);
    out.write("result.json", &json)?;

    let parameters = json!({ "alpha_rad": setup.alpha()?, "theta_rad": setup.theta()?, "signed": signed });
    let mut m = manifest("simulate", argv, Some(common), Some(resolved.clone()), parameters);
    m.inputs = config_inputs(&resolved)?;
    out.finish(m)?;
    print!("{}", String::from_utf8_lossy(&json));
    Ok(())
}

/// File name for the sweep table at `beta`.
fn sweep_file(beta: f64) -> String {
    format!("sweep_beta_{beta}.csv")
}

pub fn sweep(common: &Common, betas: &[f64], axis: Axis, signed: bool, argv: &[String]) -> Result<(), Failure> {
    for &beta in betas {
        PostSelectionParams::new(beta, 0.0).map_err(|e| Failure::field("--beta", e))?;
    }
    let (resolved, setup) = load(common, &common.overrides())?;
    let (axis, axis_name, range) = match axis {
        Axis::Alpha(r) => (SweepAxis::Alpha(r.values()), "alpha_rad", r),
        Axis::Theta(r) => (SweepAxis::Theta(r.values()), "theta_rad", r),
    };
    let configs = sweep_configs(&setup, betas, &axis);
    let rows = run_sweep(&configs);

    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    if let Some(err) = rows.iter().find_map(|r| r.outcome.as_ref().err()) {
        log::warn!("{failed} of {} rows failed and are written as NaN; first error: {err}", rows.len());
    }

    let mut out = OutputDir::create(&common.out_dir)?;
    let mut files = Vec::new();
    for (beta, chunk) in betas.iter().zip(rows.chunks(range.n)) {
        let mut buf = Vec::new();
        write_sweep_csv(chunk, signed, &mut buf)?;
        let name = sweep_file(*beta);
        out.write(&name, &buf)?;
        files.push(name);
    }

    let parameters = json!({
        "betas_rad": betas,
        "axis": axis_name,
        "range": { "lo": range.lo, "hi": range.hi, "n": range.n },
        "signed": signed,
        "failed_rows": failed,
    });
    let mut m = manifest("sweep", argv, Some(common), Some(resolved.clone()), parameters);
    m.inputs = config_inputs(&resolved)?;
    out.finish(m)?;
    for f in files {
        println!("{}", out_path(common, &f));
    }
    Ok(())
}

fn out_path(common: &Common, name: &str) -> String {
    common.out_dir.join(name).display().to_string()
}

pub fn calibrate(
    common: &Common,
    overrides: Overrides,
    mode: Mode,
    alpha: Range,
    out: Option<&Path>,
    argv: &[String],
) -> Result<(), Failure> {
    let (resolved, setup) = load(common, &overrides)?;
    let curve_mode = match mode {
        Mode::Analytic => CurveMode::Analytic,
        Mode::Simulated => CurveMode::Simulated,
        Mode::Spread => CurveMode::SimulatedWithSpread {
            spread: if setup.postsel.spread > 0.0 { setup.postsel.spread } else { DEFAULT_SPREAD },
            weighting: setup.weighting,
        },
    };
    let curve = build_calibration_from(&setup, (alpha.lo, alpha.hi), alpha.n, curve_mode)?;

    let csv_path = out.map(Path::to_path_buf).unwrap_or_else(|| common.out_dir.join("calibration.csv"));
    let dir = csv_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let csv_name = file_name(&csv_path)?;
    let sidecar_name = file_name(&csv_path.with_extension("json"))?;
    let (mut csv, mut sidecar) = (Vec::new(), Vec::new());
    curve.write(&mut csv, &mut sidecar)?;
    sidecar.push(b'\n');

    let mut outputs = OutputDir::create(dir)?;
    outputs.write(&csv_name, &csv)?;
    outputs.write(&sidecar_name, &sidecar)?;
    let parameters = json!({
        "beta_rad": curve.beta(),
        "mode": curve_mode,
        "alpha_range": { "lo": alpha.lo, "hi": alpha.hi, "n": alpha.n },
    });
    let mut m = manifest("calibrate", argv, Some(common), Some(resolved.clone()), parameters);
    m.inputs = config_inputs(&resolved)?;
    outputs.finish(m)?;
    println!("{}", csv_path.display());
    Ok(())
}

fn file_name(path: &Path) -> Result<String, Failure> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Failure::config(format!("--out: `{}` is not a file path", path.display())))
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::config(format!("cannot open {}: {e}", path.display())))
}

pub fn estimate(a: &EstimateArgs, argv: &[String]) -> Result<(), Failure> {
    let sidecar = a.calibration.with_extension("json");
    let curve = CalibrationCurve::read(open(&a.calibration)?, open(&sidecar)?)
        .map_err(|e| Failure::field(&a.calibration.display().to_string(), e))?;
    if !(a.sigma_dl >= 0.0) {
        return Err(Failure::config(format!("--sigma-dl must be ≥ 0, got {}", a.sigma_dl)));
    }
    let mut inputs = vec![record_input(&a.calibration)?, record_input(&sidecar)?];

    let measured = match (a.delta_lambda, &a.spectrum, &a.reference) {
        (Some(dl), _, _) => dl.abs(),
        (None, Some(spectrum), Some(reference)) => {
            let measured = Spectrum::read_csv_native(open(spectrum)?)?;
            let zero = Spectrum::read_csv_native(open(reference)?)?;
            inputs.push(record_input(spectrum)?);
            inputs.push(record_input(reference)?);
            shift_from_spectra(&zero, &measured)?
        }
        _ => unreachable!("clap enforces one input form"),
    };
    let est = estimate_curve(&curve, measured, a.sigma_dl)?;

    let json = to_json(&est);
    let mut out = OutputDir::create(&a.out_dir)?;
    out.write("estimate.json", &json)?;
    let parameters = json!({ "measured_delta_lambda_nm": measured, "sigma_dl_nm": a.sigma_dl });
    let mut m = manifest("estimate", argv, None, None, parameters);
    m.inputs = inputs;
    out.finish(m)?;
    print!("{}", String::from_utf8_lossy(&json));
    Ok(())
}

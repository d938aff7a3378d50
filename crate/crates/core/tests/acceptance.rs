//! Acceptance suite. Every criterion runs inside one test so that the report
//! comes out in order; run with `--nocapture` to see it on success.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weakphase::estimator::{build_calibration, build_calibration_from, invert_shift, CurveMode, DEFAULT_NODES};
use weakphase::polarization::{
    alpha_from_tilt, alpha_from_tilt_approx, hwp_pair, retarder, DispersiveSlab, OpticalElement, PlateParams,
};
use weakphase::simulator::{
    apply_spectrometer, run, run_with_polarizer_spread, simulate, sweep, sweep_configs, write_sweep_csv,
    SetupConfig, SpectrometerConfig, SpreadWeighting, SweepAxis,
};
use weakphase::spectral::SourceParams;
use weakphase::weakvalue::{saturated_shift, wavelength_shift_analytic, weak_value_at_position};

const SPREAD: f64 = 0.0027;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn led(alpha: f64, beta: f64) -> SetupConfig {
    SetupConfig::ideal(SourceParams::led808(), alpha, beta).unwrap()
}

fn with_spread(mut cfg: SetupConfig) -> SetupConfig {
    cfg.postsel.spread = SPREAD;
    cfg.weighting = SpreadWeighting::Exact;
    cfg
}

fn shifts(configs: &[SetupConfig]) -> Vec<f64> {
    sweep(configs).into_iter().map(|r| r.outcome.unwrap().delta_lambda.abs()).collect()
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let grid: Vec<f64> = (1..=10).map(|i| 0.0013 * i as f64).collect();
    let configs = sweep_configs(&led(0.0, 0.0), &grid, &SweepAxis::Alpha(grid.clone()));
    let sims = shifts(&configs);
    let worst = configs
        .iter()
        .zip(&sims)
        .map(|(c, s)| rel(*s, wavelength_shift_analytic(c.alpha().unwrap(), c.postsel.beta, &c.source).unwrap()))
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    check(
        worst < 0.05 && elapsed < Duration::from_secs(10),
        format!("worst relative error {:.3}% over 100 points in {:.2?} (limits 5%, 10 s)", 100.0 * worst, elapsed),
    )
}

fn fixed_points() -> Outcome {
    let src = SourceParams::led808();
    let analytic = wavelength_shift_analytic(0.004, 0.004, &src).unwrap();
    let simulated = run(&led(0.004, 0.004)).unwrap().delta_lambda.abs();
    let cap = 2.0 * src.delta_lambda.powi(2) / src.lambda0;
    let crossed = shifts(&[0.001, 0.005, 0.009, 0.013].map(|a| led(a, 0.0)));
    let crossed_worst = crossed.iter().map(|s| rel(*s, 3.726)).fold(0.0, f64::max);
    check(
        rel(analytic, 1.863) < 0.005
            && rel(simulated, 1.863) < 0.05
            && crossed_worst < 0.05
            && rel(saturated_shift(&src), cap) < 1e-12,
        format!(
            "analytic {analytic:.4} nm, simulated {simulated:.4} nm (target 1.863); β=0 worst deviation from 3.726 nm {:.2}%",
            100.0 * crossed_worst
        ),
    )
}

fn spread_sweep_shape() -> Outcome {
    let start = Instant::now();
    let alphas: Vec<f64> = (0..=26).map(|i| 0.0005 * i as f64).collect();
    let betas = [0.0, 0.004, 0.014];
    let sims = shifts(&sweep_configs(&with_spread(led(0.0, 0.0)), &betas, &SweepAxis::Alpha(alphas.clone())));
    let curves: Vec<&[f64]> = sims.chunks(alphas.len()).collect();
    let monotone = curves.iter().all(|c| c.windows(2).all(|w| w[1] > w[0]));

    // Best-matching ideal-polarizer curve for the β = 0 ensemble.
    let candidates: Vec<f64> = (5..=50).map(|i| 1e-4 * i as f64).collect();
    let ideal = shifts(&sweep_configs(&led(0.0, 0.0), &candidates, &SweepAxis::Alpha(alphas[1..].to_vec())));
    let (beta_eff, _) = candidates
        .iter()
        .zip(ideal.chunks(alphas.len() - 1))
        .map(|(b, c)| (*b, c.iter().zip(&curves[0][1..]).map(|(x, y)| (x - y).powi(2)).sum::<f64>()))
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let elapsed = start.elapsed();
    check(
        monotone && (0.001..=0.003).contains(&beta_eff) && elapsed < Duration::from_secs(60),
        format!("three curves monotone: {monotone}; β_eff = {beta_eff:.4} (bracket [0.001, 0.003]); {elapsed:.2?} (limit 60 s)"),
    )
}

fn dispersion_robustness() -> Outcome {
    let alphas: Vec<f64> = (0..=13).map(|i| 0.001 * i as f64).collect();
    let betas = [0.0, 0.004, 0.014];
    let base = with_spread(SetupConfig::ideal(SourceParams::znse(), 0.0, 0.0).unwrap());
    let slab = SetupConfig { dispersion: Some(DispersiveSlab::znse_1mm()), ..base.clone() };
    let axis = SweepAxis::Alpha(alphas);
    let plain = sweep(&sweep_configs(&base, &betas, &axis));
    let crystal = sweep(&sweep_configs(&slab, &betas, &axis));
    let mut worst: f64 = 0.0;
    let mut both_ok = true;
    for (a, b) in plain.iter().zip(&crystal) {
        match (&a.outcome, &b.outcome) {
            (Ok(x), Ok(y)) => worst = worst.max((x.delta_lambda - y.delta_lambda).abs()),
            (Err(_), Err(_)) => {}
            _ => both_ok = false,
        }
    }
    check(both_ok && worst < 1e-9, format!("largest change over {} rows: {worst:.2e} nm (limit 1e-9)", plain.len()))
}

fn spectral_width_scaling() -> Outcome {
    let (f, z) = (SourceParams::filtered(), SourceParams::znse());
    let target = (f.delta_lambda.powi(2) / f.lambda0) / (z.delta_lambda.powi(2) / z.lambda0);
    let mut ratios = Vec::new();
    for alpha in [0.002, 0.004, 0.008, 0.013] {
        let filtered = run(&SetupConfig::ideal(f, alpha, 0.004).unwrap()).unwrap().delta_lambda;
        let znse = run(&SetupConfig::ideal(z, alpha, 0.004).unwrap()).unwrap().delta_lambda;
        ratios.push(filtered / znse);
    }
    let worst = ratios.iter().map(|r| rel(*r, target)).fold(0.0, f64::max);
    check(
        worst < 0.10,
        format!(
            "ratios [{}] vs {target:.4}; worst deviation {:.2}% (limit 10%)",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(", "),
            100.0 * worst
        ),
    )
}

fn tilt_geometry() -> Outcome {
    let at = alpha_from_tilt(&PlateParams::new(0.14, 1.54, 808.0).unwrap()).unwrap();
    let worst = (1..=400)
        .map(|i| {
            let p = PlateParams::new(-0.2 + 0.4 * i as f64 / 401.0, 1.54, 808.0).unwrap();
            let exact = alpha_from_tilt(&p).unwrap();
            if exact == 0.0 {
                0.0
            } else {
                rel(alpha_from_tilt_approx(&p), exact)
            }
        })
        .fold(0.0, f64::max);
    check(
        (at - 0.012978).abs() <= 1e-6 && worst < 0.01,
        format!("α(0.14 rad) = {at:.7} (target 0.012978 ± 1e-6); worst approx error {:.3}% for |θ| ≤ 0.2", 100.0 * worst),
    )
}

fn estimator_round_trip() -> Outcome {
    let src = SourceParams::led808();
    let range = (0.0, 0.013);
    let spread_mode = CurveMode::SimulatedWithSpread { spread: SPREAD, weighting: SpreadWeighting::Exact };
    let modes = [(CurveMode::Analytic, 0.004), (CurveMode::Simulated, 0.004), (spread_mode, 0.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_ratio: f64 = 0.0;
    for (mode, beta) in modes {
        let curve = build_calibration(beta, src, range, DEFAULT_NODES, mode).unwrap();
        for _ in 0..20 {
            let alpha: f64 = rng.gen_range(5e-4..0.013);
            let dl = match mode {
                CurveMode::Analytic => wavelength_shift_analytic(alpha, beta, &src).unwrap(),
                CurveMode::Simulated => simulate(&led(alpha, beta)).unwrap().delta_lambda.abs(),
                CurveMode::SimulatedWithSpread { .. } => simulate(&with_spread(led(alpha, beta))).unwrap().delta_lambda.abs(),
            };
            let hat = invert_shift(&curve, dl).unwrap();
            worst_ratio = worst_ratio.max((hat - alpha).abs() / (0.01 * alpha).max(1e-5));
        }
    }

    // Noisy centroids at α* = β = 0.004, inverted on the matching curve.
    let noisy = SetupConfig {
        spectrometer: SpectrometerConfig { centroid_noise_nm: 0.1, ..SpectrometerConfig::ideal() },
        ..led(0.004, 0.004)
    };
    let curve = build_calibration_from(&noisy, range, DEFAULT_NODES, CurveMode::Simulated).unwrap();
    let physics = run(&noisy).unwrap();
    let estimates: Vec<f64> = (0..500)
        .map(|seed| {
            let dl = apply_spectrometer(&physics, &SetupConfig { seed, ..noisy.clone() }).unwrap().delta_lambda.abs();
            invert_shift(&curve, dl).unwrap()
        })
        .collect();
    let spread = std_dev(&estimates);
    let expected = src.lambda0 * 0.004 * 0.1 / src.delta_lambda.powi(2);
    check(
        worst_ratio <= 1.0 && rel(spread, expected) < 0.20,
        format!(
            "60 noiseless inversions use {:.1}% of the error budget; noisy std(α̂) = {spread:.4e} vs {expected:.4e} ({:+.1}%, limit 20%)",
            100.0 * worst_ratio,
            100.0 * (spread / expected - 1.0)
        ),
    )
}

fn small_phase_precision() -> Outcome {
    let base = SetupConfig {
        spectrometer: SpectrometerConfig { centroid_noise_nm: 0.1, ..SpectrometerConfig::ideal() },
        ..with_spread(led(0.001, 0.0))
    };
    let mode = CurveMode::SimulatedWithSpread { spread: SPREAD, weighting: SpreadWeighting::Exact };
    let curve = build_calibration_from(&base, (0.0, 0.013), DEFAULT_NODES, mode).unwrap();
    let physics = run_with_polarizer_spread(&base).unwrap();
    let mut refused = 0;
    let estimates: Vec<f64> = (0..500)
        .filter_map(|seed| {
            let dl = apply_spectrometer(&physics, &SetupConfig { seed, ..base.clone() }).unwrap().delta_lambda.abs();
            let hat = invert_shift(&curve, dl);
            if hat.is_err() {
                refused += 1;
            }
            hat.ok()
        })
        .collect();
    let spread = std_dev(&estimates);
    check(
        refused == 0 && (1e-4 / 3.0..=3e-4).contains(&spread),
        format!("std(α̂) = {spread:.3e} at α* = 1e-3 (order 1e-4 within ×3); {refused} of 500 outside the curve"),
    )
}

fn property_suites() -> Outcome {
    let mut unitarity: f64 = 0.0;
    for l in [715.0, 808.0, 915.0] {
        for a in [-0.5, 0.004, 0.013, 1.0] {
            unitarity = unitarity.max(retarder(a, 808.0).unwrap().jones(l).unwrap().unitarity_defect());
        }
        for t in [0.0, 0.07, 0.14, 0.2] {
            let pair = hwp_pair(PlateParams::new(t, 1.54, 808.0).unwrap()).unwrap();
            unitarity = unitarity.max(pair.jones_explicit(l).unwrap().unitarity_defect());
        }
        unitarity = unitarity.max(DispersiveSlab::znse_1mm().jones(l).unwrap().unitarity_defect());
    }

    let mut x_spread: f64 = 0.0;
    for (a, b) in [(0.004, 0.004), (0.013, 0.001), (0.001, 0.014), (-0.01, 0.3)] {
        let w0 = weak_value_at_position(a, b, 0.0).unwrap().as_complex();
        for x in [1.0 / 3.0, 1.0] {
            let w = weak_value_at_position(a, b, x).unwrap().as_complex();
            x_spread = x_spread.max((w - w0).norm() / w0.norm().max(1.0));
        }
    }

    let src = SourceParams::led808();
    let f = |a: f64, b: f64| wavelength_shift_analytic(a, b, &src).unwrap();
    let cap = saturated_shift(&src);
    let mut shape = true;
    for i in 1..40 {
        let a = 0.0005 * i as f64;
        for j in 1..40 {
            let b = 0.0005 * j as f64;
            shape &= f(a, b) == f(-a, b) && f(a, b) == f(a, -b);
            shape &= f(a, b + 1e-4) < f(a, b) && f(a + 1e-4, b) > f(a, b);
            shape &= f(a, b) < cap;
        }
        shape &= f(a, 0.0) == cap;
    }

    let csv_with_threads = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut base = with_spread(led(0.0, 0.0));
            base.spectrometer = SpectrometerConfig { centroid_noise_nm: 0.1, bin_noise_rel: 0.01, ..SpectrometerConfig::instrument() };
            base.seed = 99;
            let axis = SweepAxis::Alpha((0..=13).map(|i| 0.001 * i as f64).collect());
            let rows = sweep(&sweep_configs(&base, &[0.0, 0.004], &axis));
            let mut out = Vec::new();
            write_sweep_csv(&rows, true, &mut out).unwrap();
            out
        })
    };
    let single = csv_with_threads(1);
    let deterministic = single == csv_with_threads(4) && single == csv_with_threads(4);

    check(
        unitarity < 1e-12 && x_spread < 1e-12 && shape && deterministic,
        format!(
            "unitarity defect {unitarity:.1e}; weak-value relative position spread {x_spread:.1e}; shift symmetry/monotonicity/bound {}; sweep CSV identical across 1 and 4 threads {}",
            if shape { "hold" } else { "VIOLATED" },
            deterministic
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("fixed-point shifts", fixed_points),
        ("spread sweep shape", spread_sweep_shape),
        ("dispersion robustness", dispersion_robustness),
        ("spectral-width scaling", spectral_width_scaling),
        ("tilt geometry", tilt_geometry),
        ("estimator round trip", estimator_round_trip),
        ("small-phase precision", small_phase_precision),
        ("property suites", property_suites),
    ];
    let mut failed = Vec::new();
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let outcome = criterion();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {}. {name}: {}", i + 1, outcome.detail);
        if !outcome.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

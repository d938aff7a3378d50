use proptest::prelude::*;
use weakphase::simulator::{run, simulate, sweep, sweep_configs, SetupConfig, SweepAxis};
use weakphase::spectral::SourceParams;
use weakphase::weakvalue::wavelength_shift_analytic;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_shift_tracks_closed_form(alpha in 1e-4..0.02f64, beta in 1e-4..0.02f64) {
        let src = SourceParams::led808();
        let sim = run(&SetupConfig::ideal(src, alpha, beta).unwrap()).unwrap().delta_lambda.abs();
        let analytic = wavelength_shift_analytic(alpha, beta, &src).unwrap();
        prop_assert!((sim - analytic).abs() / analytic < 0.05, "{sim} vs {analytic}");
    }

    #[test]
    fn output_never_exceeds_source(alpha in -1.0..1.0f64, beta in -1.5..1.5f64) {
        prop_assume!(alpha.abs() + beta.abs() > 1e-3);
        let cfg = SetupConfig::ideal(SourceParams::znse(), alpha, beta).unwrap();
        let r = run(&cfg).unwrap();
        prop_assert!(r.output_spectrum.integral() <= cfg.source_spectrum().unwrap().integral());
        prop_assert!(r.output_spectrum.density().iter().all(|d| *d >= 0.0));
        prop_assert!((0.0..=1.0).contains(&r.postselection_probability));
    }
}

#[test]
fn spread_sweep_ordering_at_small_phase() {
    let mut base = SetupConfig::ideal(SourceParams::led808(), 0.0, 0.0).unwrap();
    base.postsel.spread = 0.0027;
    let betas = [0.0, 0.004, 0.014];
    let rows = sweep(&sweep_configs(&base, &betas, &SweepAxis::Alpha(vec![0.002, 0.004])));
    let shift = |i: usize| rows[i].outcome.as_ref().unwrap().delta_lambda.abs();
    for a in 0..2 {
        assert!(shift(a) >= shift(2 + a) && shift(2 + a) >= shift(4 + a));
    }
}

#[test]
fn noisy_runs_differ_across_seeds_only() {
    let mut cfg = SetupConfig::ideal(SourceParams::led808(), 0.004, 0.004).unwrap();
    cfg.spectrometer.centroid_noise_nm = 0.1;
    cfg.spectrometer.bin_noise_rel = 0.02;
    let a = simulate(&cfg).unwrap();
    assert_eq!(a, simulate(&cfg).unwrap());
    cfg.seed += 1;
    assert_ne!(a.delta_lambda, simulate(&cfg).unwrap().delta_lambda);
}

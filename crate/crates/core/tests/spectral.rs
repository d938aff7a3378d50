use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use weakphase::spectral::{gaussian_spectrum, shift_between, SourceParams, Spectrum, WavelengthGrid};

/// Mean and standard deviation of a normal truncated to `[lo, hi]`.
fn truncated_normal(mu: f64, sigma: f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = Normal::new(0.0, 1.0).unwrap();
    let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
    let z = n.cdf(b) - n.cdf(a);
    let (pa, pb) = (n.pdf(a), n.pdf(b));
    let mean = mu + sigma * (pa - pb) / z;
    let var = sigma * sigma * (1.0 + (a * pa - b * pb) / z - ((pa - pb) / z).powi(2));
    (mean, var.sqrt())
}

#[test]
fn led_in_spectrometer_window_matches_truncated_normal() {
    let s = gaussian_spectrum(SourceParams::led808(), WavelengthGrid::spectrometer()).unwrap();
    let (mean, sd) = truncated_normal(808.0, 38.8, 715.0, 915.0);
    assert!((s.centroid().unwrap() - mean).abs() < 1e-4, "{} vs {mean}", s.centroid().unwrap());
    assert!((s.rms_width().unwrap() - sd).abs() < 1e-4);
    assert!((mean - 808.536).abs() < 1e-3);
    assert!((sd - 37.2216).abs() < 1e-3);
}

#[test]
fn extended_grid_recovers_source_parameters() {
    for src in [SourceParams::led808(), SourceParams::znse(), SourceParams::filtered()] {
        let s = gaussian_spectrum(src, src.extended_grid(0.02).unwrap()).unwrap();
        let (_, sd) = truncated_normal(src.lambda0, src.delta_lambda, src.lambda0 - 5.0 * src.delta_lambda, src.lambda0 + 5.0 * src.delta_lambda);
        assert!((s.centroid().unwrap() - src.lambda0).abs() < 1e-9);
        assert!((s.rms_width().unwrap() - sd).abs() < 1e-6);
        assert!((s.integral() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn csv_round_trip_preserves_statistics() {
    let s = gaussian_spectrum(SourceParams::filtered(), WavelengthGrid::spectrometer()).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let back = Spectrum::read_csv_native(buf.as_slice()).unwrap();
    assert!((back.centroid().unwrap() - s.centroid().unwrap()).abs() < 1e-6);
    assert!((back.rms_width().unwrap() - s.rms_width().unwrap()).abs() < 1e-6);
}

fn lumpy(grid: WavelengthGrid, centre: f64, width: f64, bump: f64) -> Spectrum {
    Spectrum::from_fn(grid, |l| {
        let z = (l - centre) / width;
        (-0.5 * z * z).exp() * (1.0 + bump * (l / 7.0).sin().powi(2))
    })
    .unwrap()
}

fn grid() -> WavelengthGrid {
    WavelengthGrid::spanning(600.0, 1000.0, 0.05).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_is_idempotent(centre in 700.0..900.0, width in 5.0..40.0, bump in 0.0..1.0, c in 1e-6..1e6) {
        let once = lumpy(grid(), centre, width, bump).scaled(c).normalized().unwrap();
        let twice = once.normalized().unwrap();
        for (a, b) in once.density().iter().zip(twice.density()) {
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(f64::MIN_POSITIVE) * 4.0);
        }
    }

    #[test]
    fn centroid_follows_translation(centre in 750.0..850.0, width in 5.0..30.0, bump in 0.0..1.0, d in -10.0..10.0) {
        let s = lumpy(grid(), centre, width, bump);
        let moved = s.translated(d);
        let expected = s.centroid().unwrap() + d;
        prop_assert!((moved.centroid().unwrap() - expected).abs() <= grid().step());
    }

    #[test]
    fn statistics_are_scale_invariant(centre in 700.0..900.0, width in 5.0..40.0, bump in 0.0..1.0, c in 1e-8..1e8) {
        let s = lumpy(grid(), centre, width, bump);
        let t = s.scaled(c);
        let (c0, c1) = (s.centroid().unwrap(), t.centroid().unwrap());
        let (w0, w1) = (s.rms_width().unwrap(), t.rms_width().unwrap());
        prop_assert!((c0 - c1).abs() <= 1e-12 * c0);
        prop_assert!((w0 - w1).abs() <= 1e-12 * w0);
    }

    #[test]
    fn shift_is_antisymmetric(c0 in 750.0..850.0, c1 in 750.0..850.0, w in 5.0..30.0, bump in 0.0..1.0) {
        let a = lumpy(grid(), c0, w, bump);
        let b = lumpy(grid(), c1, w * 1.3, bump);
        prop_assert_eq!(shift_between(&a, &b).unwrap(), -shift_between(&b, &a).unwrap());
    }
}

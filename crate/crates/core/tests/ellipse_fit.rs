mod common;

use common::*;
use rydsq::ellipse::*;
use rydsq::record::MeasurementRecord;
use rydsq::sampler::{sample_css, LaserPhaseMode, NoiseSpec};
use rydsq::Exec;

fn css_record(phi: f64, shots: usize, seed: u64) -> MeasurementRecord {
    let noise = NoiseSpec::new(LaserPhaseMode::RandomUniform, phi, 0.95);
    sample_css(70, &noise, shots, seed, Exec::Parallel).unwrap()
}

#[test]
fn binomial_likelihood_matches_plain_oracle() {
    let r = css_record(0.7, 300, 1);
    let h = CellHistogram::from_record(&r).unwrap();
    let shots: Vec<(u32, u32)> = r.shots.iter().map(|s| (s.k_a(), s.k_b())).collect();
    for (phi, c, y0) in [(0.7, 0.95, 0.5), (0.2, 0.8, 0.45), (2.5, 0.9, 0.52)] {
        let m = EllipseModel::css(70, phi, c, y0);
        let lib = log_likelihood(&m, &h, 720);
        let oracle = binomial_log_likelihood(&shots, 70, phi, c, y0, 720);
        assert!((lib - oracle).abs() < 1e-10 * oracle.abs(), "{lib} vs {oracle}");
    }
}

#[test]
fn mle_recovers_phase_within_bootstrap_spread() {
    let phi = 30f64.to_radians();
    let r = css_record(phi, 1000, 2);
    let h = CellHistogram::from_record(&r).unwrap();
    let init = EllipseModel::css(70, 0.6, 0.9, 0.5);
    let fit = fit_mle(&h, &init, FreeMask::css(), FitOptions::default()).unwrap();
    assert!(!fit.degenerate && fit.boundary.is_empty());
    let boot: Vec<f64> = bootstrap_indices(h.n_shots(), 20, 3)
        .iter()
        .map(|idx| fit_phi(&fit.model, &h.resample(idx), 360).unwrap().phi)
        .collect();
    let sd = variance(&boot).sqrt();
    assert!((fit.phi_hat - phi).abs() < 3.0 * sd, "{} ± {sd}", fit.phi_hat.to_degrees());
    assert!((fit.model.contrast - 0.95).abs() < 0.05);
}

#[test]
fn estimates_shrink_with_more_shots() {
    let m = EllipseModel::css(70, 0.8, 0.95, 0.5);
    let rmse = |shots: usize| {
        let e: Vec<f64> = (0..30)
            .map(|s| {
                let h = CellHistogram::from_record(&css_record(0.8, shots, 500 + s)).unwrap();
                fit_phi(&m, &h, 360).unwrap().phi - 0.8
            })
            .collect();
        (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt()
    };
    let (a, b) = (rmse(100), rmse(1600));
    // four times fewer errors for sixteen times more shots, loosely
    assert!(a / b > 2.5 && a / b < 6.0, "{a} {b}");
}

#[test]
fn fisher_information_is_mirror_symmetric() {
    let m = EllipseModel::css(30, 0.0, 0.95, 0.5);
    for deg in [5.0f64, 30.0, 75.0, 150.0] {
        let a = fisher_information_css(&m, deg.to_radians(), 720).unwrap().information;
        let b = fisher_information_css(&m, std::f64::consts::TAU - deg.to_radians(), 720).unwrap().information;
        assert!(a >= 0.0 && (a - b).abs() < 1e-6 * a);
    }
}

use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use super::*;
use crate::sampler::{sample_css, LaserPhaseMode, NoiseSpec};
use crate::Exec;

fn binom_pmf(n: u32, p: f64, k: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

fn css_record(phi: f64, shots: usize, seed: u64) -> crate::record::MeasurementRecord {
    let noise = NoiseSpec::new(LaserPhaseMode::RandomUniform, phi, 0.95);
    sample_css(70, &noise, shots, seed, Exec::Parallel).unwrap()
}

#[test]
fn binomial_reduction_is_exact() {
    let m = EllipseModel::css(12, 0.4, 0.8, 0.45);
    for th in [0.0, 0.3, 2.0, 4.5] {
        let f = pmf_theta(&m, th).unwrap();
        let (pa, pb) = m.probabilities(th);
        for ka in 0..=12 {
            for kb in 0..=12 {
                let r = binom_pmf(12, pa, ka) * binom_pmf(12, pb, kb);
                assert!((f.at(ka as usize, kb as usize) - r).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn tempered_variance_by_exhaustive_sum() {
    let m = EllipseModel { zeta0: 0.5, ..EllipseModel::css(4, 0.0, 0.9, 0.5) };
    let f = pmf_theta(&m, FRAC_PI_2).unwrap();
    // at θ = π/2: P = 1/2 and ζ² = ζ₀², so the exponent is 4
    let w: Vec<f64> = (0..=4).map(|k| binom_pmf(4, 0.5, k).powi(4)).collect();
    let z: f64 = w.iter().sum();
    let marg = f.marginal_a();
    for k in 0..=4 {
        assert!((marg[k] - w[k] / z).abs() < 1e-14);
    }
    let mean: f64 = (0..=4).map(|k| k as f64 * marg[k]).sum();
    let var: f64 = (0..=4).map(|k| (k as f64 - mean).powi(2) * marg[k]).sum();
    assert!(var < 1.0, "{var}");
}

#[test]
fn boundary_probabilities_are_point_masses() {
    let t = tempered_binomial(5, 0.0, 3.7);
    assert_eq!(t, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let m = EllipseModel { zeta0: 0.3, ..EllipseModel::css(5, 0.0, 1.0, 0.5) };
    let f = pmf_theta(&m, 0.0).unwrap();
    assert_eq!(f.at(5, 5), 1.0);
}

#[test]
fn marginal_converges_and_zero_contrast_ignores_phase() {
    let m = EllipseModel { zeta0: 0.7, ..EllipseModel::css(70, 30f64.to_radians(), 0.95, 0.5) };
    let f = pmf_marginal(&m, DEFAULT_THETA_NODES).unwrap();
    assert!((f.total() - 1.0).abs() < 1e-12);
    let a = pmf_marginal(&EllipseModel::css(20, 0.2, 0.0, 0.4), 64).unwrap();
    let b = pmf_marginal(&EllipseModel::css(20, 1.9, 0.0, 0.4), 64).unwrap();
    for (x, y) in a.mass.iter().zip(&b.mass) {
        assert!((x - y).abs() < 1e-15);
    }
    assert!(pmf_marginal(&m, 8).is_err());
}

#[test]
fn invalid_models_rejected() {
    assert!(EllipseModel::css(10, 0.0, 0.9, 0.01).validate().is_err());
    assert!(EllipseModel::css(10, 0.0, 1.1, 0.5).validate().is_err());
    assert!(EllipseModel { zeta1: 0.0, ..EllipseModel::css(10, 0.0, 0.9, 0.5) }.validate().is_err());
    assert!(EllipseModel::css(0, 0.0, 0.9, 0.5).validate().is_err());
}

#[test]
fn likelihood_matches_plain_binomial_oracle() {
    let r = css_record(0.5, 300, 1);
    let h = CellHistogram::from_record(&r).unwrap();
    let m = EllipseModel::css(70, 0.5, 0.95, 0.5);
    let nodes = 720;
    let oracle: f64 = r
        .shots
        .iter()
        .map(|s| {
            let f: f64 = (0..nodes)
                .map(|j| {
                    let th = 2.0 * PI * j as f64 / nodes as f64;
                    let (pa, pb) = (0.475 * th.cos() + 0.5, 0.475 * (th + 0.5).cos() + 0.5);
                    binom_pmf(70, pa, s.k_a()) * binom_pmf(70, pb, s.k_b())
                })
                .sum::<f64>()
                / nodes as f64;
            f.ln()
        })
        .sum();
    let ll = log_likelihood(&m, &h, nodes);
    assert!((ll - oracle).abs() < 1e-10 * oracle.abs(), "{ll} vs {oracle}");
}

#[test]
fn likelihood_exchange_symmetry() {
    let r = css_record(0.7, 200, 2);
    let h = CellHistogram::from_record(&r).unwrap();
    let hs = CellHistogram::from_record(&r.swapped()).unwrap();
    for m in [EllipseModel::css(70, 0.7, 0.95, 0.5), EllipseModel { zeta0: 0.6, zeta1: 1.3, ..EllipseModel::css(70, 0.7, 0.9, 0.52) }] {
        let a = log_likelihood(&m, &h, 720);
        let b = log_likelihood(&EllipseModel { phi: 2.0 * PI - m.phi, ..m }, &hs, 720);
        assert!((a - b).abs() < 1e-9 * a.abs(), "{a} vs {b}");
    }
}

#[test]
fn single_shot_fit_is_degenerate() {
    let r = css_record(0.5, 1, 3);
    let h = CellHistogram::from_record(&r).unwrap();
    let fit = fit_mle(&h, &EllipseModel::css(70, 0.5, 0.95, 0.5), FreeMask::css(), FitOptions { starts: 1, ..Default::default() }).unwrap();
    assert!(fit.degenerate);
}

#[test]
fn jackknife_identity_and_exact_variant() {
    let r = css_record(30f64.to_radians(), 400, 4);
    let h = CellHistogram::from_record(&r).unwrap();
    let m = EllipseModel::css(70, 0.0, 0.95, 0.5);
    let jk = jackknife(&m, &h, 360, LooMethod::OneStep).unwrap();
    assert!((jk.mean() - jk.phi_full).abs() < 1e-9, "{}", jk.mean() - jk.phi_full);
    let ex = jackknife(&m, &h, 360, LooMethod::Exact).unwrap();
    assert_eq!(ex.phi_full, jk.phi_full);
    // both LOO estimates agree to second order in 1/n
    let worst = ex.phi_loo.iter().zip(&jk.phi_loo).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
    assert!((ex.std_error() / jk.std_error() - 1.0).abs() < 0.05);
}

#[test]
fn phi_near_zero_is_biased_upwards() {
    let m = EllipseModel::css(70, 0.0, 0.95, 0.5);
    let est: Vec<f64> = (0..100)
        .map(|s| {
            let h = CellHistogram::from_record(&css_record(0.0, 200, 1000 + s)).unwrap();
            fit_phi(&m, &h, 360).unwrap().phi
        })
        .collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let sd = (est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
    assert!(mean > 3.0 * sd / 10.0, "mean {mean} sd {sd}");
    assert!(est.iter().all(|&p| p >= 0.0));
}

#[test]
fn pipeline_is_deterministic() {
    let r = css_record(0.5, 400, 5);
    let (ci, mi) = split_indices(r.len(), 77);
    let (cal, meas) = (r.select(&ci), r.select(&mi));
    let opts = PipelineOptions { n_bootstrap: 3, free: FreeMask::css(), ..Default::default() };
    let init = EllipseModel::css(70, 0.4, 0.9, 0.5);
    let a = calibrated_pipeline(&cal, &meas, &init, 9, opts).unwrap();
    let b = calibrated_pipeline(&cal, &meas, &init, 9, PipelineOptions { exec: Exec::Sequential, ..opts }).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!((a.jackknife.mean() - a.phi_hat).abs() < 1e-9);
    assert_eq!(a.bootstrap_phi.len(), 3);
    assert!(a.total_err >= a.stat_err);
}

#[test]
fn split_and_bootstrap_indices_depend_only_on_size_and_seed() {
    let (a, b) = split_indices(11, 3);
    assert_eq!(a.len(), 5);
    assert_eq!(b.len(), 6);
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort();
    assert_eq!(all, (0..11).collect::<Vec<_>>());
    assert_eq!(split_indices(11, 3), (a, b));
    let bi = bootstrap_indices(10, 4, 1);
    assert_eq!(bi, bootstrap_indices(10, 4, 1));
    assert!(bi.iter().all(|v| v.len() == 10 && v.iter().all(|&i| i < 10)));
    assert_ne!(bi[0], bi[1]);
}

#[test]
fn fisher_information_shape() {
    let m = EllipseModel::css(70, 0.0, 0.95, 0.5);
    let i0 = fisher_information_css(&m, 0.0, 360).unwrap();
    let i30 = fisher_information_css(&m, 30f64.to_radians(), 360).unwrap();
    assert!(i0.information >= 0.0 && i0.information < i30.information, "{i0:?} {i30:?}");
    assert!(i30.richardson_rel_change < 1e-4);
    for deg in [10.0f64, 45.0, 100.0] {
        let a = fisher_information_css(&m, deg.to_radians(), 360).unwrap().information;
        let b = fisher_information_css(&m, 2.0 * PI - deg.to_radians(), 360).unwrap().information;
        assert!((a - b).abs() < 1e-6 * a, "{deg}: {a} {b}");
    }
    assert!(fisher_information_css(&EllipseModel { zeta0: 0.5, ..m }, 0.1, 360).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn mass_functions_normalized(n in 1u32..25, c in 0.0f64..1.0, u in 0.0f64..1.0, z0 in 0.3f64..3.0, z1 in 0.3f64..3.0, phi in 0.0f64..6.3, th in 0.0f64..6.3) {
        let y0 = 0.5 * c + u * (1.0 - c);
        let m = EllipseModel { phi, contrast: c, y0, zeta0: z0, zeta1: z1, n_atoms: n };
        let f = pmf_theta(&m, th).unwrap();
        prop_assert!(f.mass.iter().all(|&x| x >= 0.0));
        prop_assert!((f.total() - 1.0).abs() < 1e-12);
        let g = pmf_marginal(&m, 720).unwrap();
        prop_assert!(g.mass.iter().all(|&x| x >= 0.0));
        prop_assert!((g.total() - 1.0).abs() < 1e-12);
    }
}

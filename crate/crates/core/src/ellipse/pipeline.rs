use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::likelihood::{
    cell_log_pmf_stencil, fit_mle, fit_phi, CellHistogram, FitOptions, FreeMask, LikelihoodResult, PHI_STEP,
};
use super::model::EllipseModel;
use crate::record::MeasurementRecord;
use crate::stability::{overlapping_adev, AllanAxis, AllanCurve, AveragingFactors};
use crate::{Error, Exec, Result};

/// How leave-one-out estimates `φ′_{≠i}` are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooMethod {
    /// One Newton step from the full-sample optimum using the full-sample
    /// curvature. The pseudo-values then average to `φ′` exactly.
    #[default]
    OneStep,
    /// Refit φ with each shot removed (one fit per distinct outcome cell).
    Exact,
}

/// Single-shot pseudo-values `φ^JK_i = n φ′ − (n − 1) φ′_{≠i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JackknifeSeries {
    pub phi_full: f64,
    pub phi_loo: Vec<f64>,
    pub phi_jk: Vec<f64>,
}

impl JackknifeSeries {
    pub fn mean(&self) -> f64 {
        self.phi_jk.iter().sum::<f64>() / self.phi_jk.len() as f64
    }

    /// Jackknife standard error of `φ′`.
    pub fn std_error(&self) -> f64 {
        let n = self.phi_loo.len() as f64;
        let m = self.phi_loo.iter().sum::<f64>() / n;
        ((n - 1.0) / n * self.phi_loo.iter().map(|x| (x - m) * (x - m)).sum::<f64>()).sqrt()
    }
}

/// Jackknife of the φ estimate on `h` with the secondary parameters of `m`.
pub fn jackknife(m: &EllipseModel, h: &CellHistogram, nodes: usize, method: LooMethod) -> Result<JackknifeSeries> {
    let n = h.n_shots();
    if n < 2 {
        return Err(Error::Degenerate("jackknife needs at least two shots".into()));
    }
    let full = fit_phi(m, h, nodes)?;
    let per_cell: Vec<f64> = match method {
        LooMethod::OneStep => {
            if !(full.curvature < 0.0) {
                return Err(Error::Degenerate("likelihood is not curved in φ at the optimum".into()));
            }
            let [lm, _, lp] = cell_log_pmf_stencil(m, h, full.phi, nodes);
            lm.iter().zip(&lp).map(|(a, b)| full.phi + (b - a) / (2.0 * PHI_STEP) / full.curvature).collect()
        }
        LooMethod::Exact => {
            let mut out = Vec::with_capacity(h.cells.len());
            for c in 0..h.cells.len() {
                let mut hc = h.clone();
                hc.counts[c] -= 1.0;
                out.push(fit_phi(m, &hc, nodes)?.phi);
            }
            out
        }
    };
    let phi_loo: Vec<f64> = h.shot_cell.iter().map(|&c| per_cell[c]).collect();
    let nf = n as f64;
    let phi_jk = phi_loo.iter().map(|&l| nf * full.phi - (nf - 1.0) * l).collect();
    Ok(JackknifeSeries { phi_full: full.phi, phi_loo, phi_jk })
}

/// Random half split of `0..n` into (calibration, measurement) index sets,
/// each in increasing order. Depends only on `n` and `seed`, so records of
/// equal length share the split.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = idx.split_at(n / 2);
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Bootstrap index sets for a sample of size `n`; replica `r` uses its own
/// ChaCha stream.
pub fn bootstrap_indices(n: usize, n_bootstrap: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..n_bootstrap)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct PipelineOptions {
    pub n_bootstrap: usize,
    pub fit: FitOptions,
    pub free: FreeMask,
    pub loo: LooMethod,
    pub factors: AveragingFactors,
    pub exec: Exec,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            n_bootstrap: 50,
            fit: FitOptions::default(),
            free: FreeMask::default(),
            loo: LooMethod::default(),
            factors: AveragingFactors::Octave,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineResult {
    pub phi_hat: f64,
    /// Jackknife standard error from the measurement data.
    pub stat_err: f64,
    /// Spread of `φ′` over recalibrations on bootstrap resamples.
    pub calib_err: f64,
    pub total_err: f64,
    pub calibration: LikelihoodResult,
    pub bootstrap_phi: Vec<f64>,
    pub jackknife: JackknifeSeries,
    /// Count-axis Allan deviation of the pseudo-values; error bars combine the
    /// χ² estimate with the spread over bootstrap calibrations.
    pub allan: AllanCurve,
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Calibrate `(C, y₀, ζ)` on `cal` (φ_cal discarded), extract φ from `meas`,
/// repeat the calibration on bootstrap resamples, and build jackknife
/// pseudo-values and their Allan deviation.
pub fn calibrated_pipeline(
    cal: &MeasurementRecord,
    meas: &MeasurementRecord,
    init: &EllipseModel,
    seed: u64,
    opts: PipelineOptions,
) -> Result<PipelineResult> {
    let hc = CellHistogram::from_record(cal)?;
    let hm = CellHistogram::from_record(meas)?;
    if hc.n_atoms != hm.n_atoms || hc.n_atoms != init.n_atoms {
        return Err(Error::invalid("calibration, measurement and model atom numbers differ"));
    }
    let nodes = opts.fit.nodes;
    let calibration = fit_mle(&hc, init, opts.free, opts.fit)?;
    let jk = jackknife(&calibration.model, &hm, nodes, opts.loo)?;
    let allan0 = overlapping_adev(&jk.phi_jk, 1.0, AllanAxis::Count, opts.factors)?.with_cycle_time(meas.meta.cycle_time);

    let boot_idx = bootstrap_indices(hc.n_shots(), opts.n_bootstrap, seed);
    let warm = FitOptions { starts: 1, ..opts.fit };
    let replicas = opts.exec.map_slice(&boot_idx, |idx| -> Result<(LikelihoodResult, f64, Vec<f64>)> {
        let hb = hc.resample(idx);
        let fit = fit_mle(&hb, &calibration.model, opts.free, warm)?;
        let series = jackknife(&fit.model, &hm, nodes, opts.loo)?;
        let curve = overlapping_adev(&series.phi_jk, 1.0, AllanAxis::Count, opts.factors)?;
        Ok((fit, series.phi_full, curve.points.iter().map(|p| p.adev).collect()))
    });
    let replicas: Vec<_> = replicas.into_iter().collect::<Result<_>>()?;

    let bootstrap_phi: Vec<f64> = replicas.iter().map(|r| r.1).collect();
    let mut spread = [0.0; 5];
    for (k, s) in spread.iter_mut().enumerate() {
        let v: Vec<f64> = replicas
            .iter()
            .map(|r| [r.0.model.phi, r.0.model.contrast, r.0.model.y0, r.0.model.zeta0, r.0.model.zeta1][k])
            .collect();
        *s = std_dev(&v);
    }
    let mut allan = allan0;
    for (j, p) in allan.points.iter_mut().enumerate() {
        let v: Vec<f64> = replicas.iter().map(|r| r.2[j]).collect();
        p.err = p.err.hypot(std_dev(&v));
    }
    let stat_err = jk.std_error();
    let calib_err = std_dev(&bootstrap_phi);
    let mut calibration = calibration;
    calibration.bootstrap_spread = (opts.n_bootstrap > 1).then_some(spread);
    Ok(PipelineResult {
        phi_hat: jk.phi_full,
        stat_err,
        calib_err,
        total_err: stat_err.hypot(calib_err),
        calibration,
        bootstrap_phi,
        jackknife: jk,
        allan,
    })
}

/// SSS-over-CSS variance gain in dB at averaging factor `m`, from the two
/// Allan curves: `10·log10(σ_CSS²/σ_SSS²)`.
pub fn variance_gain_db(css: &AllanCurve, sss: &AllanCurve, m: usize) -> Option<f64> {
    let a = css.points.iter().find(|p| p.m == m)?;
    let b = sss.points.iter().find(|p| p.m == m)?;
    Some(20.0 * (a.adev / b.adev).log10())
}

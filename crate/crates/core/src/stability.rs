//! Differential clock-comparison statistics: the `d_z` observable, frequency
//! conversion, overlapping Allan deviation with white-noise fits, and the
//! double-exponential fit used to locate squeezing optima.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::optimize::{levenberg_marquardt, LmOptions, Model};
use crate::record::MeasurementRecord;
use crate::{Error, Result};

/// Per-shot `d_z = p_A − p_B`.
pub fn dz_from_record(r: &MeasurementRecord) -> Result<Vec<f64>> {
    if r.is_empty() {
        return Err(Error::invalid("record has no shots"));
    }
    Ok(r.shots.iter().map(|s| s.p_a - s.p_b).collect())
}

/// Uniformly sampled series of angular frequency differences `ω_A − ω_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySeries {
    /// rad/s
    pub values: Vec<f64>,
    /// s
    pub sample_interval: f64,
}

impl FrequencySeries {
    /// Fractional frequency `(ω_A − ω_B)/(2π ν₀)`.
    pub fn fractional(&self, nu0: f64) -> Vec<f64> {
        self.values.iter().map(|w| w / (std::f64::consts::TAU * nu0)).collect()
    }
}

/// Small-angle conversion `ω_A − ω_B ≈ 2 d_z/(C T_dark)`.
pub fn freq_series(dz: &[f64], contrast: f64, t_dark: f64, sample_interval: f64) -> Result<FrequencySeries> {
    if !(contrast > 0.0 && contrast <= 1.0) {
        return Err(Error::invalid(format!("contrast {contrast} outside (0, 1]")));
    }
    if !(t_dark > 0.0 && t_dark.is_finite()) || !(sample_interval > 0.0 && sample_interval.is_finite()) {
        return Err(Error::invalid("t_dark and sample interval must be positive"));
    }
    if dz.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("d_z values must be finite"));
    }
    let k = 2.0 / (contrast * t_dark);
    Ok(FrequencySeries { values: dz.iter().map(|d| k * d).collect(), sample_interval })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllanAxis {
    /// τ in seconds, `τ = m · sample_interval`.
    #[default]
    Time,
    /// τ counted in samples; one sample per unit interval.
    Count,
}

/// Which averaging factors `m ≤ M/3` to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingFactors {
    All,
    /// Powers of two.
    #[default]
    Octave,
}

impl AveragingFactors {
    pub fn factors(self, n: usize) -> Vec<usize> {
        let max = n / 3;
        match self {
            AveragingFactors::All => (1..=max).collect(),
            AveragingFactors::Octave => std::iter::successors(Some(1usize), |m| m.checked_mul(2)).take_while(|&m| m <= max).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllanPoint {
    pub m: usize,
    /// Averaging time in axis units.
    pub tau: f64,
    /// Averaging time in seconds (`m · cycle_time` on the count axis).
    pub tau_s: f64,
    pub adev: f64,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllanCurve {
    pub axis: AllanAxis,
    pub points: Vec<AllanPoint>,
    /// Length of the underlying series; 0 when unknown.
    #[serde(default)]
    pub n_samples: usize,
}

impl AllanCurve {
    /// Set `tau_s = m · cycle_time` (count axis metadata).
    pub fn with_cycle_time(mut self, cycle_time: f64) -> Self {
        for p in &mut self.points {
            p.tau_s = p.m as f64 * cycle_time;
        }
        self
    }

    pub fn at_m(&self, m: usize) -> Option<&AllanPoint> {
        self.points.iter().find(|p| p.m == m)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["m", "tau_s", "adev", "err", "n_samples"])?;
        for p in &self.points {
            w.write_record([
                p.m.to_string(),
                p.tau_s.to_string(),
                p.adev.to_string(),
                p.err.to_string(),
                self.n_samples.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a curve written by [`Self::write_csv`]; `tau` is restored for the
    /// given axis and sample interval.
    pub fn read_csv(path: impl AsRef<Path>, axis: AllanAxis, sample_interval: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            m: usize,
            tau_s: f64,
            adev: f64,
            err: f64,
            #[serde(default)]
            n_samples: usize,
        }
        let mut points = Vec::new();
        let mut n_samples = 0;
        for row in csv::Reader::from_path(path)?.deserialize() {
            let r: Row = row?;
            let tau = match axis {
                AllanAxis::Time => r.m as f64 * sample_interval,
                AllanAxis::Count => r.m as f64,
            };
            n_samples = r.n_samples;
            points.push(AllanPoint { m: r.m, tau, tau_s: r.tau_s, adev: r.adev, err: r.err });
        }
        Ok(AllanCurve { axis, points, n_samples })
    }
}

/// Effective degrees of freedom of the overlapping Allan variance for white
/// frequency noise (Howe–Allan–Barnes approximation).
pub fn edf_white_fm(n: usize, m: usize) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    ((3.0 * (nf - 1.0) / (2.0 * mf)) - 2.0 * (nf - 2.0) / nf) * 4.0 * mf * mf / (4.0 * mf * mf + 5.0)
}

/// Overlapping Allan deviation of frequency data `y`:
/// `σ²(m) = Σ_j (ȳ_{j+m} − ȳ_j)² / (2(M − 2m + 1))` with `ȳ_j` the mean of
/// `y_j … y_{j+m−1}`, evaluated via prefix sums. Error bars are
/// `σ/√(2·edf)`.
pub fn overlapping_adev(y: &[f64], sample_interval: f64, axis: AllanAxis, factors: AveragingFactors) -> Result<AllanCurve> {
    let n = y.len();
    if n < 8 {
        return Err(Error::invalid(format!("Allan deviation needs at least 8 samples (got {n})")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    if !(sample_interval > 0.0) {
        return Err(Error::invalid("sample interval must be positive"));
    }
    // centre first so prefix sums keep their precision
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut s = Vec::with_capacity(n + 1);
    s.push(0.0);
    for v in y {
        s.push(s.last().unwrap() + (v - mean));
    }
    let points = factors
        .factors(n)
        .into_iter()
        .map(|m| {
            let terms = n - 2 * m + 1;
            let mf = m as f64;
            let sum: f64 = (0..terms)
                .map(|j| {
                    let d = (s[j + 2 * m] - 2.0 * s[j + m] + s[j]) / mf;
                    d * d
                })
                .sum();
            let adev = (sum / (2.0 * terms as f64)).sqrt();
            let tau = match axis {
                AllanAxis::Time => mf * sample_interval,
                AllanAxis::Count => mf,
            };
            AllanPoint { m, tau, tau_s: mf * sample_interval, adev, err: adev / (2.0 * edf_white_fm(n, m)).sqrt() }
        })
        .collect();
    Ok(AllanCurve { axis, points, n_samples: n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhiteNoiseFit {
    /// `a` in `σ(τ) = a τ^{−1/2}`, i.e. the deviation at τ = 1 axis unit.
    pub amplitude: f64,
    pub amplitude_err: f64,
    /// Free log-log slope and its uncertainty.
    pub slope: f64,
    pub slope_err: f64,
    pub chi2_red: f64,
    /// Slope within three standard errors of −1/2.
    pub white: bool,
}

/// Covariance of `ln σ̂(m)` between averaging factors for white frequency
/// noise on a series of length `n`.
///
/// Each `σ̂²(m)` is a quadratic form in Gaussian data, so
/// `Cov(σ̂²(m₁), σ̂²(m₂)) = 2 Σ_{j,k} c(j − k)² / (4 T₁ T₂)` with `c` the
/// cross-correlation of the two second-difference kernels; the log
/// covariance follows to first order.
pub fn white_fm_log_covariance(n: usize, ms: &[usize]) -> Vec<Vec<f64>> {
    let mut cov = vec![vec![0.0; ms.len()]; ms.len()];
    for i in 0..ms.len() {
        for j in i..ms.len() {
            let v = log_cov_pair(n, ms[i], ms[j]);
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    cov
}

fn log_cov_pair(n: usize, m1: usize, m2: usize) -> f64 {
    let (t1, t2) = ((n + 1).saturating_sub(2 * m1) as i64, (n + 1).saturating_sub(2 * m2) as i64);
    if t1 <= 0 || t2 <= 0 {
        return f64::INFINITY;
    }
    let (m1, m2) = (m1 as i64, m2 as i64);
    // running sum of the second kernel: −1/m₂ on [0, m₂), +1/m₂ on [m₂, 2m₂)
    let h2 = |x: i64| {
        let x = x.clamp(0, 2 * m2);
        if x <= m2 {
            -(x as f64) / m2 as f64
        } else {
            (x - 2 * m2) as f64 / m2 as f64
        }
    };
    let mut sum = 0.0;
    for lag in (1 - 2 * m1)..(2 * m2) {
        let c = (-(h2(m1 + lag) - h2(lag)) + (h2(2 * m1 + lag) - h2(m1 + lag))) / m1 as f64;
        let pairs = (t1.min(t2 + lag) - lag.max(0)).max(0);
        sum += pairs as f64 * 2.0 * c * c;
    }
    let cov_sq = sum / (4.0 * t1 as f64 * t2 as f64);
    // E σ̂²(m) = 1/m for unit-variance samples
    cov_sq * (m1 * m2) as f64 / 4.0
}

/// Generalized least squares `z = X β` with covariance `cov`.
/// Returns `(β, Cov β, χ²)`.
fn gls(x: &DMatrix<f64>, z: &DVector<f64>, cov: &DMatrix<f64>) -> Option<(DVector<f64>, DMatrix<f64>, f64)> {
    let chol = cov.clone().cholesky()?;
    let wx = chol.solve(x);
    let wz = chol.solve(z);
    let info = x.transpose() * &wx;
    let cov_beta = info.try_inverse()?;
    let beta = &cov_beta * (x.transpose() * wz);
    let r = z - x * &beta;
    let chi2 = r.dot(&chol.solve(&r));
    Some((beta, cov_beta, chi2))
}

/// Fit of `a/√τ` plus a free power-law fit as a whiteness check.
///
/// Both fits run on `ln σ̂` by generalized least squares. When the series
/// length is known the covariance between factors is the exact white-noise
/// one, otherwise the points are treated as independent with the reported
/// error bars. With the white-noise covariance, `ln σ̂` is also corrected
/// for its first-order bias `−Var(ln σ̂)`.
pub fn fit_white_noise(curve: &AllanCurve) -> Result<WhiteNoiseFit> {
    let pts: Vec<&AllanPoint> = curve.points.iter().filter(|p| p.adev > 0.0 && p.err > 0.0).collect();
    if pts.is_empty() {
        return Err(Error::invalid("Allan curve has no points with positive deviation and error"));
    }
    let k = pts.len();
    let cov = if curve.n_samples > 0 {
        let ms: Vec<usize> = pts.iter().map(|p| p.m).collect();
        let c = white_fm_log_covariance(curve.n_samples, &ms);
        DMatrix::from_fn(k, k, |i, j| c[i][j])
    } else {
        DMatrix::from_fn(k, k, |i, j| if i == j { (pts[i].err / pts[i].adev).powi(2) } else { 0.0 })
    };
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("averaging factors exceed the series length"));
    }
    let ln_tau = DVector::from_fn(k, |i, _| pts[i].tau.ln());
    let bias = if curve.n_samples > 0 { 1.0 } else { 0.0 };
    let z = DVector::from_fn(k, |i, _| pts[i].adev.ln() + bias * cov[(i, i)]);
    let singular = || Error::Numerical("singular Allan covariance".into());

    let ones = DMatrix::from_element(k, 1, 1.0);
    let (b, cb, chi2) = gls(&ones, &(&z + 0.5 * &ln_tau), &cov).ok_or_else(singular)?;
    let amplitude = b[0].exp();
    let dof = k.saturating_sub(1).max(1) as f64;

    let (slope, slope_err) = if k >= 2 {
        let x = DMatrix::from_fn(k, 2, |i, j| if j == 0 { 1.0 } else { ln_tau[i] });
        let (b, c, _) = gls(&x, &z, &cov).ok_or_else(singular)?;
        (b[1], c[(1, 1)].sqrt())
    } else {
        (-0.5, f64::INFINITY)
    };
    let white = (slope + 0.5).abs() <= 3.0 * slope_err;
    if !white {
        log::warn!("Allan slope {slope:.3} ± {slope_err:.3} is inconsistent with white noise");
    }
    Ok(WhiteNoiseFit {
        amplitude,
        amplitude_err: amplitude * cb[(0, 0)].sqrt(),
        slope,
        slope_err,
        chi2_red: chi2 / dof,
        white,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleExpFit {
    pub a: f64,
    pub b: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub t_opt: f64,
    pub xi_opt: f64,
    /// Covariance of `(a, b, Γ_a, Γ_b)`.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
}

struct DoubleExp;

impl Model for DoubleExp {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, t: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let (ea, eb) = ((-p[2] * t).exp(), (-p[3] * t).exp());
        g[0] = ea;
        g[1] = eb;
        g[2] = -p[0] * t * ea;
        g[3] = -p[1] * t * eb;
        p[0] * ea + p[1] * eb
    }
}

/// Minimum of `a e^{−Γ_a t} + b e^{−Γ_b t}` for `t > 0`, if it exists.
pub fn double_exp_minimum(a: f64, b: f64, ga: f64, gb: f64) -> Option<(f64, f64)> {
    let r = -(b * gb) / (a * ga);
    if !(r > 0.0) || ga == gb {
        return None;
    }
    let t = r.ln() / (gb - ga);
    let f = |t: f64| a * (-ga * t).exp() + b * (-gb * t).exp();
    let curv = a * ga * ga * (-ga * t).exp() + b * gb * gb * (-gb * t).exp();
    (t > 0.0 && t.is_finite() && curv > 0.0).then(|| (t, f(t)))
}

/// Weighted least-squares fit of the double exponential to
/// `(t_int, ξ², err)` points and its analytic interior minimum.
///
/// Starting values come from a grid over `(Γ_a, Γ_b)` with `(a, b)` solved
/// linearly at each node.
pub fn fit_double_exponential(points: &[(f64, f64, f64)]) -> Result<DoubleExpFit> {
    if points.len() < 5 {
        return Err(Error::invalid("double-exponential fit needs at least 5 points"));
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite() && p.2 > 0.0)) {
        return Err(Error::invalid("points must be finite with positive uncertainties"));
    }
    let t: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let s: Vec<f64> = points.iter().map(|p| p.2).collect();
    let span = t.iter().copied().fold(0.0, f64::max) - t.iter().copied().fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return Err(Error::invalid("interaction times must not all coincide"));
    }
    let rates: Vec<f64> = (-12..=12).map(|k| 3.0 * (k as f64 / 4.0).exp() / span).collect();
    let mut best: Option<(f64, [f64; 4])> = None;
    for &ga in &rates {
        for gb in rates.iter().map(|r| -r).chain(rates.iter().copied()) {
            if gb >= ga {
                continue;
            }
            // linear least squares in (a, b)
            let (mut m11, mut m12, mut m22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..t.len() {
                let w = 1.0 / (s[i] * s[i]);
                let (u, v) = ((-ga * t[i]).exp(), (-gb * t[i]).exp());
                m11 += w * u * u;
                m12 += w * u * v;
                m22 += w * v * v;
                r1 += w * u * y[i];
                r2 += w * v * y[i];
            }
            let det = m11 * m22 - m12 * m12;
            if !(det.abs() > 1e-300) {
                continue;
            }
            let (a, b) = ((m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det);
            let p = [a, b, ga, gb];
            let mut g = [0.0; 4];
            let chi2: f64 = (0..t.len()).map(|i| ((y[i] - DoubleExp.eval(t[i], &p, &mut g)) / s[i]).powi(2)).sum();
            if chi2.is_finite() && best.is_none_or(|b| chi2 < b.0) {
                best = Some((chi2, p));
            }
        }
    }
    let (_, p0) = best.ok_or_else(|| Error::Numerical("no admissible starting point".into()))?;
    let fit = levenberg_marquardt(&DoubleExp, &t, &y, &s, &p0, LmOptions::default())?;
    let [a, b, ga, gb] = [fit.params[0], fit.params[1], fit.params[2], fit.params[3]];
    let (t_opt, xi_opt) = double_exp_minimum(a, b, ga, gb)
        .ok_or_else(|| Error::NoInteriorMinimum(format!("a={a:.4e}, b={b:.4e}, Γa={ga:.4e}, Γb={gb:.4e}")))?;
    Ok(DoubleExpFit { a, b, gamma_a: ga, gamma_b: gb, t_opt, xi_opt, covariance: fit.covariance, chi2: fit.chi2 })
}

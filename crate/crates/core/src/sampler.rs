//! Monte Carlo generation of per-shot excitation-fraction records for two
//! ensembles A and B.
//!
//! Every shot draws from its own ChaCha stream derived from the seed and the
//! shot index, so records are reproducible and shots can be generated in
//! parallel. The common atom-laser phase θ of shot `i` always comes from the
//! same stream, which makes CSS and SSS records generated with one seed share
//! their θ sequence.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::DEFAULT_CYCLE_TIME;
use crate::ellipse::{log_binomial_coefficients, tempered_binomial, tempered_binomial_into, EllipseModel};
use crate::optimize::bisect;
use crate::record::{MeasurementMode, MeasurementRecord, RecordMeta, Shot, StateLabel, ThetaMode};
use crate::{Error, Exec, Result};

/// Law of the common atom-laser phase θ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LaserPhaseMode {
    Fixed { theta: f64 },
    /// Gaussian white phase noise of width `sigma` about `theta`.
    White { theta: f64, sigma: f64 },
    RandomUniform,
}

impl LaserPhaseMode {
    fn theta_mode(&self) -> ThetaMode {
        match self {
            LaserPhaseMode::Fixed { .. } => ThetaMode::Fixed,
            LaserPhaseMode::White { .. } => ThetaMode::White,
            LaserPhaseMode::RandomUniform => ThetaMode::RandomUniform,
        }
    }

    fn measurement_mode(&self) -> MeasurementMode {
        match self {
            LaserPhaseMode::Fixed { .. } => MeasurementMode::Quadrature,
            LaserPhaseMode::White { .. } => MeasurementMode::Stability,
            LaserPhaseMode::RandomUniform => MeasurementMode::Ellipse,
        }
    }
}

/// Mean-signal model `P_X = 1/2 + (C/2) cos(θ_X) + y_X` with `θ_A = θ` and
/// `θ_B = θ + φ`. The offsets `y` are those of `S_z/N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub laser_phase: LaserPhaseMode,
    pub differential_phase: f64,
    pub contrast: f64,
    pub y_a: f64,
    pub y_b: f64,
}

impl NoiseSpec {
    pub fn new(laser_phase: LaserPhaseMode, differential_phase: f64, contrast: f64) -> Self {
        NoiseSpec { laser_phase, differential_phase, contrast, y_a: 0.0, y_b: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::invalid(format!("contrast {} outside [0, 1]", self.contrast)));
        }
        let lim = 0.5 * (1.0 - self.contrast) + 1e-12;
        if !(self.y_a.abs() <= lim && self.y_b.abs() <= lim) {
            return Err(Error::invalid("offsets must satisfy |y| ≤ (1 − C)/2"));
        }
        if !self.differential_phase.is_finite() {
            return Err(Error::invalid("differential phase must be finite"));
        }
        match self.laser_phase {
            LaserPhaseMode::Fixed { theta } if !theta.is_finite() => Err(Error::invalid("θ must be finite")),
            LaserPhaseMode::White { theta, sigma } if !(theta.is_finite() && sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::invalid("white phase noise needs finite θ and σ ≥ 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn probabilities(&self, theta: f64) -> (f64, f64) {
        let h = 0.5 * self.contrast;
        (0.5 + h * theta.cos() + self.y_a, 0.5 + h * (theta + self.differential_phase).cos() + self.y_b)
    }
}

const COUNT_STREAM_CSS: u64 = 1 << 62;
const COUNT_STREAM_SSS: u64 = 2 << 62;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// θ for shot `i`.
pub fn draw_theta(law: &LaserPhaseMode, seed: u64, i: usize) -> f64 {
    let mut r = stream(seed, i as u64);
    match *law {
        LaserPhaseMode::Fixed { theta } => theta,
        LaserPhaseMode::White { theta, sigma } => theta + sigma * r.sample::<f64, _>(rand_distr::StandardNormal),
        LaserPhaseMode::RandomUniform => r.random_range(0.0..TAU),
    }
}

fn binomial(rng: &mut ChaCha8Rng, n: u32, p: f64) -> u32 {
    Binomial::new(n as u64, p).expect("p in [0, 1]").sample(rng) as u32
}

fn clip(p: f64, clipped: &AtomicUsize) -> f64 {
    if (0.0..=1.0).contains(&p) {
        p
    } else {
        clipped.fetch_add(1, Ordering::Relaxed);
        p.clamp(0.0, 1.0)
    }
}

fn warn_clipped(clipped: &AtomicUsize) {
    let c = clipped.load(Ordering::Relaxed);
    if c > 0 {
        log::warn!("{c} excitation probabilities outside [0, 1] were clipped");
    }
}

fn check_counts(n_atoms: u32, n_shots: usize) -> Result<()> {
    if n_atoms == 0 {
        return Err(Error::invalid("need at least one atom"));
    }
    if n_shots == 0 {
        return Err(Error::invalid("need at least one shot"));
    }
    Ok(())
}

fn meta(law: &LaserPhaseMode, label: StateLabel, phi: f64) -> RecordMeta {
    RecordMeta { mode: law.measurement_mode(), cycle_time: DEFAULT_CYCLE_TIME, phase_offset_deg: phi.to_degrees(), label: Some(label) }
}

/// Uncorrelated atoms: independent binomial counts per ensemble.
pub fn sample_css(n_atoms: u32, noise: &NoiseSpec, n_shots: usize, seed: u64, exec: Exec) -> Result<MeasurementRecord> {
    check_counts(n_atoms, n_shots)?;
    noise.validate()?;
    let clipped = AtomicUsize::new(0);
    let shots = exec.map_range(n_shots, |i| {
        let th = draw_theta(&noise.laser_phase, seed, i);
        let (pa, pb) = noise.probabilities(th);
        let mut r = stream(seed, COUNT_STREAM_CSS | i as u64);
        let ka = binomial(&mut r, n_atoms, clip(pa, &clipped));
        let kb = binomial(&mut r, n_atoms, clip(pb, &clipped));
        Shot::from_counts(ka, kb, n_atoms, n_atoms)
    });
    warn_clipped(&clipped);
    MeasurementRecord::new(shots, noise.laser_phase.theta_mode(), 0.0, meta(&noise.laser_phase, StateLabel::Css, noise.differential_phase))
}

/// Inverse-CDF draw from a discrete mass function.
pub fn draw_discrete(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Largest tempering exponent accepted; smaller ζ is treated as
/// non-normalizable.
const MAX_EXPONENT: f64 = 1e6;

/// Tempered-binomial ("squeezed") ensembles. Probabilities and ζ come from
/// `model`; only the θ law is taken from `noise`. Since the mass function
/// factorizes at fixed θ, `k_A` and `k_B` are drawn separately.
pub fn sample_sss(noise: &NoiseSpec, model: &EllipseModel, n_shots: usize, seed: u64, exec: Exec) -> Result<MeasurementRecord> {
    model.validate()?;
    noise.validate()?;
    check_counts(model.n_atoms, n_shots)?;
    let zmin = model.zeta0.min(model.zeta1);
    if !(1.0 / (zmin * zmin) <= MAX_EXPONENT) {
        return Err(Error::invalid(format!("ζ = {zmin} is too small for a normalizable mass function")));
    }
    let n = model.n_atoms;
    let lnc = log_binomial_coefficients(n);
    let shots = exec.map_range(n_shots, |i| {
        let th = draw_theta(&noise.laser_phase, seed, i);
        let (pa, pb) = model.probabilities(th);
        let mut r = stream(seed, COUNT_STREAM_SSS | i as u64);
        let mut pmf = vec![0.0; n as usize + 1];
        tempered_binomial_into(&lnc, pa, 1.0 / model.zeta_sq(th), &mut pmf);
        let ka = draw_discrete(&pmf, r.random::<f64>());
        tempered_binomial_into(&lnc, pb, 1.0 / model.zeta_sq(th + model.phi), &mut pmf);
        let kb = draw_discrete(&pmf, r.random::<f64>());
        Shot::from_counts(ka as u32, kb as u32, n, n)
    });
    MeasurementRecord::new(shots, noise.laser_phase.theta_mode(), 0.0, meta(&noise.laser_phase, StateLabel::Sss, model.phi))
}

/// CSS and SSS records whose shots pairwise share θ.
pub fn sample_interleaved(
    noise: &NoiseSpec,
    sss: &EllipseModel,
    n_pairs: usize,
    seed: u64,
    exec: Exec,
) -> Result<(MeasurementRecord, MeasurementRecord)> {
    Ok((sample_css(sss.n_atoms, noise, n_pairs, seed, exec)?, sample_sss(noise, sss, n_pairs, seed, exec)?))
}

/// Shots drawn from given excitation-number distributions, e.g. the readout
/// distributions of exact small-array dynamics.
pub fn sample_from_distributions(dist_a: &[f64], dist_b: &[f64], n_shots: usize, seed: u64, exec: Exec) -> Result<MeasurementRecord> {
    if dist_a.len() != dist_b.len() || dist_a.len() < 2 {
        return Err(Error::invalid("distributions must cover 0..=N for the same N ≥ 1"));
    }
    for d in [dist_a, dist_b] {
        let s: f64 = d.iter().sum();
        if d.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("distributions must be nonnegative and sum to 1"));
        }
    }
    let n = (dist_a.len() - 1) as u32;
    check_counts(n, n_shots)?;
    let shots = exec.map_range(n_shots, |i| {
        let mut r = stream(seed, COUNT_STREAM_SSS | i as u64);
        let ka = draw_discrete(dist_a, r.random::<f64>());
        let kb = draw_discrete(dist_b, r.random::<f64>());
        Shot::from_counts(ka as u32, kb as u32, n, n)
    });
    let meta = RecordMeta { mode: MeasurementMode::Quadrature, ..Default::default() };
    MeasurementRecord::new(shots, ThetaMode::Fixed, 0.0, meta)
}

/// Variance of a mass function over `k = 0..`.
pub fn pmf_variance(pmf: &[f64]) -> f64 {
    let m: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    pmf.iter().enumerate().map(|(k, p)| (k as f64 - m).powi(2) * p).sum()
}

/// `ζ₀` for which the tempered binomial at `P = 1/2` has its variance reduced
/// by `gain_db` relative to the binomial, computed by exact summation.
pub fn zeta0_for_variance_gain(n_atoms: u32, gain_db: f64) -> Result<f64> {
    if n_atoms < 2 {
        return Err(Error::invalid("need at least two atoms"));
    }
    let target = 10f64.powf(-gain_db / 10.0);
    let binom = n_atoms as f64 / 4.0;
    let ratio = |z: f64| pmf_variance(&tempered_binomial(n_atoms, 0.5, 1.0 / (z * z))) / binom;
    bisect(|z| ratio(z) - target, 0.05, 5.0, 1e-13)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Servo {
    Off,
    /// Integrator on the mean-excitation error with the given gain per shot.
    Integrator { gain: f64 },
}

/// Ramsey stability run near the fringe midpoint.
///
/// Shot `i` has `θ_i = π/2 + 2π (f_laser − c_i) T_dark + σ_θ n_i` with white
/// `n_i`, and ensemble B sees the extra phase `2π δf T_dark`. The servo
/// correction `c_i` integrates the mean-excitation error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub n_atoms: u32,
    pub contrast: f64,
    /// Excitation fraction at θ = π/2.
    pub y0: f64,
    pub t_dark: f64,
    pub cycle_time: f64,
    /// Laser phase noise per shot (rad).
    pub phase_noise: f64,
    /// Laser detuning from the atoms (Hz).
    pub laser_freq_offset_hz: f64,
    /// Frequency difference between ensembles A and B (Hz).
    pub differential_freq_hz: f64,
    pub servo: Servo,
    pub n_shots: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            n_atoms: 70,
            contrast: 0.96,
            y0: 0.5,
            t_dark: 54.5e-3,
            cycle_time: DEFAULT_CYCLE_TIME,
            phase_noise: 0.05,
            laser_freq_offset_hz: 0.0,
            differential_freq_hz: 0.0,
            servo: Servo::Integrator { gain: 0.1 },
            n_shots: 2000,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        check_counts(self.n_atoms, self.n_shots)?;
        if !(self.t_dark > 0.0 && self.t_dark.is_finite()) {
            return Err(Error::invalid("t_dark must be positive"));
        }
        if !(self.cycle_time > 0.0) {
            return Err(Error::invalid("cycle_time must be positive"));
        }
        if !(0.0..=1.0).contains(&self.contrast) || !(self.y0 >= 0.5 * self.contrast && self.y0 <= 1.0 - 0.5 * self.contrast) {
            return Err(Error::invalid("need C ∈ [0, 1] and y0 ∈ [C/2, 1 − C/2]"));
        }
        if !(self.phase_noise >= 0.0) || !self.laser_freq_offset_hz.is_finite() || !self.differential_freq_hz.is_finite() {
            return Err(Error::invalid("noise and frequency offsets must be finite, σ ≥ 0"));
        }
        if let Servo::Integrator { gain } = self.servo {
            if !(gain > 0.0 && gain <= 2.0) {
                return Err(Error::invalid("servo gain must lie in (0, 2]"));
            }
        }
        Ok(())
    }

    /// Differential phase accumulated in the dark time.
    pub fn differential_phase(&self) -> f64 {
        TAU * self.differential_freq_hz * self.t_dark
    }

    fn model(&self, zeta: (f64, f64)) -> EllipseModel {
        EllipseModel {
            phi: self.differential_phase(),
            contrast: self.contrast,
            y0: self.y0,
            zeta0: zeta.0,
            zeta1: zeta.1,
            n_atoms: self.n_atoms,
        }
    }
}

/// Run the locked sequence for one or more interleaved state models sharing
/// the laser. Returns one record per model.
fn stability_runs(cfg: &StabilityConfig, states: &[Option<(f64, f64)>], seed: u64) -> Result<Vec<MeasurementRecord>> {
    cfg.validate()?;
    let n = cfg.n_atoms;
    let lnc = log_binomial_coefficients(n);
    let noise = Normal::new(0.0, cfg.phase_noise.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let mut correction = 0.0;
    let mut shots: Vec<Vec<Shot>> = vec![Vec::with_capacity(cfg.n_shots); states.len()];
    let mut pmf = vec![0.0; n as usize + 1];
    for i in 0..cfg.n_shots {
        let mut r = stream(seed, i as u64);
        let theta = FRAC_PI_2 + TAU * (cfg.laser_freq_offset_hz - correction) * cfg.t_dark + noise.sample(&mut r);
        let mut err = 0.0;
        for (s, st) in states.iter().enumerate() {
            let m = cfg.model(st.unwrap_or((1.0, 1.0)));
            let (pa, pb) = m.probabilities(theta);
            let mut rc = stream(seed, (s as u64 + 1) << 62 | i as u64);
            let (ka, kb) = match st {
                None => (binomial(&mut rc, n, pa), binomial(&mut rc, n, pb)),
                Some(_) => {
                    tempered_binomial_into(&lnc, pa, 1.0 / m.zeta_sq(theta), &mut pmf);
                    let ka = draw_discrete(&pmf, rc.random::<f64>()) as u32;
                    tempered_binomial_into(&lnc, pb, 1.0 / m.zeta_sq(theta + m.phi), &mut pmf);
                    (ka, draw_discrete(&pmf, rc.random::<f64>()) as u32)
                }
            };
            let shot = Shot::from_counts(ka, kb, n, n);
            err += 0.5 * (shot.p_a + shot.p_b) - cfg.y0;
            shots[s].push(shot);
        }
        if let Servo::Integrator { gain } = cfg.servo {
            // P ≈ y0 − (C/2)·δθ near the midpoint, so the residual laser
            // detuning is estimated as −err/(π C T_dark)
            let err = err / states.len() as f64;
            if cfg.contrast > 0.0 {
                correction -= gain * err / (PI * cfg.contrast * cfg.t_dark);
            }
        }
    }
    states
        .iter()
        .zip(shots)
        .map(|(st, sh)| {
            let meta = RecordMeta {
                mode: MeasurementMode::Stability,
                cycle_time: cfg.cycle_time,
                phase_offset_deg: cfg.differential_phase().to_degrees(),
                label: Some(if st.is_some() { StateLabel::Sss } else { StateLabel::Css }),
            };
            MeasurementRecord::new(sh, ThetaMode::White, cfg.t_dark, meta)
        })
        .collect()
}

/// One locked stability run; `zeta` selects the tempered-binomial state
/// model (`None` for uncorrelated atoms).
pub fn sample_stability_run(cfg: &StabilityConfig, zeta: Option<(f64, f64)>, seed: u64) -> Result<MeasurementRecord> {
    Ok(stability_runs(cfg, &[zeta], seed)?.pop().expect("one record"))
}

/// Interleaved CSS/SSS stability runs sharing the laser and its servo.
pub fn sample_stability_interleaved(cfg: &StabilityConfig, zeta: (f64, f64), seed: u64) -> Result<(MeasurementRecord, MeasurementRecord)> {
    let mut v = stability_runs(cfg, &[None, Some(zeta)], seed)?;
    let sss = v.pop().expect("two records");
    Ok((v.pop().expect("two records"), sss))
}

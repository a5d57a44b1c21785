use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::block::BlockPropagator;
use super::hamiltonian::{Drive, Hamiltonian3};
use super::krylov::{expmv, KrylovOptions};
use super::state::{QuantumState, SpinMoments};
use crate::geometry::ArrayGeometry;
use crate::metrology::{QuadratureCurve, SqueezingObservables};
use crate::potentials::DressingParams;
use crate::{Error, Exec, Result};

/// Linear Rydberg-laser ramps: `Ω_r` from 0 to its plateau value and `Δ`
/// from `delta_start_factor·Δ` down to `Δ`; ramp-down mirrors ramp-up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampSchedule {
    pub ramp_duration: f64,
    pub step: f64,
    pub delta_start_factor: f64,
}

impl Default for RampSchedule {
    fn default() -> Self {
        RampSchedule { ramp_duration: 225e-9, step: 6.5e-9, delta_start_factor: 3.0 }
    }
}

impl RampSchedule {
    /// Instantaneous ramps (dressing switched on and off abruptly).
    pub fn sudden() -> Self {
        RampSchedule { ramp_duration: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ramp_duration >= 0.0 && self.ramp_duration.is_finite()) || !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("ramp duration must be ≥ 0 and step > 0"));
        }
        if self.ramp_duration > 0.0 && self.step > self.ramp_duration {
            return Err(Error::invalid("ramp step exceeds ramp duration"));
        }
        if !self.delta_start_factor.is_finite() {
            return Err(Error::invalid("ramp detuning factor must be finite"));
        }
        Ok(())
    }

    /// Whole number of steps per ramp.
    pub fn n_steps(&self) -> usize {
        if self.ramp_duration == 0.0 {
            0
        } else {
            ((self.ramp_duration / self.step).round() as usize).max(1)
        }
    }

    /// Drive at time `t` into the ramp-up.
    pub fn up(&self, p: &DressingParams, t: f64) -> Drive {
        let s = (t / self.ramp_duration).clamp(0.0, 1.0);
        Drive {
            omega_r: s * p.omega_r,
            delta: p.delta * (self.delta_start_factor + (1.0 - self.delta_start_factor) * s),
            omega_c: 0.0,
        }
    }

    pub fn down(&self, p: &DressingParams, t: f64) -> Drive {
        self.up(p, self.ramp_duration - t)
    }

    pub fn plateau(p: &DressingParams) -> Drive {
        Drive { omega_r: p.omega_r, delta: p.delta, omega_c: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    /// Clock rotation by `angle` about `cos(phase) x + sin(phase) y`.
    ClockPulse { angle: f64, phase: f64 },
    /// Ramp up, hold for `duration` (s), ramp down. Zero duration is a no-op.
    RydbergOn { duration: f64 },
    EchoPi,
    /// `exp(iα S_z)`: shifts the phase of subsequent clock pulses so the final
    /// π/2 pulse maps quadrature α onto the measurement axis.
    QuadratureRotation { alpha: f64 },
    FinalPi2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
}

impl PulseSequence {
    /// π/2, dressing t/2, echo π, dressing t/2.
    pub fn spin_echo(t_int: f64) -> Self {
        PulseSequence {
            segments: vec![
                Segment::ClockPulse { angle: PI / 2.0, phase: 0.0 },
                Segment::RydbergOn { duration: 0.5 * t_int },
                Segment::EchoPi,
                Segment::RydbergOn { duration: 0.5 * t_int },
            ],
        }
    }

    /// Spin echo followed by the readout: a π/2 pulse returning the mean spin
    /// to the pole, the α phase shift, and the final π/2 pulse.
    pub fn spin_echo_with_readout(t_int: f64, alpha: f64) -> Self {
        let mut s = Self::spin_echo(t_int);
        s.segments.extend([
            Segment::ClockPulse { angle: PI / 2.0, phase: 0.0 },
            Segment::QuadratureRotation { alpha },
            Segment::FinalPi2,
        ]);
        s
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.segments {
            let ok = match *s {
                Segment::ClockPulse { angle, phase } => angle.is_finite() && phase.is_finite(),
                Segment::RydbergOn { duration } => duration >= 0.0 && duration.is_finite(),
                Segment::QuadratureRotation { alpha } => alpha.is_finite(),
                Segment::EchoPi | Segment::FinalPi2 => true,
            };
            if !ok {
                return Err(Error::invalid(format!("invalid sequence segment {s:?}")));
            }
        }
        Ok(())
    }

    /// Total dressing time excluding ramps.
    pub fn interaction_time(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| if let Segment::RydbergOn { duration } = s { *duration } else { 0.0 })
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SequenceOptions {
    pub ramp: RampSchedule,
    /// Apply clock pulses with the finite Rabi frequency `Ω_c` (Rydberg laser
    /// off) instead of instantaneously.
    pub finite_clock_pulses: bool,
    pub integrator: Integrator,
    /// Memory budget for keeping ramp-step propagators between dressing
    /// segments; steps beyond it are rebuilt on each use.
    pub ramp_cache_bytes: usize,
    /// Residual Rydberg population above which a warning is raised.
    pub rydberg_warning: f64,
    pub exec: Exec,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            ramp: RampSchedule::default(),
            finite_clock_pulses: false,
            integrator: Integrator::default(),
            ramp_cache_bytes: 2 << 30,
            rydberg_warning: 0.05,
            exec: Exec::default(),
        }
    }
}

/// Time-stepping rule for ramps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// One exponential per step with the drive frozen at the step midpoint.
    Midpoint,
    /// Fourth-order commutator-free Magnus scheme: two exponentials per step,
    /// each with a fixed weighted average of the drive at the two Gauss nodes.
    #[default]
    Magnus4,
}

fn mix(a: Drive, wa: f64, b: Drive, wb: f64) -> Drive {
    Drive {
        omega_r: wa * a.omega_r + wb * b.omega_r,
        delta: wa * a.delta + wb * b.delta,
        omega_c: wa * a.omega_c + wb * b.omega_c,
    }
}

/// Constant-drive factors `(drive, duration)` making up one ramp-up, in
/// application order. The ramp-down is the same list reversed.
fn ramp_factors(ramp: &RampSchedule, p: &DressingParams, integrator: Integrator) -> Vec<(Drive, f64)> {
    let n = ramp.n_steps();
    if n == 0 {
        return Vec::new();
    }
    let dt = ramp.ramp_duration / n as f64;
    let c = 3f64.sqrt() / 6.0;
    let (a1, a2) = ((3.0 - 2.0 * 3f64.sqrt()) / 12.0, (3.0 + 2.0 * 3f64.sqrt()) / 12.0);
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let t0 = k as f64 * dt;
        match integrator {
            Integrator::Midpoint => out.push((ramp.up(p, t0 + 0.5 * dt), dt)),
            Integrator::Magnus4 => {
                let (d1, d2) = (ramp.up(p, t0 + (0.5 - c) * dt), ramp.up(p, t0 + (0.5 + c) * dt));
                out.push((mix(d1, 2.0 * a2, d2, 2.0 * a1), 0.5 * dt));
                out.push((mix(d1, 2.0 * a1, d2, 2.0 * a2), 0.5 * dt));
            }
        }
    }
    out
}

/// Propagate under a time-dependent drive with `round(duration/step)` steps
/// of step-frozen exponentials. Returns the number of steps taken.
#[allow(clippy::too_many_arguments)]
pub fn propagate<F: Fn(f64) -> Drive>(
    state: &mut QuantumState,
    h: &Hamiltonian3,
    drive: F,
    duration: f64,
    step: f64,
    integrator: Integrator,
    krylov: KrylovOptions,
    exec: Exec,
) -> Result<usize> {
    if state.n_atoms() != h.n_atoms() {
        return Err(Error::invalid("state and Hamiltonian atom numbers differ"));
    }
    if !(duration >= 0.0 && step > 0.0) || !duration.is_finite() {
        return Err(Error::invalid("duration must be ≥ 0 and step > 0"));
    }
    if duration == 0.0 {
        return Ok(0);
    }
    if step > duration * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("step {step:e} s exceeds duration {duration:e} s")));
    }
    let n = ((duration / step).round() as usize).max(1);
    let dt = duration / n as f64;
    let c = 3f64.sqrt() / 6.0;
    let (a1, a2) = ((3.0 - 2.0 * 3f64.sqrt()) / 12.0, (3.0 + 2.0 * 3f64.sqrt()) / 12.0);
    for k in 0..n {
        let t0 = k as f64 * dt;
        match integrator {
            Integrator::Midpoint => {
                expmv(&h.at(drive(t0 + 0.5 * dt)), state.amplitudes_mut(), dt, krylov, exec)?;
            }
            Integrator::Magnus4 => {
                let (d1, d2) = (drive(t0 + (0.5 - c) * dt), drive(t0 + (0.5 + c) * dt));
                // a1 + a2 = 1/2, so each factor is a half step under an averaged drive
                expmv(&h.at(mix(d1, 2.0 * a2, d2, 2.0 * a1)), state.amplitudes_mut(), 0.5 * dt, krylov, exec)?;
                expmv(&h.at(mix(d1, 2.0 * a1, d2, 2.0 * a2)), state.amplitudes_mut(), 0.5 * dt, krylov, exec)?;
            }
        }
    }
    Ok(n)
}

/// Readout of `S_z` after the full sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutResult {
    /// `4 Var(S_z)/N` of the projected final state.
    pub var_ratio: f64,
    pub mean_sz: f64,
    /// Probability of `k` excited atoms after projection.
    pub excitation_distribution: Vec<f64>,
}

/// Outcome of one sequence run.
#[derive(Clone, Debug, Serialize)]
pub struct EdRun {
    pub t_int: f64,
    pub squeezing: SqueezingObservables,
    pub mean_spin: [f64; 3],
    pub sigma_z: Vec<f64>,
    /// Pre-projection Rydberg population at the observation point.
    pub rydberg_population: f64,
    pub max_rydberg_population: f64,
    pub readout: Option<ReadoutResult>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub final_state: QuantumState,
}

struct Runner<'a> {
    h: Hamiltonian3,
    p: &'a DressingParams,
    opts: SequenceOptions,
    plateau: Option<BlockPropagator>,
    ramp: Vec<(Drive, f64)>,
    ramp_cache: Vec<Option<BlockPropagator>>,
    cached_bytes: usize,
}

impl<'a> Runner<'a> {
    fn new(g: &ArrayGeometry, p: &'a DressingParams, opts: SequenceOptions) -> Result<Self> {
        p.validate()?;
        opts.ramp.validate()?;
        let ramp = ramp_factors(&opts.ramp, p, opts.integrator);
        let ramp_cache = ramp.iter().map(|_| None).collect();
        Ok(Runner { h: Hamiltonian3::new(g, p.c6)?, p, opts, plateau: None, ramp, ramp_cache, cached_bytes: 0 })
    }

    fn clock(&self, state: &mut QuantumState, angle: f64, phase: f64) -> Result<()> {
        state.rotate_clock(angle, phase);
        if self.opts.finite_clock_pulses {
            if self.p.omega_c <= 0.0 {
                return Err(Error::invalid("finite clock pulses need Ω_c > 0"));
            }
            // With the Rydberg laser off, Rydberg configurations are conserved
            // and only pick up their diagonal phase during the pulse.
            let t = angle.abs() / self.p.omega_c;
            let d = Drive { omega_r: 0.0, delta: self.p.delta, omega_c: 0.0 };
            for (b, a) in state.amplitudes_mut().iter_mut().enumerate() {
                if self.h.rydberg_count(b) > 0 {
                    *a *= Complex64::from_polar(1.0, -self.h.diagonal(b, &d) * t);
                }
            }
        }
        Ok(())
    }

    /// Apply ramp factor `k` with an exact block propagator.
    fn ramp_factor(&mut self, state: &mut QuantumState, k: usize) -> Result<()> {
        let (drive, dt) = self.ramp[k];
        let exec = self.opts.exec;
        if let Some(bp) = &self.ramp_cache[k] {
            bp.apply(state.amplitudes_mut(), dt, exec);
            return Ok(());
        }
        let bp = BlockPropagator::new(&self.h, drive, exec)?;
        bp.apply(state.amplitudes_mut(), dt, exec);
        let bytes = bp.memory_bytes();
        if self.cached_bytes + bytes <= self.opts.ramp_cache_bytes {
            self.cached_bytes += bytes;
            self.ramp_cache[k] = Some(bp);
        }
        Ok(())
    }

    fn dressing(&mut self, state: &mut QuantumState, duration: f64, max_ryd: &mut f64) -> Result<()> {
        if duration == 0.0 {
            return Ok(());
        }
        let (p, exec) = (self.p, self.opts.exec);
        for k in 0..self.ramp.len() {
            self.ramp_factor(state, k)?;
        }
        *max_ryd = max_ryd.max(state.rydberg_population());
        if self.plateau.is_none() {
            self.plateau = Some(BlockPropagator::new(&self.h, RampSchedule::plateau(p), exec)?);
        }
        self.plateau.as_ref().expect("built above").apply(state.amplitudes_mut(), duration, exec);
        *max_ryd = max_ryd.max(state.rydberg_population());
        for k in (0..self.ramp.len()).rev() {
            self.ramp_factor(state, k)?;
        }
        *max_ryd = max_ryd.max(state.rydberg_population());
        Ok(())
    }

    fn run(&mut self, seq: &PulseSequence) -> Result<EdRun> {
        seq.validate()?;
        let n = self.h.n_atoms();
        let mut state = QuantumState::ground(n)?;
        let capture_at = seq
            .segments
            .iter()
            .rposition(|s| matches!(s, Segment::RydbergOn { .. }))
            .map_or(seq.segments.len(), |i| i + 1);
        let mut max_ryd: f64 = 0.0;
        let mut captured = None;
        for (k, seg) in seq.segments.iter().enumerate() {
            if k == capture_at {
                captured = Some(self.observe(&state)?);
            }
            match *seg {
                Segment::ClockPulse { angle, phase } => self.clock(&mut state, angle, phase)?,
                Segment::EchoPi => self.clock(&mut state, PI, 0.0)?,
                Segment::FinalPi2 => self.clock(&mut state, PI / 2.0, 0.0)?,
                Segment::QuadratureRotation { alpha } => state.rotate_z(alpha),
                Segment::RydbergOn { duration } => self.dressing(&mut state, duration, &mut max_ryd)?,
            }
        }
        let readout = if capture_at < seq.segments.len() {
            let spin = state.project_spin()?;
            let m = spin.moments();
            Some(ReadoutResult {
                var_ratio: 4.0 * m.cov[2][2] / n as f64,
                mean_sz: m.mean[2],
                excitation_distribution: spin.excitation_distribution(),
            })
        } else {
            captured = Some(self.observe(&state)?);
            None
        };
        let (squeezing, moments, sigma_z, ryd) = captured.expect("captured");
        let mut warnings = Vec::new();
        if ryd > self.opts.rydberg_warning {
            let msg = format!("residual Rydberg population {ryd:.3} exceeds {:.2}", self.opts.rydberg_warning);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(EdRun {
            t_int: seq.interaction_time(),
            squeezing,
            mean_spin: moments.mean,
            sigma_z,
            rydberg_population: ryd,
            max_rydberg_population: max_ryd.max(ryd),
            readout,
            warnings,
            final_state: state,
        })
    }

    fn observe(&self, state: &QuantumState) -> Result<(SqueezingObservables, SpinMoments, Vec<f64>, f64)> {
        let n = self.h.n_atoms();
        let spin = state.project_spin()?;
        let m = spin.moments();
        let (e1, e2) = quadrature_frame(&m.mean);
        let q = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
            (0..3).map(|i| (0..3).map(|j| a[i] * m.cov[i][j] * b[j]).sum::<f64>()).sum()
        };
        let curve = QuadratureCurve::from_moments(q(&e1, &e1), q(&e2, &e2), q(&e1, &e2), n);
        let len = m.mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        let obs = SqueezingObservables::new(n, 2.0 * len / n as f64, curve);
        Ok((obs, m, spin.sigma_z(), state.rydberg_population()))
    }
}

/// Quadrature axes perpendicular to the mean spin `n̂`: `e1` is `ẑ` projected
/// off `n̂` (or `x̂` if `n̂ ∥ ẑ`), and `e2 = e1 × n̂`.
fn quadrature_frame(mean: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let len = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nhat = if len > 1e-12 { [mean[0] / len, mean[1] / len, mean[2] / len] } else { [1.0, 0.0, 0.0] };
    let project = |v: [f64; 3]| {
        let d: f64 = (0..3).map(|i| v[i] * nhat[i]).sum();
        let w = [v[0] - d * nhat[0], v[1] - d * nhat[1], v[2] - d * nhat[2]];
        let l = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        (w, l)
    };
    let (mut e1, mut l) = project([0.0, 0.0, 1.0]);
    if l < 1e-9 {
        (e1, l) = project([1.0, 0.0, 0.0]);
    }
    let e1 = [e1[0] / l, e1[1] / l, e1[2] / l];
    let e2 = [
        e1[1] * nhat[2] - e1[2] * nhat[1],
        e1[2] * nhat[0] - e1[0] * nhat[2],
        e1[0] * nhat[1] - e1[1] * nhat[0],
    ];
    (e1, e2)
}

/// Execute `seq` from `|gg…g⟩` and extract squeezing observables at the end
/// of the last dressing segment. Segments after it are executed as a readout.
pub fn run_sequence(g: &ArrayGeometry, p: &DressingParams, seq: &PulseSequence, opts: SequenceOptions) -> Result<EdRun> {
    Runner::new(g, p, opts)?.run(seq)
}

/// Spin-echo runs for several interaction times sharing one Hamiltonian and
/// one plateau propagator.
pub fn run_sequence_scan(g: &ArrayGeometry, p: &DressingParams, t_ints: &[f64], opts: SequenceOptions) -> Result<Vec<EdRun>> {
    let mut r = Runner::new(g, p, opts)?;
    t_ints.iter().map(|&t| r.run(&PulseSequence::spin_echo(t))).collect()
}

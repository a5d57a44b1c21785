//! Dressed two-body interactions: weak-dressing soft-core potentials, exact
//! two-atom light shifts, and soft-core fits to pair-oscillation data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{c6_from_hz_um6, hz_to_rad, rad_to_hz, LATTICE_CONSTANT, TWO_PI};
use crate::optimize::{levenberg_marquardt, LmOptions, Model};
use crate::{Error, Result};

/// Rydberg drive parameters. Angular frequencies in rad/s; `c6` in rad/s·m⁶.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DressingParams {
    pub omega_r: f64,
    pub delta: f64,
    pub c6: f64,
    pub omega_c: f64,
}

impl DressingParams {
    /// Build from lab units with the 2π dropped: Rabi frequencies and detuning
    /// in Hz, `C6` in Hz·µm⁶.
    pub fn from_lab(omega_r_hz: f64, delta_hz: f64, c6_hz_um6: f64, omega_c_hz: f64) -> Result<Self> {
        let p = DressingParams {
            omega_r: hz_to_rad(omega_r_hz),
            delta: hz_to_rad(delta_hz),
            c6: c6_from_hz_um6(c6_hz_um6),
            omega_c: hz_to_rad(omega_c_hz),
        };
        p.validate()?;
        Ok(p)
    }

    /// Typical operating point: Ω_r = 2π×5.5 MHz, Δ = 2π×11 MHz,
    /// C6 = 2π×9.1 GHz µm⁶, Ω_c = 2π×250 Hz.
    pub fn typical() -> Self {
        DressingParams::from_lab(5.5e6, 11e6, 9.1e9, 250.0).expect("valid defaults")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r > 0.0 && self.omega_r.is_finite()) {
            return Err(Error::invalid(format!("Rydberg Rabi frequency must be positive, got {}", self.omega_r)));
        }
        if self.delta == 0.0 || !self.delta.is_finite() {
            return Err(Error::invalid("detuning must be nonzero and finite (blockade radius undefined)"));
        }
        if !self.c6.is_finite() || !self.omega_c.is_finite() || self.omega_c < 0.0 {
            return Err(Error::invalid("C6 and clock Rabi frequency must be finite, Ω_c ≥ 0"));
        }
        Ok(())
    }

    /// Dressing parameter β = Ω_r / (2Δ).
    pub fn beta(&self) -> f64 {
        self.omega_r / (2.0 * self.delta)
    }

    /// Van der Waals shift `C6/r⁶` (rad/s) at distance `r` (m).
    pub fn vdw(&self, r: f64) -> f64 {
        self.c6 / r.powi(6)
    }
}

/// Soft-core potential `V(r) = V0 / (1 + (r/R_b)^6)`, energies in h×Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftCorePotential {
    pub v0_hz: f64,
    /// Blockade radius (m).
    pub r_b: f64,
}

impl SoftCorePotential {
    pub fn new(v0_hz: f64, r_b: f64) -> Result<Self> {
        if !v0_hz.is_finite() || !(r_b > 0.0 && r_b.is_finite()) {
            return Err(Error::invalid(format!("invalid soft-core parameters V0={v0_hz}, R_b={r_b}")));
        }
        Ok(SoftCorePotential { v0_hz, r_b })
    }

    /// Fitted reference values from pair spectroscopy: V0 = h×46.4 kHz,
    /// R_b = 4.9 lattice sites.
    pub fn fitted_reference() -> Self {
        SoftCorePotential { v0_hz: 46.4e3, r_b: 4.9 * LATTICE_CONSTANT }
    }

    pub fn r_b_lattice(&self, lattice_constant: f64) -> f64 {
        self.r_b / lattice_constant
    }

    /// Interaction energy (h×Hz) at distance `r` (m).
    pub fn at(&self, r: f64) -> f64 {
        soft_core(self, r)
    }
}

pub fn soft_core(v: &SoftCorePotential, r: f64) -> f64 {
    let x = (r / v.r_b).powi(6);
    v.v0_hz / (1.0 + x)
}

/// Weak-dressing potential: `V0 = ħ β³ Ω_r`, `R_b = |C6 / (2Δ)|^{1/6}`.
pub fn weak_dressing_potential(p: &DressingParams) -> Result<SoftCorePotential> {
    p.validate()?;
    let beta = p.beta();
    let v0_hz = rad_to_hz(beta.powi(3) * p.omega_r);
    let r_b = (p.c6 / (2.0 * p.delta)).abs().powf(1.0 / 6.0);
    SoftCorePotential::new(v0_hz, r_b)
}

/// Pair-interaction oscillation frequency ω/2π (Hz) at distance `r` (m), from
/// the exact two-atom dressed spectrum: `V(r) = 2ħω`.
pub fn pair_oscillation_frequency(p: &DressingParams, r: f64) -> Result<f64> {
    Ok(0.5 * crate::exact_diag::dressed_pair_shift(p, r)?)
}

/// One pair-spectroscopy data point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPoint {
    /// Separation in lattice units.
    pub r_lat: f64,
    /// Oscillation frequency ω/2π (Hz).
    pub freq_hz: f64,
    pub err_hz: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairOscillationData {
    pub points: Vec<PairPoint>,
}

impl PairOscillationData {
    pub fn new(points: Vec<PairPoint>) -> Result<Self> {
        let d = PairOscillationData { points };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if !(p.r_lat > 0.0) || !p.freq_hz.is_finite() || !(p.err_hz > 0.0 && p.err_hz.is_finite()) {
                return Err(Error::invalid(format!("invalid pair data point {p:?}")));
            }
        }
        let mut r: Vec<f64> = self.points.iter().map(|p| p.r_lat).collect();
        r.sort_by(f64::total_cmp);
        if r.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("pair separations must be distinct"));
        }
        Ok(())
    }

    /// Noiseless data sampled from a soft-core model with a relative error bar.
    pub fn synthetic(model: &SoftCorePotential, lattice_constant: f64, r_lat: &[f64], rel_err: f64) -> Result<Self> {
        let points = r_lat
            .iter()
            .map(|&r| {
                let f = 0.5 * model.at(r * lattice_constant);
                PairPoint { r_lat: r, freq_hz: f, err_hz: (rel_err * f.abs()).max(f64::MIN_POSITIVE) }
            })
            .collect();
        PairOscillationData::new(points)
    }

    /// Read CSV with columns `r_lat, freq_hz, err_hz`.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let points: Vec<PairPoint> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        PairOscillationData::new(points)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of a soft-core fit in lab units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftCoreFit {
    pub v0_hz: f64,
    pub rb_lat: f64,
    /// Covariance of `(v0_hz, rb_lat)`.
    pub covariance: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl SoftCoreFit {
    pub fn v0_err(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn rb_err(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn potential(&self, lattice_constant: f64) -> Result<SoftCorePotential> {
        SoftCorePotential::new(self.v0_hz, self.rb_lat * lattice_constant)
    }
}

/// `f(r) = f0 / (1 + (r/R_b)^6)` with parameters `(f0, R_b)`.
struct SoftCoreModel;

impl Model for SoftCoreModel {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, r: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let (f0, rb) = (p[0], p[1]);
        let x = (r / rb).powi(6);
        let d = 1.0 / (1.0 + x);
        g[0] = d;
        g[1] = f0 * 6.0 * x / rb * d * d;
        f0 * d
    }

    fn admissible(&self, p: &[f64]) -> bool {
        p[1] > 0.0 && p.iter().all(|v| v.is_finite())
    }
}

/// Weighted least-squares fit of a soft-core profile to pair-oscillation
/// frequencies. Returns `V0 = 2h·f_plateau` and `R_b` in lattice units.
pub fn fit_soft_core(data: &PairOscillationData) -> Result<SoftCoreFit> {
    data.validate()?;
    if data.points.len() < 3 {
        return Err(Error::invalid(format!(
            "soft-core fit needs at least 3 distinct separations, got {}",
            data.points.len()
        )));
    }
    let x: Vec<f64> = data.points.iter().map(|p| p.r_lat).collect();
    let y: Vec<f64> = data.points.iter().map(|p| p.freq_hz).collect();
    let s: Vec<f64> = data.points.iter().map(|p| p.err_hz).collect();

    let f_init = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let rb_init = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let fit = levenberg_marquardt(&SoftCoreModel, &x, &y, &s, &[f_init, rb_init], LmOptions::default())?;
    let c = &fit.covariance;
    Ok(SoftCoreFit {
        v0_hz: 2.0 * fit.params[0],
        rb_lat: fit.params[1],
        covariance: [[4.0 * c[0][0], 2.0 * c[0][1]], [2.0 * c[1][0], c[1][1]]],
        chi2: fit.chi2,
        dof: x.len() - 2,
        iterations: fit.iterations,
    })
}

/// Interaction phase per unit time for a soft-core pair: `V/(2ħ)` in rad/s.
pub fn phase_rate(v_hz: f64) -> f64 {
    0.5 * TWO_PI * v_hz
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn typical_beta_and_weak_potential() {
        let p = DressingParams::typical();
        assert!((p.beta() - 0.25).abs() < 1e-15);
        let v = weak_dressing_potential(&p).unwrap();
        // 0.25³ × 5.5 MHz
        assert!((v.v0_hz - 85_937.5).abs() < 1e-6, "{}", v.v0_hz);
        // (9.1e9 / 2.2e7)^(1/6) µm
        let rb_um = (9.1e9f64 / 2.2e7).powf(1.0 / 6.0);
        assert!((v.r_b * 1e6 - rb_um).abs() < 1e-12);
        assert!((v.r_b * 1e6 - 2.73).abs() < 0.01);
        assert!((v.r_b_lattice(LATTICE_CONSTANT) - 4.75).abs() < 0.01);
    }

    #[test]
    fn zero_detuning_rejected() {
        let mut p = DressingParams::typical();
        p.delta = 0.0;
        assert!(weak_dressing_potential(&p).is_err());
    }

    #[test]
    fn soft_core_values() {
        let v = SoftCorePotential::new(46.4e3, 4.9 * LATTICE_CONSTANT).unwrap();
        assert_eq!(v.at(0.0), 46.4e3);
        assert!((v.at(v.r_b) - 23.2e3).abs() < 1e-9);
        let far = v.at(10.0 * LATTICE_CONSTANT);
        let expect = 46.4e3 / (1.0 + (10.0f64 / 4.9).powi(6));
        assert!((far - expect).abs() < 1e-9);
        assert!((far - 640.0).abs() < 10.0, "{far}");
    }

    #[test]
    fn detuning_scaling() {
        let p = DressingParams::typical();
        let mut q = p;
        q.delta *= 2.0;
        let (a, b) = (weak_dressing_potential(&p).unwrap(), weak_dressing_potential(&q).unwrap());
        assert!((a.v0_hz / b.v0_hz - 8.0).abs() < 1e-12);
        assert!((b.r_b / a.r_b - 2f64.powf(-1.0 / 6.0)).abs() < 1e-14);
    }

    #[test]
    fn noiseless_fit_is_a_fixed_point() {
        let truth = SoftCorePotential::fitted_reference();
        let data = PairOscillationData::synthetic(&truth, LATTICE_CONSTANT, &[1.0, 2.0, 3.0, 4.0, 5.0], 0.01).unwrap();
        let fit = fit_soft_core(&data).unwrap();
        assert!((fit.v0_hz / 46.4e3 - 1.0).abs() < 1e-6, "{}", fit.v0_hz);
        assert!((fit.rb_lat / 4.9 - 1.0).abs() < 1e-6, "{}", fit.rb_lat);
        assert!(fit.chi2 < 1e-10);
        assert!(fit.v0_err() > 0.0 && fit.rb_err() > 0.0);
    }

    #[test]
    fn fit_rejects_bad_data() {
        let two = PairOscillationData::new(vec![
            PairPoint { r_lat: 1.0, freq_hz: 1.0, err_hz: 0.1 },
            PairPoint { r_lat: 2.0, freq_hz: 0.5, err_hz: 0.1 },
        ])
        .unwrap();
        assert!(matches!(fit_soft_core(&two), Err(Error::InvalidInput(_))));
        assert!(PairOscillationData::new(vec![
            PairPoint { r_lat: 1.0, freq_hz: 1.0, err_hz: 0.1 },
            PairPoint { r_lat: 1.0, freq_hz: 0.5, err_hz: 0.1 },
            PairPoint { r_lat: 1.0, freq_hz: 0.5, err_hz: 0.1 },
        ])
        .is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        let data = PairOscillationData::synthetic(&SoftCorePotential::fitted_reference(), LATTICE_CONSTANT, &[1.0, 2.0, 3.0], 0.01).unwrap();
        data.write_csv(&path).unwrap();
        let back = PairOscillationData::read_csv(&path).unwrap();
        assert_eq!(back, data);
    }

    proptest! {
        #[test]
        fn soft_core_is_decreasing_and_bounded(v0 in 1.0f64..1e6, rb in 0.5f64..10.0, r1 in 0.01f64..20.0, dr in 1e-3f64..5.0) {
            let v = SoftCorePotential::new(v0, rb).unwrap();
            let (a, b) = (v.at(r1), v.at(r1 + dr));
            prop_assert!(b < a);
            prop_assert!(a / v0 > 0.0 && a / v0 <= 1.0);
        }
    }
}

//! Projection-noise and squeezing figures of merit shared by the dynamics
//! engines and the analysis code.
//!
//! Conventions: `d_z = S_z^A/N − S_z^B/N` for two identical independent
//! ensembles of `N` atoms; the projection-noise variance of `d_z` is
//! `1/(2N)`. All decibel values use the power convention `10·log10(x)` for
//! variance-like ratios.

use serde::{Deserialize, Serialize};

use crate::optimize::grid_then_golden;

/// Projection-noise variance of the differential observable `d_z`.
pub fn qpn_variance(n: usize) -> f64 {
    1.0 / (2.0 * n as f64)
}

/// Standard quantum limit on the differential phase, `√(2/N)` rad.
pub fn sql_phase(n: usize) -> f64 {
    (2.0 / n as f64).sqrt()
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Wineland parameter from contrast and minimum variance ratio.
pub fn wineland(contrast: f64, var_ratio_min: f64) -> f64 {
    var_ratio_min / (contrast * contrast)
}

/// Variance ratio `σ_α²/σ_QPN²` as a function of the quadrature angle α.
///
/// Both dynamics engines produce a quadratic form in `(cos α, sin α)`, so the
/// curve is `offset + cos2·cos 2α + sin2·sin 2α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureCurve {
    pub offset: f64,
    pub cos2: f64,
    pub sin2: f64,
}

/// Number of coarse α nodes on `[0, π)` before golden-section refinement.
pub const ALPHA_GRID: usize = 181;

impl QuadratureCurve {
    /// Build from single-ensemble collective spin moments: variances along the
    /// two quadrature axes and their symmetrised covariance, for `n` atoms.
    pub fn from_moments(var1: f64, var2: f64, cov12: f64, n: usize) -> Self {
        let k = 4.0 / n as f64;
        QuadratureCurve {
            offset: k * 0.5 * (var1 + var2),
            cos2: k * 0.5 * (var1 - var2),
            sin2: k * cov12,
        }
    }

    pub fn at(&self, alpha: f64) -> f64 {
        let (s, c) = (2.0 * alpha).sin_cos();
        self.offset + self.cos2 * c + self.sin2 * s
    }

    /// Minimum over α ∈ [0, π): coarse grid, then golden section.
    pub fn minimize(&self) -> (f64, f64) {
        grid_then_golden(|a| self.at(a), 0.0, std::f64::consts::PI, ALPHA_GRID, true, 1e-12)
    }

    /// Closed-form minimum, used as a cross-check of [`Self::minimize`].
    pub fn analytic_min(&self) -> f64 {
        self.offset - self.cos2.hypot(self.sin2)
    }
}

/// Squeezing figures of merit for one ensemble after the spin-echo sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezingObservables {
    pub n_atoms: usize,
    pub contrast: f64,
    pub curve: QuadratureCurve,
    pub alpha_opt: f64,
    pub var_ratio_min: f64,
    pub xi_w_sq: f64,
}

impl SqueezingObservables {
    pub fn new(n_atoms: usize, contrast: f64, curve: QuadratureCurve) -> Self {
        let (alpha_opt, var_ratio_min) = curve.minimize();
        SqueezingObservables {
            n_atoms,
            contrast,
            curve,
            alpha_opt,
            var_ratio_min,
            xi_w_sq: wineland(contrast, var_ratio_min),
        }
    }

    pub fn variance_ratio(&self, alpha: f64) -> f64 {
        self.curve.at(alpha)
    }

    pub fn xi_db(&self) -> f64 {
        to_db(self.xi_w_sq)
    }
}

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default number of θ nodes for the periodic trapezoid rule.
pub const DEFAULT_THETA_NODES: usize = 720;

/// Two-ensemble tempered-binomial noise model.
///
/// For atom-laser phase θ the excitation probabilities are
/// `P_A = (C/2) cos θ + y₀` and `P_B = (C/2) cos(θ + φ) + y₀`, and each
/// ensemble's binomial mass function is raised to `1/ζ²` with
/// `ζ²(θ) = ζ₀² sin²θ + ζ₁² cos²θ` (evaluated at θ for A and θ + φ for B),
/// then renormalized. `ζ = (1, 1)` is the plain binomial model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseModel {
    pub phi: f64,
    pub contrast: f64,
    pub y0: f64,
    pub zeta0: f64,
    pub zeta1: f64,
    pub n_atoms: u32,
}

impl EllipseModel {
    /// Binomial (coherent-state) model.
    pub fn css(n_atoms: u32, phi: f64, contrast: f64, y0: f64) -> Self {
        EllipseModel { phi, contrast, y0, zeta0: 1.0, zeta1: 1.0, n_atoms }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::invalid("model needs at least one atom"));
        }
        if !self.phi.is_finite() {
            return Err(Error::invalid("phi must be finite"));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::invalid(format!("contrast {} outside [0, 1]", self.contrast)));
        }
        let h = 0.5 * self.contrast;
        if !(self.y0 >= h - 1e-12 && self.y0 <= 1.0 - h + 1e-12) {
            return Err(Error::invalid(format!("offset {} outside [C/2, 1 − C/2]", self.y0)));
        }
        if !(self.zeta0 > 0.0 && self.zeta1 > 0.0 && self.zeta0.is_finite() && self.zeta1.is_finite()) {
            return Err(Error::invalid("zeta parameters must be positive and finite"));
        }
        Ok(())
    }

    pub fn is_binomial(&self) -> bool {
        self.zeta0 == 1.0 && self.zeta1 == 1.0
    }

    pub fn zeta_sq(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        self.zeta0 * self.zeta0 * s * s + self.zeta1 * self.zeta1 * c * c
    }

    /// `(P_A, P_B)` at phase θ, clamped to `[0, 1]` against rounding.
    pub fn probabilities(&self, theta: f64) -> (f64, f64) {
        let h = 0.5 * self.contrast;
        ((h * theta.cos() + self.y0).clamp(0.0, 1.0), (h * (theta + self.phi).cos() + self.y0).clamp(0.0, 1.0))
    }
}

/// `ln C(n, k)` for `k = 0..=n`.
pub fn log_binomial_coefficients(n: u32) -> Vec<f64> {
    let n = n as usize;
    let mut lf = vec![0.0; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    (0..=n).map(|k| lf[n] - lf[k] - lf[n - k]).collect()
}

/// Normalized `[Binom(n, p)(k)]^exponent` over `k = 0..=n`, written into `out`.
/// At `p ∈ {0, 1}` the result is the point mass at `k = n p` for any exponent.
pub fn tempered_binomial_into(lnc: &[f64], p: f64, exponent: f64, out: &mut [f64]) {
    let n = lnc.len() - 1;
    if p <= 0.0 || p >= 1.0 {
        out.iter_mut().for_each(|x| *x = 0.0);
        out[if p <= 0.0 { 0 } else { n }] = 1.0;
        return;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut max = f64::NEG_INFINITY;
    for (k, o) in out.iter_mut().enumerate() {
        *o = exponent * (lnc[k] + k as f64 * lp + (n - k) as f64 * lq);
        max = max.max(*o);
    }
    let mut z = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        z += *o;
    }
    let inv = 1.0 / z;
    out.iter_mut().for_each(|o| *o *= inv);
}

pub fn tempered_binomial(n: u32, p: f64, exponent: f64) -> Vec<f64> {
    let lnc = log_binomial_coefficients(n);
    let mut out = vec![0.0; n as usize + 1];
    tempered_binomial_into(&lnc, p, exponent, &mut out);
    out
}

/// Joint mass function over `(k_A, k_B) ∈ {0..N}²`, row-major in `k_A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf2 {
    pub n_atoms: u32,
    pub mass: Vec<f64>,
}

impl Pmf2 {
    pub fn side(&self) -> usize {
        self.n_atoms as usize + 1
    }

    pub fn at(&self, k_a: usize, k_b: usize) -> f64 {
        self.mass[k_a * self.side() + k_b]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Marginal over `k_A`.
    pub fn marginal_a(&self) -> Vec<f64> {
        self.mass.chunks(self.side()).map(|r| r.iter().sum()).collect()
    }
}

/// Per-ensemble tempered mass functions at one θ.
pub(crate) fn theta_factors(m: &EllipseModel, lnc: &[f64], theta: f64, a: &mut [f64], b: &mut [f64]) {
    let (pa, pb) = m.probabilities(theta);
    tempered_binomial_into(lnc, pa, 1.0 / m.zeta_sq(theta), a);
    tempered_binomial_into(lnc, pb, 1.0 / m.zeta_sq(theta + m.phi), b);
}

/// Mass function at fixed atom-laser phase θ.
pub fn pmf_theta(m: &EllipseModel, theta: f64) -> Result<Pmf2> {
    m.validate()?;
    let lnc = log_binomial_coefficients(m.n_atoms);
    let s = lnc.len();
    let (mut a, mut b) = (vec![0.0; s], vec![0.0; s]);
    theta_factors(m, &lnc, theta, &mut a, &mut b);
    let mass = a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect();
    Ok(Pmf2 { n_atoms: m.n_atoms, mass })
}

/// Quadrature nodes `θ_j = 2πj/M` of the periodic trapezoid rule.
pub fn theta_nodes(m: usize) -> Vec<f64> {
    (0..m).map(|j| 2.0 * PI * j as f64 / m as f64).collect()
}

fn marginal_with(m: &EllipseModel, nodes: usize) -> Pmf2 {
    let lnc = log_binomial_coefficients(m.n_atoms);
    let s = lnc.len();
    let mut mass = vec![0.0; s * s];
    let (mut a, mut b) = (vec![0.0; s], vec![0.0; s]);
    for th in theta_nodes(nodes) {
        theta_factors(m, &lnc, th, &mut a, &mut b);
        for (row, &x) in mass.chunks_mut(s).zip(&a) {
            for (c, &y) in row.iter_mut().zip(&b) {
                *c += x * y;
            }
        }
    }
    let inv = 1.0 / mass.iter().sum::<f64>();
    mass.iter_mut().for_each(|x| *x *= inv);
    Pmf2 { n_atoms: m.n_atoms, mass }
}

/// θ-averaged mass function with `nodes` trapezoid nodes. Fails if doubling
/// the node count changes any entry by more than `1e-10`.
pub fn pmf_marginal(m: &EllipseModel, nodes: usize) -> Result<Pmf2> {
    m.validate()?;
    if nodes < 4 {
        return Err(Error::invalid("need at least 4 quadrature nodes"));
    }
    let f = marginal_with(m, nodes);
    let g = marginal_with(m, 2 * nodes);
    let dev = f.mass.iter().zip(&g.mass).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if dev > 1e-10 {
        return Err(Error::Numerical(format!("θ quadrature with {nodes} nodes not converged (max change {dev:.2e})")));
    }
    Ok(f)
}

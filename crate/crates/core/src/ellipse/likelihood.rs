use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::{log_binomial_coefficients, theta_factors, theta_nodes, EllipseModel};
use crate::optimize::{golden_section, grid_then_golden, nelder_mead, SimplexOptions};
use crate::record::MeasurementRecord;
use crate::{Error, Result};

/// Shots grouped by outcome cell `(k_A, k_B)`. Cells are sorted, so sums over
/// them have a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct CellHistogram {
    pub n_atoms: u32,
    pub cells: Vec<(u32, u32)>,
    pub counts: Vec<f64>,
    /// Cell index of every shot, in record order.
    pub shot_cell: Vec<usize>,
}

impl CellHistogram {
    pub fn from_record(r: &MeasurementRecord) -> Result<Self> {
        let n = r
            .uniform_atom_number()
            .ok_or_else(|| Error::invalid("ellipse fitting needs a nonempty record with one atom number for all shots"))?;
        Self::from_counts(n, r.shots.iter().map(|s| (s.k_a(), s.k_b())))
    }

    pub fn from_counts(n_atoms: u32, shots: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let shots: Vec<(u32, u32)> = shots.into_iter().collect();
        if shots.iter().any(|&(a, b)| a > n_atoms || b > n_atoms) {
            return Err(Error::invalid("excitation count exceeds atom number"));
        }
        let mut map = BTreeMap::new();
        for &c in &shots {
            *map.entry(c).or_insert(0.0) += 1.0;
        }
        let cells: Vec<(u32, u32)> = map.keys().copied().collect();
        let counts = map.values().copied().collect();
        let shot_cell = shots.iter().map(|c| cells.binary_search(c).expect("cell present")).collect();
        Ok(CellHistogram { n_atoms, cells, counts, shot_cell })
    }

    pub fn n_shots(&self) -> usize {
        self.shot_cell.len()
    }

    /// Histogram of the shots at `idx` (with repetition).
    pub fn resample(&self, idx: &[usize]) -> CellHistogram {
        let mut counts = vec![0.0; self.cells.len()];
        for &i in idx {
            counts[self.shot_cell[i]] += 1.0;
        }
        let shot_cell = idx.iter().map(|&i| self.shot_cell[i]).collect();
        CellHistogram { n_atoms: self.n_atoms, cells: self.cells.clone(), counts, shot_cell }
    }
}

/// `ln f(k_A, k_B)` of the θ-averaged model for every cell of `h`.
pub fn cell_log_pmf(m: &EllipseModel, h: &CellHistogram, nodes: usize) -> Vec<f64> {
    let lnc = log_binomial_coefficients(m.n_atoms);
    let s = lnc.len();
    // transposed tables: index k·M + j
    let mut at = vec![0.0; s * nodes];
    let mut bt = vec![0.0; s * nodes];
    let (mut a, mut b) = (vec![0.0; s], vec![0.0; s]);
    for (j, th) in theta_nodes(nodes).into_iter().enumerate() {
        theta_factors(m, &lnc, th, &mut a, &mut b);
        for k in 0..s {
            at[k * nodes + j] = a[k];
            bt[k * nodes + j] = b[k];
        }
    }
    let inv = 1.0 / nodes as f64;
    h.cells
        .iter()
        .map(|&(ka, kb)| {
            let ra = &at[ka as usize * nodes..][..nodes];
            let rb = &bt[kb as usize * nodes..][..nodes];
            (ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>() * inv).ln()
        })
        .collect()
}

/// `Σ_shots ln f`. Returns `−∞` if any observed cell has zero probability.
pub fn log_likelihood(m: &EllipseModel, h: &CellHistogram, nodes: usize) -> f64 {
    if h.n_atoms != m.n_atoms {
        return f64::NAN;
    }
    let lf = cell_log_pmf(m, h, nodes);
    lf.iter().zip(&h.counts).filter(|(_, &c)| c > 0.0).map(|(l, c)| l * c).sum()
}

pub const PARAM_NAMES: [&str; 5] = ["phi", "contrast", "y0", "zeta0", "zeta1"];
const ZETA_BOUNDS: (f64, f64) = (0.05, 20.0);

/// Which of `(φ, C, y₀, ζ₀, ζ₁)` are fitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeMask {
    pub phi: bool,
    pub contrast: bool,
    pub y0: bool,
    pub zeta0: bool,
    pub zeta1: bool,
}

impl Default for FreeMask {
    fn default() -> Self {
        FreeMask { phi: true, contrast: true, y0: true, zeta0: true, zeta1: true }
    }
}

impl FreeMask {
    /// Binomial model: ζ held at (1, 1).
    pub fn css() -> Self {
        FreeMask { zeta0: false, zeta1: false, ..Default::default() }
    }

    pub fn phi_only() -> Self {
        FreeMask { phi: true, contrast: false, y0: false, zeta0: false, zeta1: false }
    }

    fn as_array(&self) -> [bool; 5] {
        [self.phi, self.contrast, self.y0, self.zeta0, self.zeta1]
    }
}

fn to_vec(m: &EllipseModel) -> [f64; 5] {
    [m.phi, m.contrast, m.y0, m.zeta0, m.zeta1]
}

fn from_vec(p: &[f64; 5], n: u32) -> EllipseModel {
    EllipseModel { phi: p[0], contrast: p[1], y0: p[2], zeta0: p[3], zeta1: p[4], n_atoms: n }
}

fn bounds(p: &[f64; 5]) -> [(f64, f64); 5] {
    let h = 0.5 * p[1];
    [(0.0, PI), (0.0, 1.0), (h, 1.0 - h), ZETA_BOUNDS, ZETA_BOUNDS]
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub nodes: usize,
    pub starts: usize,
    pub coordinate_sweeps: usize,
    pub simplex: SimplexOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            nodes: super::model::DEFAULT_THETA_NODES,
            starts: 5,
            coordinate_sweeps: 2,
            simplex: SimplexOptions { max_evals: 3000, ftol: 1e-10, xtol: 1e-7 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodResult {
    pub phi_hat: f64,
    pub model: EllipseModel,
    pub log_likelihood: f64,
    /// Curvature-based standard errors in `PARAM_NAMES` order (NaN for fixed
    /// or when the Hessian is degenerate).
    pub std_err: [f64; 5],
    /// Standard deviation of each parameter over calibration resamples, when
    /// computed by the pipeline.
    pub bootstrap_spread: Option<[f64; 5]>,
    /// Names of free parameters that ended on a bound.
    pub boundary: Vec<String>,
    pub degenerate: bool,
    pub evals: usize,
}

struct Objective<'a> {
    h: &'a CellHistogram,
    base: [f64; 5],
    free: Vec<usize>,
    nodes: usize,
    evals: usize,
}

impl Objective<'_> {
    fn full(&self, x: &[f64]) -> [f64; 5] {
        let mut p = self.base;
        for (&i, &v) in self.free.iter().zip(x) {
            p[i] = v;
        }
        p
    }

    /// Per-shot negative log-likelihood with a weak log barrier on the bounds.
    fn value(&mut self, x: &[f64]) -> f64 {
        let p = self.full(x);
        let b = bounds(&p);
        let mut barrier = 0.0;
        for &i in &self.free {
            let (lo, hi) = b[i];
            if !(p[i] >= lo && p[i] <= hi) {
                return f64::INFINITY;
            }
            barrier -= 1e-9 * ((p[i] - lo).max(1e-300).ln() + (hi - p[i]).max(1e-300).ln());
        }
        if !(p[2] >= b[2].0 && p[2] <= b[2].1) || !(0.0..=1.0).contains(&p[1]) {
            return f64::INFINITY;
        }
        self.evals += 1;
        let ll = log_likelihood(&from_vec(&p, self.h.n_atoms), self.h, self.nodes);
        if !ll.is_finite() {
            return f64::INFINITY;
        }
        -ll / self.h.n_shots() as f64 + barrier
    }
}

const SCALES: [f64; 5] = [0.2, 0.05, 0.02, 0.2, 0.2];

/// Maximum-likelihood fit of the free parameters, starting from `init`.
///
/// Multi-start Nelder–Mead (starts spread over φ when φ is free), then
/// coordinate-wise golden-section refinement.
pub fn fit_mle(h: &CellHistogram, init: &EllipseModel, free: FreeMask, opts: FitOptions) -> Result<LikelihoodResult> {
    init.validate()?;
    if h.n_atoms != init.n_atoms {
        return Err(Error::invalid("record and model atom numbers differ"));
    }
    let mask = free.as_array();
    let idx: Vec<usize> = (0..5).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::invalid("no free parameters"));
    }
    let mut base = to_vec(init);
    base[0] = base[0].rem_euclid(2.0 * PI);
    if base[0] > PI {
        base[0] = 2.0 * PI - base[0];
    }
    // keep the start strictly inside the bounds
    let b0 = bounds(&base);
    for &i in &idx {
        let (lo, hi) = b0[i];
        let pad = 1e-3 * (hi - lo).max(1e-3);
        base[i] = base[i].clamp(lo + pad, hi - pad);
    }
    let mut obj = Objective { h, base, free: idx.clone(), nodes: opts.nodes, evals: 0 };
    let x0: Vec<f64> = idx.iter().map(|&i| base[i]).collect();
    let scale: Vec<f64> = idx.iter().map(|&i| SCALES[i]).collect();

    let mut starts = vec![x0.clone()];
    if free.phi && opts.starts > 1 {
        starts = (0..opts.starts)
            .map(|s| {
                let mut x = x0.clone();
                x[0] = PI * (2 * s + 1) as f64 / (2 * opts.starts) as f64;
                x
            })
            .collect();
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let r = nelder_mead(|x| obj.value(x), s, &scale, opts.simplex);
        if best.as_ref().is_none_or(|b| r.value < b.1) {
            best = Some((r.x, r.value));
        }
    }
    let (mut x, mut fx) = best.expect("at least one start");
    if !fx.is_finite() {
        return Err(Error::Numerical("likelihood is zero at every start".into()));
    }
    for _ in 0..opts.coordinate_sweeps {
        for d in 0..x.len() {
            let p = obj.full(&x);
            let (lo, hi) = bounds(&p)[idx[d]];
            let w = 0.05 * SCALES[idx[d]];
            let (a, b) = ((x[d] - w).max(lo), (x[d] + w).min(hi));
            let mut y = x.clone();
            let (xd, v) = golden_section(
                |t| {
                    y[d] = t;
                    obj.value(&y)
                },
                a,
                b,
                1e-9,
            );
            if v < fx {
                x[d] = xd;
                fx = v;
            }
        }
    }
    let p = obj.full(&x);
    let model = from_vec(&p, h.n_atoms);
    let b = bounds(&p);
    let boundary = idx
        .iter()
        .filter(|&&i| {
            let tol = 1e-4 * SCALES[i];
            (p[i] - b[i].0).abs() < tol || (b[i].1 - p[i]).abs() < tol
        })
        .map(|&i| PARAM_NAMES[i].to_string())
        .collect();
    let (std_err, degenerate) = curvature_errors(h, &p, &idx, opts.nodes);
    Ok(LikelihoodResult {
        phi_hat: p[0],
        model,
        log_likelihood: log_likelihood(&model, h, opts.nodes),
        std_err,
        bootstrap_spread: None,
        boundary,
        degenerate: degenerate || h.n_shots() < 2,
        evals: obj.evals,
    })
}

/// Standard errors from the finite-difference Hessian of `−ln L`; flags a
/// Hessian that is not positive definite or is numerically singular.
fn curvature_errors(h: &CellHistogram, p: &[f64; 5], idx: &[usize], nodes: usize) -> ([f64; 5], bool) {
    let k = idx.len();
    let f = |q: &[f64; 5]| {
        let ll = log_likelihood(&from_vec(q, h.n_atoms), h, nodes);
        if ll.is_finite() {
            -ll
        } else {
            f64::NAN
        }
    };
    let step: Vec<f64> = idx.iter().map(|&i| 1e-4 * SCALES[i] * 10.0).collect();
    let f0 = f(p);
    let mut hess = DMatrix::zeros(k, k);
    let shift = |d: &[(usize, f64)]| {
        let mut q = *p;
        for &(a, s) in d {
            q[idx[a]] += s;
        }
        q
    };
    for a in 0..k {
        let (fp, fm) = (f(&shift(&[(a, step[a])])), f(&shift(&[(a, -step[a])])));
        hess[(a, a)] = (fp - 2.0 * f0 + fm) / (step[a] * step[a]);
        for b in 0..a {
            let fpp = f(&shift(&[(a, step[a]), (b, step[b])]));
            let fpm = f(&shift(&[(a, step[a]), (b, -step[b])]));
            let fmp = f(&shift(&[(a, -step[a]), (b, step[b])]));
            let fmm = f(&shift(&[(a, -step[a]), (b, -step[b])]));
            let v = (fpp - fpm - fmp + fmm) / (4.0 * step[a] * step[b]);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    let mut err = [f64::NAN; 5];
    if hess.iter().any(|x| !x.is_finite()) {
        return (err, true);
    }
    let eig = nalgebra::SymmetricEigen::new(hess.clone());
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e.abs())));
    if lo <= 1e-9 * hi {
        return (err, true);
    }
    let Some(cov) = hess.try_inverse() else {
        return (err, true);
    };
    for (a, &i) in idx.iter().enumerate() {
        err[i] = cov[(a, a)].sqrt();
    }
    (err, false)
}

/// Maximum-likelihood φ ∈ [0, π] with the secondary parameters held fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiFit {
    pub phi: f64,
    pub log_likelihood: f64,
    /// Finite-difference score `∂ ln L/∂φ` at the optimum.
    pub score: f64,
    /// Finite-difference curvature `∂² ln L/∂φ²` at the optimum.
    pub curvature: f64,
}

/// Step of the central differences in φ.
pub const PHI_STEP: f64 = 1e-4;

/// Per-cell `(ln f(φ−h), ln f(φ), ln f(φ+h))`.
pub(crate) fn cell_log_pmf_stencil(m: &EllipseModel, h: &CellHistogram, phi: f64, nodes: usize) -> [Vec<f64>; 3] {
    let at = |p: f64| cell_log_pmf(&EllipseModel { phi: p, ..*m }, h, nodes);
    [at(phi - PHI_STEP), at(phi), at(phi + PHI_STEP)]
}

fn weighted(c: &[f64], v: &[f64]) -> f64 {
    c.iter().zip(v).filter(|(&c, _)| c > 0.0).map(|(c, v)| c * v).sum()
}

/// Fit φ alone: grid plus golden section, then Newton polishing on the
/// finite-difference score so that the score vanishes to rounding.
pub fn fit_phi(m: &EllipseModel, h: &CellHistogram, nodes: usize) -> Result<PhiFit> {
    m.validate()?;
    if h.n_atoms != m.n_atoms {
        return Err(Error::invalid("record and model atom numbers differ"));
    }
    let nll = |p: f64| {
        let v = -log_likelihood(&EllipseModel { phi: p, ..*m }, h, nodes);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (mut phi, _) = grid_then_golden(nll, 0.0, PI, 48, false, 1e-7);
    let (mut score, mut curv, mut ll) = (0.0, 0.0, 0.0);
    for _ in 0..8 {
        let [lm, l0, lp] = cell_log_pmf_stencil(m, h, phi, nodes);
        let c = &h.counts;
        ll = weighted(c, &l0);
        score = (weighted(c, &lp) - weighted(c, &lm)) / (2.0 * PHI_STEP);
        curv = (weighted(c, &lp) - 2.0 * ll + weighted(c, &lm)) / (PHI_STEP * PHI_STEP);
        if !(curv < 0.0) {
            break;
        }
        let next = (phi - score / curv).clamp(0.0, PI);
        if (next - phi).abs() < 1e-15 {
            break;
        }
        phi = next;
    }
    if !ll.is_finite() {
        return Err(Error::Numerical("likelihood vanishes at the φ optimum".into()));
    }
    Ok(PhiFit { phi, log_likelihood: ll, score, curvature: curv })
}

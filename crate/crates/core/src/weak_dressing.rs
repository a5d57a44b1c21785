//! Closed-form Ising analytics for the spin-echo sequence with arbitrary
//! finite-range couplings.
//!
//! After the echo the ensemble has evolved under `Σ_{i<j} (φ_ij/2) σ_z^i σ_z^j`
//! from a coherent state along +x. The mean spin stays along +x, and the
//! quadrature at angle α is `σ_α = cos α σ_z + sin α σ_y`. Single-spin
//! expectations `⟨σ_α^i⟩` vanish, so the collective variance is
//! `N/4 + Σ_{i≠j} g²_ij(α)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{ArrayGeometry, SubarrayLayout};
use crate::metrology::{to_db, QuadratureCurve, SqueezingObservables};
use crate::optimize::golden_section;
use crate::potentials::SoftCorePotential;
use crate::{Error, Exec, Result};

/// Symmetric pair energies `V_ij` (h×Hz) with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    v: Vec<f64>,
}

impl CouplingMatrix {
    /// Row-major `n × n` matrix; must be symmetric with zero diagonal.
    pub fn new(n: usize, v: Vec<f64>) -> Result<Self> {
        if v.len() != n * n {
            return Err(Error::invalid(format!("coupling matrix needs {} entries, got {}", n * n, v.len())));
        }
        for i in 0..n {
            if v[i * n + i] != 0.0 {
                return Err(Error::invalid("coupling matrix diagonal must be zero"));
            }
            for j in 0..i {
                let (a, b) = (v[i * n + j], v[j * n + i]);
                if !a.is_finite() || a != b {
                    return Err(Error::invalid(format!("coupling matrix not symmetric/finite at ({i},{j})")));
                }
            }
        }
        Ok(CouplingMatrix { n, v })
    }

    /// All pairs coupled with the same energy.
    pub fn uniform(n: usize, v_hz: f64) -> Self {
        let mut v = vec![v_hz; n * n];
        for i in 0..n {
            v[i * n + i] = 0.0;
        }
        CouplingMatrix { n, v }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }
}

/// Soft-core couplings within each subarray; zero across subarrays.
pub fn couplings_from_potential(g: &ArrayGeometry, v: &SoftCorePotential) -> CouplingMatrix {
    let n = g.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            if g.same_subarray(i, j) {
                let e = v.at(g.distance(i, j));
                m[i * n + j] = e;
                m[j * n + i] = e;
            }
        }
    }
    CouplingMatrix { n, v: m }
}

/// Pair phases `φ_ij = V_ij t / (2ħ) = π V_ij[Hz] t`.
#[derive(Clone, Debug)]
pub struct InteractionPhases {
    n: usize,
    phi: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    t_int: Option<f64>,
}

impl InteractionPhases {
    pub fn new(c: &CouplingMatrix, t_int: f64) -> Self {
        let phi = c.v.iter().map(|v| std::f64::consts::PI * v * t_int).collect();
        let mut p = Self::from_raw(c.n, phi);
        p.t_int = Some(t_int);
        p
    }

    /// Arbitrary symmetric phase matrix (row-major, zero diagonal).
    pub fn from_phases(n: usize, phi: Vec<f64>) -> Result<Self> {
        CouplingMatrix::new(n, phi.clone())?;
        Ok(Self::from_raw(n, phi))
    }

    fn from_raw(n: usize, phi: Vec<f64>) -> Self {
        let cos = phi.iter().map(|p| p.cos()).collect();
        let sin = phi.iter().map(|p| p.sin()).collect();
        InteractionPhases { n, phi, cos, sin, t_int: None }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_int(&self) -> Option<f64> {
        self.t_int
    }

    pub fn phi(&self, i: usize, j: usize) -> f64 {
        self.phi[i * self.n + j]
    }

    #[inline]
    fn c(&self, i: usize, j: usize) -> f64 {
        self.cos[i * self.n + j]
    }

    #[inline]
    fn s(&self, i: usize, j: usize) -> f64 {
        self.sin[i * self.n + j]
    }

    /// `(A_ij, B_ij)` with `g²_ij(α) = A sin²α + B sin α cos α`.
    fn pair_terms(&self, i: usize, j: usize) -> (f64, f64) {
        let (mut pm, mut pp, mut ci, mut cj) = (0.5, 0.5, 1.0, 1.0);
        for k in 0..self.n {
            if k == i || k == j {
                continue;
            }
            let (cki, ckj, ski, skj) = (self.c(k, i), self.c(k, j), self.s(k, i), self.s(k, j));
            pm *= cki * ckj + ski * skj;
            pp *= cki * ckj - ski * skj;
            ci *= cki;
            cj *= ckj;
        }
        (0.25 * (pm - pp), 0.25 * self.s(i, j) * (ci + cj))
    }
}

/// Connected two-spin correlator `g²_ij(α) = ⟨σ_α^i σ_α^j⟩/4` for `i ≠ j`.
pub fn g2_correlator(ph: &InteractionPhases, alpha: f64, i: usize, j: usize) -> f64 {
    assert!(i != j && i < ph.n && j < ph.n, "g2 needs two distinct sites");
    let (a, b) = ph.pair_terms(i, j);
    let (s, c) = alpha.sin_cos();
    a * s * s + b * s * c
}

/// Per-site coherence `⟨σ_x^i⟩ = ∏_{k≠i} cos φ_ik`.
pub fn site_coherence(ph: &InteractionPhases) -> Vec<f64> {
    (0..ph.n)
        .map(|i| (0..ph.n).filter(|&k| k != i).map(|k| ph.c(i, k)).product())
        .collect()
}

/// Mean single-spin coherence, i.e. the Bloch-vector length `2|⟨S⟩|/N`.
pub fn contrast(ph: &InteractionPhases) -> f64 {
    if ph.n == 0 {
        return 0.0;
    }
    site_coherence(ph).iter().sum::<f64>() / ph.n as f64
}

/// Per-site `⟨σ_α^i⟩` in the quadrature plane; identically zero for Ising
/// evolution of a state polarized along x.
pub fn quadrature_expectations(ph: &InteractionPhases, _alpha: f64) -> Vec<f64> {
    vec![0.0; ph.n]
}

/// Variance ratio as a quadratic form in α, summed over all ordered pairs.
pub fn quadrature_curve(ph: &InteractionPhases) -> QuadratureCurve {
    let n = ph.n;
    let (mut a_sum, mut b_sum) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..i {
            let (a, b) = ph.pair_terms(i, j);
            a_sum += 2.0 * a;
            b_sum += 2.0 * b;
        }
    }
    let k = 4.0 / n as f64;
    QuadratureCurve { offset: 1.0 + 0.5 * k * a_sum, cos2: -0.5 * k * a_sum, sin2: 0.5 * k * b_sum }
}

/// `Var[d_z]/σ²_QPN = 4 Var[S_α]/N` for two identical independent ensembles.
pub fn variance_ratio(ph: &InteractionPhases, alpha: f64, n_per_ensemble: usize) -> Result<f64> {
    if n_per_ensemble != ph.n {
        return Err(Error::invalid(format!("phases describe {} atoms, not {n_per_ensemble}", ph.n)));
    }
    let mut var = 0.0;
    let mean = quadrature_expectations(ph, alpha);
    for m in &mean {
        var += 0.25 * (1.0 - m * m);
    }
    for i in 0..ph.n {
        for j in 0..i {
            var += 2.0 * g2_correlator(ph, alpha, i, j);
        }
    }
    Ok(4.0 * var / ph.n as f64)
}

/// Optimal-quadrature squeezing figures of merit.
pub fn wineland(ph: &InteractionPhases, n: usize) -> Result<SqueezingObservables> {
    if n < 2 || n != ph.n {
        return Err(Error::invalid(format!("Wineland parameter needs N ≥ 2 matching the phases (N={n}, phases for {})", ph.n)));
    }
    Ok(SqueezingObservables::new(n, contrast(ph), quadrature_curve(ph)))
}

/// Average `g²(α)` over site pairs grouped by signed lattice displacement
/// `(rx, ry) = site_j − site_i`.
pub fn g2_by_displacement(g: &ArrayGeometry, ph: &InteractionPhases, alpha: f64) -> Vec<G2Cell> {
    let mut acc: BTreeMap<(i64, i64), (f64, usize)> = BTreeMap::new();
    for i in 0..ph.n {
        for j in 0..ph.n {
            if i == j || !g.same_subarray(i, j) {
                continue;
            }
            let d = g.displacement(i, j);
            let e = acc.entry(d).or_insert((0.0, 0));
            e.0 += g2_correlator(ph, alpha, i, j);
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|((rx, ry), (s, c))| G2Cell { rx, ry, g2: s / c as f64, pairs: c })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Cell {
    pub rx: i64,
    pub ry: i64,
    pub g2: f64,
    pub pairs: usize,
}

pub fn write_g2_csv(cells: &[G2Cell], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// One optimum from [`scan_xi_vs_n`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub rows: u32,
    pub cols: u32,
    pub t_int_us: f64,
    pub alpha_opt_deg: f64,
    pub contrast: f64,
    pub var_ratio_min: f64,
    pub xi_w_sq: f64,
    pub xi_db: f64,
    /// False when the optimum sits on the first or last grid node.
    pub interior: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    /// Site spacing within a block (lattice units).
    pub spacing: u32,
    pub lattice_constant: f64,
    /// Golden-section refinement in t around interior grid minima.
    pub refine: bool,
    pub exec: Exec,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { spacing: 2, lattice_constant: crate::constants::LATTICE_CONSTANT, refine: true, exec: Exec::default() }
    }
}

/// Block sizes `1×2, 1×3, 2×2, …, 5×5` followed by `5×m` for `m = 6..=20`.
pub fn default_scan_sizes() -> Vec<(u32, u32)> {
    let mut v = vec![(1, 2), (1, 3), (2, 2), (2, 3), (3, 3), (3, 4), (4, 4), (4, 5), (5, 5)];
    v.extend((6..=20).map(|m| (5, m)));
    v
}

/// Geometric grid of interaction times (s).
pub fn log_time_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let r = (t_max / t_min).ln() / (n - 1) as f64;
    (0..n).map(|i| t_min * (r * i as f64).exp()).collect()
}

fn xi_at(c: &CouplingMatrix, t: f64) -> SqueezingObservables {
    let ph = InteractionPhases::new(c, t);
    SqueezingObservables::new(c.n, contrast(&ph), quadrature_curve(&ph))
}

/// Minimize ξ_W² over `t_grid` and α for each block size.
pub fn scan_xi_vs_n(sizes: &[(u32, u32)], v: &SoftCorePotential, t_grid: &[f64], opts: ScanOptions) -> Result<Vec<ScanRow>> {
    if sizes.is_empty() || t_grid.is_empty() {
        return Err(Error::invalid("scan needs at least one size and one interaction time"));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("interaction times must be finite and non-negative"));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &(r, cols) in sizes {
        let layout = SubarrayLayout::single(r, cols, opts.spacing);
        let g = ArrayGeometry::build_subarrays_unchecked_gap(layout, opts.lattice_constant)?;
        let c = couplings_from_potential(&g, v);
        let cells = opts.exec.map_slice(t_grid, |&t| xi_at(&c, t));
        let (best, _) = cells
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.xi_w_sq.total_cmp(&b.1.xi_w_sq))
            .expect("nonempty grid");
        let interior = best > 0 && best + 1 < t_grid.len();
        let (mut t_opt, mut obs) = (t_grid[best], cells[best].clone());
        if opts.refine && interior {
            let (lo, hi) = (t_grid[best - 1], t_grid[best + 1]);
            let (t, xi) = golden_section(|t| xi_at(&c, t).xi_w_sq, lo, hi, 1e-6 * (hi - lo));
            if xi < obs.xi_w_sq {
                t_opt = t;
                obs = xi_at(&c, t);
            }
        }
        rows.push(ScanRow {
            n: g.len(),
            rows: r,
            cols,
            t_int_us: t_opt * 1e6,
            alpha_opt_deg: obs.alpha_opt.to_degrees(),
            contrast: obs.contrast,
            var_ratio_min: obs.var_ratio_min,
            xi_w_sq: obs.xi_w_sq,
            xi_db: to_db(obs.xi_w_sq),
            interior,
        });
    }
    Ok(rows)
}

/// Whether the optimal ξ_W² strictly decreases with N along the scan.
pub fn is_monotone_decreasing(rows: &[ScanRow]) -> bool {
    let mut sorted: Vec<&ScanRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.n);
    sorted.windows(2).all(|w| w[1].xi_w_sq < w[0].xi_w_sq || w[1].n == w[0].n)
}

pub fn write_scan_csv(rows: &[ScanRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One-axis-twisting optimum of the Wineland parameter for `N` spins with
/// uniform pair phase, minimized over the twisting strength.
pub fn oat_optimal_wineland(n: usize) -> (f64, f64) {
    let nf = n as f64;
    let xi = |mu: f64| {
        let a = 1.0 - mu.cos().powf(nf - 2.0);
        let b = 4.0 * (0.5 * mu).sin() * (0.5 * mu).cos().powf(nf - 2.0);
        let vmin = 1.0 + 0.25 * (nf - 1.0) * (a - a.hypot(b));
        let c = (0.5 * mu).cos().powf(nf - 1.0);
        vmin / (c * c)
    };
    let hi = 4.0 * nf.powf(-0.5);
    crate::optimize::grid_then_golden(xi, 1e-6, hi.min(1.5), 2000, false, 1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::LATTICE_CONSTANT;
    use std::f64::consts::PI;

    fn random_phases(n: usize, seed: u64) -> InteractionPhases {
        random_phases_in(n, seed, -1.5, 1.5)
    }

    fn random_phases_in(n: usize, seed: u64, lo: f64, hi: f64) -> InteractionPhases {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut phi = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let p = rng.random_range(lo..hi);
                phi[i * n + j] = p;
                phi[j * n + i] = p;
            }
        }
        InteractionPhases::from_phases(n, phi).unwrap()
    }

    #[test]
    fn g2_examples() {
        let ph = random_phases(5, 1);
        assert_eq!(g2_correlator(&ph, 0.0, 0, 3), 0.0);
        let two = InteractionPhases::from_phases(2, vec![0.0, PI / 2.0, PI / 2.0, 0.0]).unwrap();
        assert!((g2_correlator(&two, PI / 4.0, 0, 1) - 0.25).abs() < 1e-15);
        assert!(contrast(&two).abs() < 1e-15);
    }

    #[test]
    fn couplings_examples() {
        let v = SoftCorePotential::new(46.4e3, 4.9 * LATTICE_CONSTANT).unwrap();
        let g = ArrayGeometry::build_subarrays(SubarrayLayout::new(4, 4, 2, 2, 2, 12)).unwrap();
        let c = couplings_from_potential(&g, &v);
        let nn = 46.4e3 / (1.0 + (2.0f64 / 4.9).powi(6));
        assert!((c.get(0, 1) - nn).abs() < 1e-9);
        assert!((nn - 46.2e3).abs() < 0.05e3);
        assert_eq!(c.get(0, 16), 0.0);

        let rb = SoftCorePotential::new(1.0, 2.0 * LATTICE_CONSTANT).unwrap();
        let pair = ArrayGeometry::build_subarrays(SubarrayLayout::single(1, 2, 2)).unwrap();
        assert!((couplings_from_potential(&pair, &rb).get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn curve_matches_pairwise_sum() {
        let ph = random_phases(7, 3);
        let curve = quadrature_curve(&ph);
        for k in 0..20 {
            let a = k as f64 * 0.17;
            let direct = variance_ratio(&ph, a, 7).unwrap();
            assert!((curve.at(a) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn noninteracting_is_css() {
        let ph = InteractionPhases::new(&CouplingMatrix::uniform(6, 0.0), 1e-3);
        assert_eq!(contrast(&ph), 1.0);
        assert!((variance_ratio(&ph, 0.4, 6).unwrap() - 1.0).abs() < 1e-15);
        let w = wineland(&ph, 6).unwrap();
        assert!((w.xi_w_sq - 1.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_average_at_least_one_and_contrast_penalty() {
        // same-sign couplings with |φ| ≤ π/4; mixed signs can push the
        // y-quadrature below projection noise
        for seed in 0..20 {
            let ph = random_phases_in(6, seed, 0.0, PI / 4.0);
            let c = quadrature_curve(&ph);
            assert!(c.offset >= 1.0 - 1e-12);
            let w = wineland(&ph, 6).unwrap();
            assert!(w.xi_w_sq >= w.var_ratio_min - 1e-15);
        }
    }

    #[test]
    fn g2_is_pi_periodic() {
        let ph = random_phases(5, 9);
        for k in 0..10 {
            let a = 0.3 * k as f64;
            assert!((g2_correlator(&ph, a, 1, 4) - g2_correlator(&ph, a + PI, 1, 4)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_time_scan_is_unity() {
        let v = SoftCorePotential::fitted_reference();
        let rows = scan_xi_vs_n(&[(2, 2)], &v, &[0.0], ScanOptions::default()).unwrap();
        assert_eq!(rows[0].xi_w_sq, 1.0);
        assert!(scan_xi_vs_n(&[], &v, &[0.0], ScanOptions::default()).is_err());
    }

    #[test]
    fn oat_reference_point() {
        // large-N OAT optimum improves with N
        let (_, x10) = oat_optimal_wineland(10);
        let (_, x100) = oat_optimal_wineland(100);
        assert!(x100 < x10 && x10 < 1.0);
    }

    #[test]
    fn displacement_map_is_symmetric() {
        let g = ArrayGeometry::build_subarrays(SubarrayLayout::single(3, 3, 2)).unwrap();
        let c = couplings_from_potential(&g, &SoftCorePotential::fitted_reference());
        let ph = InteractionPhases::new(&c, 2e-6);
        let cells = g2_by_displacement(&g, &ph, 0.5);
        for cell in &cells {
            let mirror = cells.iter().find(|o| o.rx == -cell.rx && o.ry == -cell.ry).unwrap();
            assert!((mirror.g2 - cell.g2).abs() < 1e-15);
        }
    }
}

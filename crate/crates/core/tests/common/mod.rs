//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the closed-form engines of the library.
#![allow(dead_code)]

use num_complex::Complex64;

/// Brute-force state vector of `n ≤ 14` spin-1/2 particles after Ising
/// spin-echo evolution of a state polarized along +x.
///
/// Bit `i` of a basis index is 1 when spin `i` points up (`σ_z = +1`).
pub struct IsingOracle {
    pub n: usize,
    pub psi: Vec<Complex64>,
}

fn z(b: usize, i: usize) -> f64 {
    if b >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

impl IsingOracle {
    /// Evolve under `H = Σ_{i<j} (φ_ij/2) σ_z^i σ_z^j + Σ_i (h_i/2) σ_z^i`
    /// for half the time, flip all spins, evolve again and flip back.
    /// The longitudinal fields `h` must cancel; the pair phases add up.
    pub fn spin_echo(n: usize, phi: &dyn Fn(usize, usize) -> f64, fields: &[f64]) -> Self {
        assert!(n <= 14 && fields.len() == n);
        let dim = 1usize << n;
        let amp = (dim as f64).sqrt().recip();
        let mut psi = vec![Complex64::new(amp, 0.0); dim];
        let energy = |b: usize| {
            let mut e = 0.0;
            for i in 0..n {
                e += 0.5 * fields[i] * z(b, i);
                for j in 0..i {
                    e += 0.5 * phi(i, j) * z(b, i) * z(b, j);
                }
            }
            e
        };
        let half = |psi: &mut Vec<Complex64>| {
            for (b, a) in psi.iter_mut().enumerate() {
                *a *= Complex64::from_polar(1.0, -0.5 * energy(b));
            }
        };
        let flip = |psi: &Vec<Complex64>| -> Vec<Complex64> { (0..dim).map(|b| psi[b ^ (dim - 1)]).collect() };
        half(&mut psi);
        psi = flip(&psi);
        half(&mut psi);
        psi = flip(&psi);
        IsingOracle { n, psi }
    }

    /// `σ_α^i |ψ⟩` with `σ_α = cos α σ_z + sin α σ_y`.
    pub fn apply_sigma_alpha(&self, v: &[Complex64], i: usize, alpha: f64) -> Vec<Complex64> {
        let (s, c) = alpha.sin_cos();
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for (b, a) in v.iter().enumerate() {
            let zb = z(b, i);
            out[b] += c * zb * a;
            // σ_y|↑⟩ = i|↓⟩, σ_y|↓⟩ = −i|↑⟩
            out[b ^ (1 << i)] += Complex64::new(0.0, s * zb) * a;
        }
        out
    }

    fn sigma_x(&self, v: &[Complex64], i: usize) -> Vec<Complex64> {
        (0..v.len()).map(|b| v[b ^ (1 << i)]).collect()
    }

    fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn sigma_x_mean(&self, i: usize) -> f64 {
        Self::inner(&self.psi, &self.sigma_x(&self.psi, i)).re
    }

    pub fn sigma_alpha_mean(&self, i: usize, alpha: f64) -> f64 {
        Self::inner(&self.psi, &self.apply_sigma_alpha(&self.psi, i, alpha)).re
    }

    pub fn contrast(&self) -> f64 {
        (0..self.n).map(|i| self.sigma_x_mean(i)).sum::<f64>() / self.n as f64
    }

    /// Connected `⟨σ_α^i σ_α^j⟩/4 − ⟨σ_α^i⟩⟨σ_α^j⟩/4`.
    pub fn g2(&self, alpha: f64, i: usize, j: usize) -> f64 {
        let sj = self.apply_sigma_alpha(&self.psi, j, alpha);
        let sij = self.apply_sigma_alpha(&sj, i, alpha);
        0.25 * (Self::inner(&self.psi, &sij).re - self.sigma_alpha_mean(i, alpha) * self.sigma_alpha_mean(j, alpha))
    }

    /// `4 Var(S_α)/N` with `S_α = Σ σ_α^i / 2`.
    pub fn variance_ratio(&self, alpha: f64) -> f64 {
        let mut s = vec![Complex64::new(0.0, 0.0); self.psi.len()];
        for i in 0..self.n {
            for (o, a) in s.iter_mut().zip(self.apply_sigma_alpha(&self.psi, i, alpha)) {
                *o += 0.5 * a;
            }
        }
        let mean = Self::inner(&self.psi, &s).re;
        let second = Self::inner(&s, &s).re;
        4.0 * (second - mean * mean) / self.n as f64
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// Wineland parameter of a one-axis-twisted state of `n` spins, computed in
/// the symmetric (Dicke) subspace: `exp(−i μ S_z²/2)` applied to the state
/// polarized along +x, moments taken numerically.
pub fn oat_wineland_dicke(n: usize, mu: f64) -> f64 {
    let j = 0.5 * n as f64;
    // amplitude of |J, m⟩ with m = k − J
    let psi: Vec<Complex64> = (0..=n)
        .map(|k| {
            let m = k as f64 - j;
            let a = (0.5 * ln_choose(n, k) - j * 2f64.ln()).exp();
            Complex64::from_polar(a, -0.5 * mu * m * m)
        })
        .collect();
    // S₊|m⟩ = √(J(J+1) − m(m+1)) |m+1⟩
    let raise = |k: usize| {
        let m = k as f64 - j;
        (j * (j + 1.0) - m * (m + 1.0)).sqrt()
    };
    let sp = |v: &[Complex64]| -> Vec<Complex64> {
        let mut o = vec![Complex64::new(0.0, 0.0); v.len()];
        for k in 0..n {
            o[k + 1] += raise(k) * v[k];
        }
        o
    };
    let sm = |v: &[Complex64]| -> Vec<Complex64> {
        let mut o = vec![Complex64::new(0.0, 0.0); v.len()];
        for k in 1..=n {
            o[k - 1] += raise(k - 1) * v[k];
        }
        o
    };
    let inner = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let (up, dn) = (sp(&psi), sm(&psi));
    let sx: Vec<Complex64> = up.iter().zip(&dn).map(|(a, b)| 0.5 * (a + b)).collect();
    let sy: Vec<Complex64> = up.iter().zip(&dn).map(|(a, b)| Complex64::new(0.0, -0.5) * (a - b)).collect();
    let sz: Vec<Complex64> = psi.iter().enumerate().map(|(k, a)| (k as f64 - j) * a).collect();
    let mx = inner(&psi, &sx).re;
    let (my, mz) = (inner(&psi, &sy).re, inner(&psi, &sz).re);
    let vy = inner(&sy, &sy).re - my * my;
    let vz = inner(&sz, &sz).re - mz * mz;
    let cyz = inner(&sy, &sz).re - my * mz;
    let vmin = 0.5 * (vy + vz) - (0.25 * (vy - vz).powi(2) + cyz * cyz).sqrt();
    n as f64 * vmin / (mx * mx)
}

/// Closed-form one-axis-twisting Wineland parameter (Kitagawa & Ueda).
pub fn oat_wineland_closed_form(n: usize, mu: f64) -> f64 {
    let nf = n as f64;
    let a = 1.0 - mu.cos().powf(nf - 2.0);
    let b = 4.0 * (0.5 * mu).sin() * (0.5 * mu).cos().powf(nf - 2.0);
    let v_minus = 1.0 + 0.25 * (nf - 1.0) * (a - (a * a + b * b).sqrt());
    v_minus / (0.5 * mu).cos().powf(2.0 * (nf - 1.0))
}

/// Dense-grid minimum of `f` on `(0, hi]` with local grid refinement.
pub fn grid_min(f: impl Fn(f64) -> f64, hi: f64) -> (f64, f64) {
    let mut best = (hi, f(hi));
    let (mut lo, mut top) = (0.0, hi);
    for _ in 0..6 {
        let steps = 4000;
        let h = (top - lo) / steps as f64;
        for k in 1..=steps {
            let x = lo + k as f64 * h;
            let v = f(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        lo = (best.0 - 2.0 * h).max(0.0);
        top = best.0 + 2.0 * h;
    }
    best
}

pub fn binomial_pmf(n: u32, p: f64, k: u32) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_choose(n as usize, k as usize) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// Log-likelihood of counts under the two-ensemble binomial model with a
/// uniformly random common phase, averaged on `nodes` equispaced θ values.
pub fn binomial_log_likelihood(shots: &[(u32, u32)], n: u32, phi: f64, contrast: f64, y0: f64, nodes: usize) -> f64 {
    let mut total = 0.0;
    for &(ka, kb) in shots {
        let mut f = 0.0;
        for q in 0..nodes {
            let th = std::f64::consts::TAU * q as f64 / nodes as f64;
            let pa = 0.5 * contrast * th.cos() + y0;
            let pb = 0.5 * contrast * (th + phi).cos() + y0;
            f += binomial_pmf(n, pa, ka) * binomial_pmf(n, pb, kb);
        }
        total += (f / nodes as f64).ln();
    }
    total
}

/// Direct double-loop overlapping Allan deviation at factor `m`.
pub fn naive_adev(y: &[f64], m: usize) -> f64 {
    let n = y.len();
    let mut s = 0.0;
    let mut count = 0;
    for k in 0..=(n - 2 * m) {
        let a: f64 = y[k..k + m].iter().sum::<f64>() / m as f64;
        let b: f64 = y[k + m..k + 2 * m].iter().sum::<f64>() / m as f64;
        s += (b - a) * (b - a);
        count += 1;
    }
    (s / (2.0 * count as f64)).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Random symmetric phase matrix (row-major, zero diagonal).
pub fn random_phase_matrix(n: usize, spread: f64, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut phi = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let p = rng.random_range(-spread..spread);
            phi[i * n + j] = p;
            phi[j * n + i] = p;
        }
    }
    phi
}

/// `n` distinct random lattice sites inside a `side × side` square.
pub fn random_sites(n: usize, side: i64, seed: u64) -> Vec<(i64, i64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(n);
    while out.len() < n {
        let s = (rng.random_range(0..side), rng.random_range(0..side));
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Pair phases `π V(r) t` of the soft-core potential on explicit sites.
pub fn soft_core_phases(sites: &[(i64, i64)], a_lat: f64, v0_hz: f64, r_b: f64, t: f64) -> Vec<f64> {
    let n = sites.len();
    let mut phi = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (dx, dy) = ((sites[i].0 - sites[j].0) as f64, (sites[i].1 - sites[j].1) as f64);
                let r = a_lat * dx.hypot(dy);
                phi[i * n + j] = std::f64::consts::PI * v0_hz / (1.0 + (r / r_b).powi(6)) * t;
            }
        }
    }
    phi
}

pub fn random_fields(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()
}

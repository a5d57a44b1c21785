use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{basis_dim, check_cap, LEVEL_E, LEVEL_G, LEVEL_R};
use crate::{Error, Result};

/// Complex amplitudes over the `3^N` product basis.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    n: usize,
    amps: Vec<Complex64>,
}

impl QuantumState {
    /// `|gg…g⟩`.
    pub fn ground(n: usize) -> Result<Self> {
        check_cap(n)?;
        let mut amps = vec![Complex64::default(); basis_dim(n)];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(QuantumState { n, amps })
    }

    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_cap(n)?;
        if amps.len() != basis_dim(n) {
            return Err(Error::invalid(format!("expected {} amplitudes, got {}", basis_dim(n), amps.len())));
        }
        let s = QuantumState { n, amps };
        if (s.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("state norm {} differs from 1", s.norm())));
        }
        Ok(s)
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn overlap(&self, other: &QuantumState) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// Probability that at least one atom is in `|r⟩`.
    pub fn rydberg_population(&self) -> f64 {
        1.0 - self.spin_weight()
    }

    fn spin_weight(&self) -> f64 {
        let mut w = 0.0;
        for_each_spin_index(self.n, |b, _| w += self.amps[b].norm_sqr());
        w
    }

    /// Ideal rotation `exp(−i θ/2 (cos φ σ_x + sin φ σ_y))` on every atom's
    /// `{g, e}` subspace; Rydberg components are untouched.
    pub fn rotate_clock(&mut self, angle: f64, phase: f64) {
        let (s, c) = (0.5 * angle).sin_cos();
        let mi = Complex64::new(0.0, -s);
        let to_e = mi * Complex64::from_polar(1.0, -phase);
        let to_g = mi * Complex64::from_polar(1.0, phase);
        let dim = self.amps.len();
        let mut p = 1;
        for _ in 0..self.n {
            for b in 0..dim {
                if (b / p) % 3 == LEVEL_G {
                    let (g, e) = (self.amps[b], self.amps[b + p]);
                    self.amps[b + p] = e * c + g * to_e;
                    self.amps[b] = e * to_g + g * c;
                }
            }
            p *= 3;
        }
    }

    /// `exp(iα S_z)` on the `{g, e}` manifold.
    pub fn rotate_z(&mut self, alpha: f64) {
        let n = self.n;
        for (b, a) in self.amps.iter_mut().enumerate() {
            let mut t = b;
            let mut m = 0i32;
            for _ in 0..n {
                match t % 3 {
                    LEVEL_G => m -= 1,
                    LEVEL_E => m += 1,
                    _ => {}
                }
                t /= 3;
            }
            *a *= Complex64::from_polar(1.0, 0.5 * alpha * m as f64);
        }
    }

    /// Drop Rydberg components and renormalize onto the `2^N` spin space
    /// (bit `i` set ⇔ atom `i` in `|e⟩`).
    pub fn project_spin(&self) -> Result<SpinState> {
        let mut amps = vec![Complex64::default(); 1 << self.n];
        for_each_spin_index(self.n, |b, mask| amps[mask] = self.amps[b]);
        let w: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if w <= 1e-300 {
            return Err(Error::Numerical("no weight left in the {g,e} manifold".into()));
        }
        let s = 1.0 / w.sqrt();
        amps.iter_mut().for_each(|a| *a *= s);
        Ok(SpinState { n: self.n, amps })
    }

    /// Raw dump: little-endian `(re, im)` f64 pairs.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for a in &self.amps {
            f.write_all(&a.re.to_le_bytes())?;
            f.write_all(&a.im.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_binary(n: usize, path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let amps = buf
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        QuantumState::from_amplitudes(n, amps)
    }
}

/// Visit every basis state without Rydberg excitations as `(index, e-mask)`.
fn for_each_spin_index(n: usize, mut f: impl FnMut(usize, usize)) {
    let dim = basis_dim(n);
    'outer: for b in 0..dim {
        let (mut t, mut mask) = (b, 0usize);
        for i in 0..n {
            match t % 3 {
                LEVEL_R => continue 'outer,
                LEVEL_E => mask |= 1 << i,
                _ => {}
            }
            t /= 3;
        }
        f(b, mask);
    }
}

/// Normalized state of `N` two-level atoms.
#[derive(Clone, Debug)]
pub struct SpinState {
    n: usize,
    amps: Vec<Complex64>,
}

/// Collective-spin first and second moments.
#[derive(Clone, Copy, Debug)]
pub struct SpinMoments {
    pub mean: [f64; 3],
    /// Symmetrized covariance `½⟨{S_a, S_b}⟩ − ⟨S_a⟩⟨S_b⟩`.
    pub cov: [[f64; 3]; 3],
}

impl SpinState {
    pub fn n_atoms(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// `(S_x ψ, S_y ψ, S_z ψ)`.
    fn apply_collective(&self) -> [Vec<Complex64>; 3] {
        let len = self.amps.len();
        let mut sx = vec![Complex64::default(); len];
        let mut sy = vec![Complex64::default(); len];
        let mut sz = vec![Complex64::default(); len];
        let i_half = Complex64::new(0.0, 0.5);
        for (m, &a) in self.amps.iter().enumerate() {
            for i in 0..self.n {
                let bit = 1 << i;
                let up = m & bit != 0;
                sx[m ^ bit] += a * 0.5;
                // σ_y|g⟩ = −i|e⟩, σ_y|e⟩ = i|g⟩
                sy[m ^ bit] += if up { a * i_half } else { -a * i_half };
                sz[m] += if up { a * 0.5 } else { -a * 0.5 };
            }
        }
        [sx, sy, sz]
    }

    pub fn moments(&self) -> SpinMoments {
        let u = self.apply_collective();
        let inner = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
        let mut mean = [0.0; 3];
        for a in 0..3 {
            mean[a] = inner(&self.amps, &u[a]).re;
        }
        let mut cov = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..=a {
                let c = inner(&u[a], &u[b]).re - mean[a] * mean[b];
                cov[a][b] = c;
                cov[b][a] = c;
            }
        }
        SpinMoments { mean, cov }
    }

    /// Per-site `⟨σ_z^i⟩`.
    pub fn sigma_z(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.amps
                    .iter()
                    .enumerate()
                    .map(|(m, a)| if m >> i & 1 == 1 { a.norm_sqr() } else { -a.norm_sqr() })
                    .sum()
            })
            .collect()
    }

    /// Probability of `k` atoms in `|e⟩`, `k = 0..=N`.
    pub fn excitation_distribution(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n + 1];
        for (m, a) in self.amps.iter().enumerate() {
            p[m.count_ones() as usize] += a.norm_sqr();
        }
        p
    }
}

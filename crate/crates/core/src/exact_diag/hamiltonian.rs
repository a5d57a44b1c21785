use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::geometry::ArrayGeometry;
use crate::potentials::DressingParams;
use crate::{Error, Exec, Result};

use super::{basis_dim, check_cap, digit, LEVEL_E, LEVEL_G, LEVEL_R};

/// Instantaneous drive values (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Drive {
    pub omega_r: f64,
    pub delta: f64,
    pub omega_c: f64,
}

impl Drive {
    pub fn from_params(p: &DressingParams) -> Self {
        Drive { omega_r: p.omega_r, delta: p.delta, omega_c: p.omega_c }
    }

    pub fn is_finite(&self) -> bool {
        self.omega_r.is_finite() && self.delta.is_finite() && self.omega_c.is_finite()
    }
}

/// Drive-independent parts of the three-level Hamiltonian for a fixed
/// geometry: per-basis-state Rydberg counts and van der Waals energies.
#[derive(Clone, Debug)]
pub struct Hamiltonian3 {
    n: usize,
    dim: usize,
    pow3: Vec<usize>,
    n_r: Vec<u8>,
    vdw: Vec<f64>,
}

impl Hamiltonian3 {
    /// `c6` in rad/s·m⁶; all pairs in `g` interact.
    pub fn new(g: &ArrayGeometry, c6: f64) -> Result<Self> {
        let n = g.len();
        check_cap(n)?;
        let mut pair = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let v = c6 / g.distance(i, j).powi(6);
                pair[i * n + j] = v;
                pair[j * n + i] = v;
            }
        }
        Self::from_pair_energies(n, &pair)
    }

    /// Explicit symmetric Rydberg-pair energies (rad/s), row-major `n × n`.
    pub fn from_pair_energies(n: usize, pair: &[f64]) -> Result<Self> {
        check_cap(n)?;
        if n == 0 {
            return Err(Error::invalid("empty geometry"));
        }
        if pair.len() != n * n || pair.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pair energies must be a finite n × n matrix"));
        }
        let dim = basis_dim(n);
        let pow3: Vec<usize> = (0..n).map(|i| 3usize.pow(i as u32)).collect();
        let mut n_r = vec![0u8; dim];
        let mut vdw = vec![0.0; dim];
        let mut rs = Vec::with_capacity(n);
        for b in 0..dim {
            rs.clear();
            let mut t = b;
            for i in 0..n {
                if t % 3 == LEVEL_R {
                    rs.push(i);
                }
                t /= 3;
            }
            n_r[b] = rs.len() as u8;
            let mut e = 0.0;
            for (a, &i) in rs.iter().enumerate() {
                for &j in &rs[..a] {
                    e += pair[i * n + j];
                }
            }
            vdw[b] = e;
        }
        Ok(Hamiltonian3 { n, dim, pow3, n_r, vdw })
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn pow3(&self) -> &[usize] {
        &self.pow3
    }

    /// Number of Rydberg excitations in basis state `b`.
    pub fn rydberg_count(&self, b: usize) -> u8 {
        self.n_r[b]
    }

    /// Interaction energy `Σ C6/r⁶` over Rydberg pairs in basis state `b`.
    pub fn vdw_energy(&self, b: usize) -> f64 {
        self.vdw[b]
    }

    /// Diagonal element for drive `d`.
    #[inline]
    pub fn diagonal(&self, b: usize, d: &Drive) -> f64 {
        d.delta * self.n_r[b] as f64 + self.vdw[b]
    }

    /// Bind a drive to obtain an operator.
    pub fn at(&self, drive: Drive) -> H3<'_> {
        H3 { h: self, drive }
    }
}

/// The three-level Hamiltonian `H₃/ħ` at fixed drive values. Real symmetric.
#[derive(Clone, Copy, Debug)]
pub struct H3<'a> {
    h: &'a Hamiltonian3,
    drive: Drive,
}

/// Linear operator interface used by the propagators.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], y: &mut [Complex64], exec: Exec);
}

impl<'a> H3<'a> {
    pub fn drive(&self) -> Drive {
        self.drive
    }

    pub fn structure(&self) -> &'a Hamiltonian3 {
        self.h
    }

    /// Row `b` of `H x` in gather form.
    #[inline]
    fn row(&self, b: usize, x: &[Complex64]) -> Complex64 {
        let h = self.h;
        let d = &self.drive;
        let (hr, hc) = (0.5 * d.omega_r, 0.5 * d.omega_c);
        let mut acc = x[b] * h.diagonal(b, d);
        let mut t = b;
        for &p in &h.pow3 {
            match t % 3 {
                LEVEL_G => {
                    if hc != 0.0 {
                        acc += x[b + p] * hc;
                    }
                }
                LEVEL_E => {
                    if hc != 0.0 {
                        acc += x[b - p] * hc;
                    }
                    if hr != 0.0 {
                        acc += x[b + p] * hr;
                    }
                }
                _ => {
                    if hr != 0.0 {
                        acc += x[b - p] * hr;
                    }
                }
            }
            t /= 3;
        }
        acc
    }

    /// Nonzero entries `(row, col, value)` of the upper triangle and diagonal.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let h = self.h;
        let d = &self.drive;
        let mut out = Vec::new();
        for b in 0..h.dim {
            let diag = h.diagonal(b, d);
            if diag != 0.0 {
                out.push((b, b, diag));
            }
            for (i, &p) in h.pow3.iter().enumerate() {
                match digit(b, i) {
                    LEVEL_G if d.omega_c != 0.0 => out.push((b, b + p, 0.5 * d.omega_c)),
                    LEVEL_E if d.omega_r != 0.0 => out.push((b, b + p, 0.5 * d.omega_r)),
                    _ => {}
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.h.dim;
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Expectation `⟨x|H|x⟩` (real for Hermitian `H`).
    pub fn expectation(&self, x: &[Complex64], exec: Exec) -> f64 {
        let mut y = vec![Complex64::default(); x.len()];
        self.apply(x, &mut y, exec);
        x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Upper bound on the spectral radius (Gershgorin).
    pub fn norm_bound(&self) -> f64 {
        let h = self.h;
        let d = &self.drive;
        let off = h.n as f64 * 0.5 * (d.omega_r.abs() + d.omega_c.abs());
        (0..h.dim).map(|b| h.diagonal(b, d).abs()).fold(0.0, f64::max) + off
    }
}

/// Minimum number of rows per parallel task in the matrix-vector product.
const ROW_CHUNK: usize = 512;

impl LinearOperator for H3<'_> {
    fn dim(&self) -> usize {
        self.h.dim
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64], exec: Exec) {
        debug_assert_eq!(x.len(), self.h.dim);
        exec.for_each_chunk_mut(y, ROW_CHUNK, |c, out| {
            let start = c * ROW_CHUNK;
            for (k, o) in out.iter_mut().enumerate() {
                *o = self.row(start + k, x);
            }
        });
    }
}

/// Convenience constructor binding geometry, parameters and drive values.
pub fn build_h3(g: &ArrayGeometry, p: &DressingParams, drive: Drive) -> Result<(Hamiltonian3, Drive)> {
    p.validate()?;
    if !drive.is_finite() {
        return Err(Error::invalid("drive values must be finite"));
    }
    Ok((Hamiltonian3::new(g, p.c6)?, drive))
}

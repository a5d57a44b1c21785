//! Exact propagator for a constant Hamiltonian without clock drive.
//!
//! With `Ω_c = 0` the set of atoms in `|g⟩` is conserved, so `H₃` splits into
//! blocks labelled by that set. Each block lives on `{e, r}^k` for the `k`
//! remaining atoms and is diagonalized once; the propagator is then exact for
//! any duration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::hamiltonian::{Drive, Hamiltonian3};
use crate::{Error, Exec, Result};

struct Block {
    indices: Vec<usize>,
    evals: DVector<f64>,
    evecs: DMatrix<f64>,
}

pub struct BlockPropagator {
    dim: usize,
    blocks: Vec<Block>,
}

impl BlockPropagator {
    pub fn new(h: &Hamiltonian3, drive: Drive, exec: Exec) -> Result<Self> {
        if drive.omega_c != 0.0 {
            return Err(Error::invalid("block propagator requires the clock drive to be off"));
        }
        let n = h.n_atoms();
        let pow3 = h.pow3().to_vec();
        let masks: Vec<u32> = (0..1u32 << n).collect();
        let blocks = exec.map_slice(&masks, |&gmask| {
            let sites: Vec<usize> = (0..n).filter(|i| gmask >> i & 1 == 0).collect();
            let k = sites.len();
            let size = 1usize << k;
            let indices: Vec<usize> = (0..size)
                .map(|b| sites.iter().enumerate().map(|(s, &i)| (1 + (b >> s & 1)) * pow3[i]).sum())
                .collect();
            let mut m = DMatrix::zeros(size, size);
            for b in 0..size {
                m[(b, b)] = h.diagonal(indices[b], &drive);
                for s in 0..k {
                    if b >> s & 1 == 0 {
                        let c = b | 1 << s;
                        m[(b, c)] = 0.5 * drive.omega_r;
                        m[(c, b)] = 0.5 * drive.omega_r;
                    }
                }
            }
            let eig = SymmetricEigen::new(m);
            Block { indices, evals: eig.eigenvalues, evecs: eig.eigenvectors }
        });
        Ok(BlockPropagator { dim: h.dim(), blocks })
    }

    /// Heap size of the stored eigenvectors and eigenvalues.
    pub fn memory_bytes(&self) -> usize {
        self.blocks.iter().map(|b| (b.evecs.len() + b.evals.len() + b.indices.len()) * 8).sum()
    }

    /// Replace `v` by `exp(−iHt) v`.
    pub fn apply(&self, v: &mut [Complex64], t: f64, exec: Exec) {
        assert_eq!(v.len(), self.dim, "state dimension mismatch");
        let src: &[Complex64] = v;
        let results = exec.map_slice(&self.blocks, |b| {
            let re = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| src[i].re));
            let im = DVector::from_iterator(b.indices.len(), b.indices.iter().map(|&i| src[i].im));
            let (pr, pi) = (b.evecs.tr_mul(&re), b.evecs.tr_mul(&im));
            let mut qr = DVector::zeros(pr.len());
            let mut qi = DVector::zeros(pr.len());
            for k in 0..pr.len() {
                let ph = Complex64::from_polar(1.0, -b.evals[k] * t) * Complex64::new(pr[k], pi[k]);
                qr[k] = ph.re;
                qi[k] = ph.im;
            }
            let (yr, yi) = (&b.evecs * qr, &b.evecs * qi);
            yr.iter().zip(yi.iter()).map(|(r, i)| Complex64::new(*r, *i)).collect::<Vec<_>>()
        });
        for (b, y) in self.blocks.iter().zip(results) {
            for (&i, val) in b.indices.iter().zip(y) {
                v[i] = val;
            }
        }
    }
}

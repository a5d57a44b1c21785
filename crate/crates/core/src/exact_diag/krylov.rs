//! Lanczos approximation of `exp(−iHt) v` for Hermitian `H`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::hamiltonian::LinearOperator;
use crate::{Error, Exec, Result};

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    /// Maximum Krylov subspace dimension.
    pub max_dim: usize,
    /// Error tolerance per substep, relative to the vector norm.
    pub tol: f64,
    pub max_substeps: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { max_dim: 30, tol: 1e-12, max_substeps: 1_000_000 }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

struct Lanczos {
    basis: Vec<Vec<Complex64>>,
    /// Eigenvalues of the tridiagonal projection.
    evals: Vec<f64>,
    evecs: DMatrix<f64>,
    /// Residual coupling `β_m`; zero on invariant-subspace breakdown.
    beta_last: f64,
}

impl Lanczos {
    fn build<O: LinearOperator>(op: &O, v: &[Complex64], m_max: usize, exec: Exec) -> Lanczos {
        let n = v.len();
        let m_max = m_max.min(n).max(1);
        let b0 = norm(v);
        let mut basis = vec![v.iter().map(|x| x / b0).collect::<Vec<_>>()];
        let mut alpha = Vec::with_capacity(m_max);
        let mut beta: Vec<f64> = Vec::with_capacity(m_max);
        let mut w = vec![Complex64::default(); n];
        let mut beta_last = 0.0;
        for j in 0..m_max {
            op.apply(&basis[j], &mut w, exec);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= vi * a;
            }
            if j > 0 {
                let b = beta[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= vi * b;
                }
            }
            for v_k in &basis {
                let h = dot(v_k, &w);
                for (wi, vi) in w.iter_mut().zip(v_k) {
                    *wi -= vi * h;
                }
            }
            let b = norm(&w);
            let scale = alpha.iter().map(|x| x.abs()).fold(0.0, f64::max).max(beta.iter().copied().fold(0.0, f64::max));
            if b <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
                beta_last = 0.0;
                break;
            }
            if j + 1 == m_max {
                beta_last = b;
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let m = alpha.len();
        basis.truncate(m);
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        Lanczos { basis, evals: eig.eigenvalues.iter().copied().collect(), evecs: eig.eigenvectors, beta_last }
    }

    /// Coefficients of `exp(−iTτ) e₁` in the Lanczos basis.
    fn coeffs(&self, tau: f64) -> Vec<Complex64> {
        let m = self.evals.len();
        let w: Vec<Complex64> = (0..m)
            .map(|k| Complex64::from_polar(self.evecs[(0, k)], -self.evals[k] * tau))
            .collect();
        (0..m).map(|j| (0..m).map(|k| w[k] * self.evecs[(j, k)]).sum()).collect()
    }

    /// Saad's a posteriori estimate `β_m τ |e_mᵀ φ₁(−iTτ) e₁|`.
    fn error(&self, tau: f64) -> f64 {
        if self.beta_last == 0.0 {
            return 0.0;
        }
        let m = self.evals.len();
        let phi1 = |z: Complex64| if z.norm() < 1e-5 { 1.0 + z * 0.5 } else { (z.exp() - 1.0) / z };
        let last: Complex64 = (0..m)
            .map(|k| phi1(Complex64::new(0.0, -self.evals[k] * tau)) * self.evecs[(0, k)] * self.evecs[(m - 1, k)])
            .sum();
        self.beta_last * tau.abs() * last.norm()
    }
}

/// Replace `v` by `exp(−iHt) v`. Returns the number of substeps taken.
pub fn expmv<O: LinearOperator>(op: &O, v: &mut [Complex64], t: f64, opts: KrylovOptions, exec: Exec) -> Result<usize> {
    if !t.is_finite() {
        return Err(Error::invalid("propagation time must be finite"));
    }
    let mut remaining = t;
    let mut steps = 0;
    while remaining != 0.0 {
        let nv = norm(v);
        if nv == 0.0 {
            return Ok(steps);
        }
        let lz = Lanczos::build(op, v, opts.max_dim, exec);
        let ok = |tau: f64| lz.error(tau) <= opts.tol;
        let mut tau = remaining;
        let mut halvings = 0;
        while !ok(tau) {
            tau *= 0.5;
            halvings += 1;
            if halvings > 200 {
                return Err(Error::Numerical("Krylov step size underflow".into()));
            }
        }
        if halvings > 0 {
            // grow back towards the largest acceptable step in (τ, 2τ)
            let (mut lo, mut hi) = (tau, 2.0 * tau);
            for _ in 0..6 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            tau = lo;
        }
        let c = lz.coeffs(tau);
        v.iter_mut().for_each(|x| *x = Complex64::default());
        for (cj, bj) in c.iter().zip(&lz.basis) {
            let s = cj * nv;
            for (x, b) in v.iter_mut().zip(bj) {
                *x += b * s;
            }
        }
        remaining -= tau;
        if remaining.abs() <= 1e-15 * t.abs() {
            remaining = 0.0;
        }
        steps += 1;
        if steps > opts.max_substeps {
            return Err(Error::NonConvergence { iterations: steps, residual: remaining.abs() });
        }
    }
    Ok(steps)
}

use nalgebra::SymmetricEigen;

use super::hamiltonian::{Drive, Hamiltonian3};
use crate::constants::rad_to_hz;
use crate::potentials::DressingParams;
use crate::{Error, Result};

/// Dressed eigenvalue adiabatically connected to basis state `target`.
fn dressed_energy(h: &Hamiltonian3, drive: Drive, target: usize) -> Result<f64> {
    let eig = SymmetricEigen::new(h.at(drive).to_dense());
    let (k, w) = (0..eig.eigenvalues.len())
        .map(|k| (k, eig.eigenvectors[(target, k)].powi(2)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty spectrum");
    if w < 0.5 {
        return Err(Error::Numerical(format!(
            "dressed-state crossing: bare state {target} has at most {w:.3} weight on any eigenstate"
        )));
    }
    Ok(eig.eigenvalues[k])
}

/// Dressed pair interaction `V(r) = E_ee − 2E_e` (h×Hz) from the static
/// two-atom Hamiltonian without clock drive.
pub fn dressed_pair_shift(p: &DressingParams, r: f64) -> Result<f64> {
    p.validate()?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("pair distance must be positive, got {r}")));
    }
    let drive = Drive { omega_r: p.omega_r, delta: p.delta, omega_c: 0.0 };
    let v = p.vdw(r);
    let two = Hamiltonian3::from_pair_energies(2, &[0.0, v, v, 0.0])?;
    let one = Hamiltonian3::from_pair_energies(1, &[0.0])?;
    // |ee⟩ = 1 + 1·3, |e⟩ = 1
    let e_ee = dressed_energy(&two, drive, 4)?;
    let e_e = dressed_energy(&one, drive, 1)?;
    Ok(rad_to_hz(e_ee - 2.0 * e_e))
}

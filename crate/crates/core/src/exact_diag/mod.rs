//! Exact dynamics of the ground/clock/Rydberg three-level Hamiltonian for
//! small arrays (N ≤ 9).
//!
//! Basis index `b = Σ_i s_i 3^i` with `s_i ∈ {g=0, e=1, r=2}` (site 0 is the
//! least significant digit). Constant segments without clock drive use an
//! exact block eigendecomposition; ramps are products of such exponentials
//! at fixed quadrature nodes. A Lanczos propagator handles general drives.

mod block;
mod hamiltonian;
mod krylov;
mod pair;
mod sequence;
mod state;

pub use block::BlockPropagator;
pub use hamiltonian::{build_h3, Drive, Hamiltonian3, LinearOperator, H3};
pub use krylov::{expmv, KrylovOptions};
pub use pair::dressed_pair_shift;
pub use sequence::{
    propagate, run_sequence, run_sequence_scan, EdRun, Integrator, PulseSequence, RampSchedule, ReadoutResult, Segment,
    SequenceOptions,
};
pub use state::{QuantumState, SpinMoments, SpinState};

use crate::{Error, Result};

/// Largest supported atom number (3^9 = 19683 basis states).
pub const MAX_ATOMS: usize = 9;

pub(crate) const LEVEL_G: usize = 0;
pub(crate) const LEVEL_E: usize = 1;
pub(crate) const LEVEL_R: usize = 2;

pub(crate) fn basis_dim(n: usize) -> usize {
    3usize.pow(n as u32)
}

#[inline]
pub(crate) fn digit(b: usize, i: usize) -> usize {
    (b / 3usize.pow(i as u32)) % 3
}

/// Reject atom numbers above [`MAX_ATOMS`], quoting the state-vector size.
pub fn check_cap(n: usize) -> Result<()> {
    if n > MAX_ATOMS {
        let bytes = 3u128.checked_pow(n as u32).map_or(u128::MAX, |d| d.saturating_mul(16));
        return Err(Error::TooManyAtoms { requested: n, cap: MAX_ATOMS, bytes });
    }
    Ok(())
}

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use super::model::{pmf_marginal, EllipseModel, Pmf2};
use crate::{Error, Result};

/// Finite-difference step in φ for the score.
pub const FISHER_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub phi0: f64,
    /// Classical Fisher information for φ (rad⁻²).
    pub information: f64,
    /// Relative change when the derivative is Richardson-extrapolated from
    /// steps `h` and `h/2`.
    pub richardson_rel_change: f64,
}

fn information(f0: &Pmf2, score: impl Fn(usize) -> f64) -> f64 {
    f0.mass.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| score(i).powi(2) * p).sum()
}

/// Fisher information of the binomial two-ensemble model for a measurement
/// of φ at `phi0`: exact double sum over outcomes, with `∂φ ln f` by central
/// differences. Cells with zero probability are skipped.
pub fn fisher_information_css(m: &EllipseModel, phi0: f64, nodes: usize) -> Result<FisherResult> {
    if !m.is_binomial() {
        return Err(Error::invalid("Fisher information is defined here for ζ = (1, 1) only"));
    }
    let at = |phi: f64| pmf_marginal(&EllipseModel { phi, ..*m }, nodes);
    let h = FISHER_STEP;
    let f0 = at(phi0)?;
    let (fp, fm) = (at(phi0 + h)?, at(phi0 - h)?);
    let (fp2, fm2) = (at(phi0 + 0.5 * h)?, at(phi0 - 0.5 * h)?);
    let ln = |f: &Pmf2, i: usize| f.mass[i].ln();
    let d1 = |i: usize| (ln(&fp, i) - ln(&fm, i)) / (2.0 * h);
    let d2 = |i: usize| (ln(&fp2, i) - ln(&fm2, i)) / h;
    let i1 = information(&f0, |i| {
        let v = d1(i);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    });
    let ir = information(&f0, |i| {
        let v = (4.0 * d2(i) - d1(i)) / 3.0;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    });
    let rel = if ir > 0.0 { (i1 - ir).abs() / ir } else { (i1 - ir).abs() };
    Ok(FisherResult { phi0, information: i1, richardson_rel_change: rel })
}

//! Tempered-binomial noise model for two-ensemble clock comparisons and
//! maximum-likelihood "ellipse fitting" of their differential phase.
//!
//! Outcomes are excitation counts `(k_A, k_B)` with `N` atoms per ensemble.
//! The common atom-laser phase θ is uniformly random, so the observed mass
//! function is the θ-average of a per-θ product of (tempered) binomials.

mod fisher;
mod likelihood;
mod model;
mod pipeline;

pub use fisher::{fisher_information_css, FisherResult, FISHER_STEP};
pub use likelihood::{
    cell_log_pmf, fit_mle, fit_phi, log_likelihood, CellHistogram, FitOptions, FreeMask, LikelihoodResult, PhiFit,
    PARAM_NAMES, PHI_STEP,
};
pub use model::{
    log_binomial_coefficients, pmf_marginal, pmf_theta, tempered_binomial, tempered_binomial_into, theta_nodes,
    EllipseModel, Pmf2, DEFAULT_THETA_NODES,
};
pub use pipeline::{
    bootstrap_indices, calibrated_pipeline, jackknife, split_indices, variance_gain_db, JackknifeSeries, LooMethod,
    PipelineOptions, PipelineResult,
};

#[cfg(test)]
mod tests;

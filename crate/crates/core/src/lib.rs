//! Simulation and analysis toolkit for Rydberg-dressed spin squeezing on
//! optical-clock qubits held in programmable 2D lattice arrays.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] builds lattice arrays split into independent subarrays.
//! * [`potentials`] turns Rydberg drive parameters into soft-core two-body
//!   interactions and fits soft-core parameters to pair-oscillation data.
//! * [`weak_dressing`] evaluates closed-form Ising spin-echo analytics
//!   (contrast, correlators, quadrature variance, Wineland parameter).
//! * [`exact_diag`] propagates the full three-level ground/clock/Rydberg
//!   Hamiltonian with ramped drives for up to nine atoms.
//! * [`sampler`] generates synthetic per-shot excitation-fraction records.
//! * [`stability`] performs differential clock-comparison statistics
//!   (overlapping Allan deviation, white-noise fits, double-exponential fits).
//! * [`ellipse`] implements the tempered-binomial noise model, maximum
//!   likelihood ellipse fitting with calibration bootstrap and jackknife, and
//!   the coherent-spin-state Fisher information.
//! * [`cli`] wires everything into reproducible, manifest-backed commands.
//!
//! Data-parallel loops (shot generation, scans, bootstrap replicas, matrix
//! products over basis states) go through [`exec::Exec`], which uses rayon
//! when the `parallel` feature is enabled and falls back to plain iterators
//! otherwise.

pub mod cli;
pub mod constants;
pub mod ellipse;
pub mod error;
pub mod exact_diag;
pub mod exec;
pub mod geometry;
pub mod metrology;
pub mod optimize;
pub mod potentials;
pub mod record;
pub mod sampler;
pub mod stability;
pub mod weak_dressing;

pub use error::{Error, Result};
pub use exec::Exec;

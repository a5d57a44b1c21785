use std::f64::consts::PI;

/// Optical lattice spacing (m).
pub const LATTICE_CONSTANT: f64 = 575e-9;

/// Minimum separation between subarrays, in lattice units, for them to be
/// treated as independent ensembles.
pub const MIN_SUBARRAY_GAP: u32 = 12;

/// Planck constant (J s).
pub const H_PLANCK: f64 = 6.626_070_15e-34;

/// ⁸⁸Sr ¹S₀–³P₀ clock transition frequency (Hz), used to express angular
/// frequency differences as fractional frequency.
pub const SR88_CLOCK_FREQUENCY: f64 = 429.228_066_418e12;

/// Default experimental cycle time (s).
pub const DEFAULT_CYCLE_TIME: f64 = 1.4;

pub const TWO_PI: f64 = 2.0 * PI;

/// Convert a frequency in Hz to angular frequency (rad/s).
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    TWO_PI * f
}

#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / TWO_PI
}

/// Convert a `C6` coefficient in Hz·µm⁶ (the usual "2π × GHz µm⁶" lab unit
/// with the 2π dropped) to rad/s·m⁶.
#[inline]
pub fn c6_from_hz_um6(c6: f64) -> f64 {
    TWO_PI * c6 * 1e-36
}

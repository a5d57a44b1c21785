use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::constants::SR88_CLOCK_FREQUENCY;
use crate::ellipse::LooMethod;
use crate::exact_diag::{Integrator, RampSchedule};
use crate::geometry::{GeometryConfig, Spacing};
use crate::potentials::{DressingParams, SoftCorePotential};
use crate::record::MeasurementMode;
use crate::sampler::StabilityConfig;
use crate::stability::{AllanAxis, AveragingFactors};
use crate::{Error, Result};

/// Everything a command needs, in one JSON document. Every section has
/// defaults, so `{}` is a valid configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Required by the stochastic commands.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub inputs: InputsConfig,
    /// Array for `ed-evolve`; a 2×2 block when absent.
    pub geometry: Option<GeometryConfig>,
    pub dressing: DressingConfig,
    pub sequence: SequenceConfig,
    pub scan: ScanConfig,
    pub sampler: SamplerConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputsConfig {
    /// Pair-oscillation CSV for `fit-potential`.
    pub data: Option<PathBuf>,
    /// Record CSV for `allan`.
    pub record: Option<PathBuf>,
    pub cal: Option<PathBuf>,
    pub meas: Option<PathBuf>,
}

impl InputsConfig {
    pub fn paths(&self) -> Vec<(&'static str, &Path)> {
        [("data", &self.data), ("record", &self.record), ("cal", &self.cal), ("meas", &self.meas)]
            .into_iter()
            .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftCoreConfig {
    pub v0_hz: f64,
    pub rb_lat: f64,
}

/// Drive parameters in lab units (Hz, Hz·µm⁶, 2π dropped).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DressingConfig {
    pub omega_r_hz: f64,
    pub delta_hz: f64,
    pub c6_hz_um6: f64,
    pub omega_c_hz: f64,
    /// Soft-core potential for the weak-dressing scan; derived from the
    /// drive when absent.
    pub soft_core: Option<SoftCoreConfig>,
}

impl Default for DressingConfig {
    fn default() -> Self {
        DressingConfig { omega_r_hz: 5.5e6, delta_hz: 11e6, c6_hz_um6: 9.1e9, omega_c_hz: 250.0, soft_core: None }
    }
}

impl DressingConfig {
    pub fn params(&self) -> Result<DressingParams> {
        DressingParams::from_lab(self.omega_r_hz, self.delta_hz, self.c6_hz_um6, self.omega_c_hz)
    }

    pub fn potential(&self, lattice_constant: f64) -> Result<SoftCorePotential> {
        match self.soft_core {
            Some(s) => SoftCorePotential::new(s.v0_hz, s.rb_lat * lattice_constant),
            None => crate::potentials::weak_dressing_potential(&self.params()?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    /// Interaction times for `ed-evolve` (µs).
    pub t_int_us: Vec<f64>,
    /// Quadrature angle for an explicit readout after the echo.
    pub alpha_deg: Option<f64>,
    pub ramp: RampSchedule,
    pub finite_clock_pulses: bool,
    pub integrator: Integrator,
    /// Write the final state vector of each run.
    pub save_state: bool,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            t_int_us: vec![1.0],
            alpha_deg: None,
            ramp: RampSchedule::default(),
            finite_clock_pulses: false,
            integrator: Integrator::default(),
            save_state: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMethod {
    #[default]
    Weak,
    Ed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub method: ScanMethod,
    /// Block shapes `[rows, cols]`; a method-specific ladder when absent.
    pub sizes: Option<Vec<[u32; 2]>>,
    /// Explicit interaction times (µs); otherwise a geometric grid.
    pub t_int_us: Option<Vec<f64>>,
    pub t_min_us: f64,
    pub t_max_us: f64,
    pub n_times: usize,
    /// Site spacing in lattice units.
    pub spacing: u32,
    pub refine: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            method: ScanMethod::Weak,
            sizes: None,
            t_int_us: None,
            t_min_us: 0.01,
            t_max_us: 100.0,
            n_times: 81,
            spacing: 2,
            refine: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub mode: MeasurementMode,
    pub run: StabilityConfig,
    /// `(ζ₀, ζ₁)` of a squeezed-state noise model; when set, an interleaved
    /// squeezed record is generated next to the coherent one.
    pub zeta: Option<[f64; 2]>,
    /// Differential phase in ellipse mode (degrees).
    pub phi_deg: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { mode: MeasurementMode::Stability, run: StabilityConfig::default(), zeta: None, phi_deg: 30.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllanQuantity {
    /// `(ω_A − ω_B)/(2π ν₀)`.
    #[default]
    Fractional,
    /// `ω_A − ω_B` in rad/s.
    Angular,
    /// Raw `d_z`.
    Dz,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllanConfig {
    pub axis: AllanAxis,
    pub factors: AveragingFactors,
    pub quantity: AllanQuantity,
    /// Contrast used for the frequency conversion; `sampler.run.contrast`
    /// when absent.
    pub contrast: Option<f64>,
    pub nu0_hz: f64,
}

impl Default for AllanConfig {
    fn default() -> Self {
        AllanConfig {
            axis: AllanAxis::Time,
            factors: AveragingFactors::Octave,
            quantity: AllanQuantity::Fractional,
            contrast: None,
            nu0_hz: SR88_CLOCK_FREQUENCY,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllipseNoiseModel {
    /// Binomial noise: ζ fixed at 1, `(φ, C, y₀)` fitted.
    #[default]
    Css,
    /// Tempered binomial: all five parameters fitted.
    Sss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipseInit {
    pub phi_deg: f64,
    pub contrast: f64,
    pub y0: f64,
    pub zeta0: f64,
    pub zeta1: f64,
}

impl Default for EllipseInit {
    fn default() -> Self {
        EllipseInit { phi_deg: 45.0, contrast: 0.95, y0: 0.5, zeta0: 1.0, zeta1: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipseFitConfig {
    pub model: EllipseNoiseModel,
    pub nodes: usize,
    pub n_bootstrap: usize,
    pub loo: LooMethod,
    pub factors: AveragingFactors,
    pub init: EllipseInit,
}

impl Default for EllipseFitConfig {
    fn default() -> Self {
        EllipseFitConfig {
            model: EllipseNoiseModel::Css,
            nodes: crate::ellipse::DEFAULT_THETA_NODES,
            n_bootstrap: 50,
            loo: LooMethod::OneStep,
            factors: AveragingFactors::Octave,
            init: EllipseInit::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FisherConfig {
    pub phi_deg: Vec<f64>,
    pub n_atoms: u32,
    pub contrast: f64,
    pub y0: f64,
    pub nodes: usize,
}

impl Default for FisherConfig {
    fn default() -> Self {
        FisherConfig { phi_deg: vec![0.0, 30.0], n_atoms: 70, contrast: 0.95, y0: 0.5, nodes: crate::ellipse::DEFAULT_THETA_NODES }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub allan: AllanConfig,
    pub ellipse: EllipseFitConfig,
    pub fisher: FisherConfig,
}

impl RunConfig {
    /// Geometry for `ed-evolve`.
    pub fn geometry_or_default(&self) -> GeometryConfig {
        self.geometry.clone().unwrap_or(GeometryConfig {
            lattice_constant_nm: crate::constants::LATTICE_CONSTANT * 1e9,
            rows: 2,
            cols: 2,
            spacing: Spacing::Uniform(2),
            n_subarrays: 1,
            gap: crate::constants::MIN_SUBARRAY_GAP,
            allow_small_gap: false,
        })
    }

    pub fn lattice_constant(&self) -> f64 {
        self.geometry_or_default().lattice_constant_nm * 1e-9
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config {
            path: "seed".into(),
            message: "a seed is required for stochastic commands (use --seed)".into(),
        })
    }

    /// Parse a JSON value, naming the offending field on schema errors.
    pub fn from_value(v: Value) -> Result<Self> {
        serde_path_to_error::deserialize(v).map_err(|e| Error::Config { path: e.path().to_string(), message: e.inner().to_string() })
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Set `path` (dot separated) inside `root` to `value`, creating objects on
/// the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config { path: path.into(), message: "empty key in override path".into() });
    }
    let mut cur = root;
    for (i, k) in keys.iter().enumerate() {
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().ok_or_else(|| Error::Config {
            path: keys[..i].join("."),
            message: "cannot override a key inside a non-object value".into(),
        })?;
        if i + 1 == keys.len() {
            obj.insert((*k).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*k).to_string()).or_insert(Value::Null);
    }
    unreachable!("path has at least one key")
}

/// Parse a `path=value` override; the value is JSON when it parses as such
/// and a plain string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config { path: s.into(), message: "override must have the form path=value".into() })?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let c = RunConfig::from_value(serde_json::json!({})).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(RunConfig::from_value(c.to_value()).unwrap(), c);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let e = RunConfig::from_value(serde_json::json!({"sampler": {"run": {"n_atoms": "many"}}})).unwrap_err();
        match e {
            Error::Config { path, .. } => assert_eq!(path, "sampler.run.n_atoms"),
            other => panic!("{other}"),
        }
        let e = RunConfig::from_value(serde_json::json!({"scan": {"methd": "ed"}})).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path.starts_with("scan")), "{e}");
    }

    #[test]
    fn overrides_create_and_replace() {
        let mut v = serde_json::json!({"scan": {"method": "weak"}});
        let (k, x) = parse_override("scan.method=ed").unwrap();
        set_path(&mut v, &k, x).unwrap();
        let (k, x) = parse_override("sampler.run.n_shots=5000").unwrap();
        set_path(&mut v, &k, x).unwrap();
        let c = RunConfig::from_value(v.clone()).unwrap();
        assert_eq!(c.scan.method, ScanMethod::Ed);
        assert_eq!(c.sampler.run.n_shots, 5000);
        assert!(set_path(&mut v, "scan.method.x", Value::Null).is_err());
        assert!(parse_override("novalue").is_err());
    }
}

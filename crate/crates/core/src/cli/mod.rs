//! Command-line front end.
//!
//! All subcommands read one JSON [`RunConfig`]; command flags and
//! `--set path=value` override its keys. Each run writes its outputs and a
//! [`Manifest`] (resolved config, its SHA-256, seed, versions, file digests)
//! to the output directory, and `replay` re-executes a manifest and checks
//! that every output is bit-identical.

mod commands;
mod config;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

pub use commands::{allan_of_record, Outcome};
pub use config::{
    parse_override, set_path, AllanConfig, AllanQuantity, AnalysisConfig, DressingConfig, EllipseFitConfig, EllipseInit,
    EllipseNoiseModel, FisherConfig, InputsConfig, RunConfig, SamplerConfig, ScanConfig, ScanMethod, SequenceConfig,
    SoftCoreConfig,
};
pub use manifest::{file_digest, sha256_hex, FileDigest, Manifest, MANIFEST_FILE};

use crate::{Error, Exec, Result};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "RYDSQ_OUT";
const DEFAULT_OUT: &str = "rydsq-out";

#[derive(Parser, Debug)]
#[command(name = "rydsq", version, about = "Rydberg-dressed squeezing: dynamics, synthetic clock records and their analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// JSON run configuration; a manifest is accepted as well.
    #[arg(long, short, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set sampler.run.n_shots=5000`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: $RYDSQ_OUT, then ./rydsq-out].
    #[arg(long, short, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Run single-threaded (results are identical).
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Weak,
    Ed,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Quadrature,
    Stability,
    Ellipse,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Time,
    Count,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Css,
    Sss,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a soft-core profile to pair-oscillation frequencies.
    FitPotential {
        /// CSV with columns r_lat, freq_hz, err_hz.
        data: Option<PathBuf>,
    },
    /// Optimal Wineland parameter versus block size.
    ScanSqueezing {
        #[arg(long)]
        method: Option<MethodArg>,
        /// Block shapes such as `2x2,3x3`.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<String>,
        /// Explicit interaction times (µs).
        #[arg(long = "t-us", value_delimiter = ',')]
        t_us: Vec<f64>,
    },
    /// Exact spin-echo dynamics of a small array.
    EdEvolve {
        #[arg(long = "t-us", value_delimiter = ',')]
        t_us: Vec<f64>,
        #[arg(long)]
        rows: Option<u32>,
        #[arg(long)]
        cols: Option<u32>,
        /// Quadrature angle of an explicit readout (degrees).
        #[arg(long)]
        alpha_deg: Option<f64>,
        #[arg(long)]
        save_state: bool,
    },
    /// Generate synthetic two-ensemble clock records and their Allan curves.
    SimulateClock {
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long)]
        n_shots: Option<usize>,
        #[arg(long)]
        n_atoms: Option<u32>,
        /// Squeezed-state noise model `ZETA0,ZETA1`.
        #[arg(long, value_delimiter = ',')]
        zeta: Vec<f64>,
    },
    /// Overlapping Allan deviation of a record.
    Allan {
        #[arg(long = "in", value_name = "RECORD")]
        input: Option<PathBuf>,
        #[arg(long)]
        axis: Option<AxisArg>,
    },
    /// Maximum-likelihood differential phase with bootstrap calibration.
    EllipseFit {
        #[arg(long)]
        cal: Option<PathBuf>,
        #[arg(long)]
        meas: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelArg>,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Fisher information of the coherent-state ellipse measurement.
    Fisher {
        #[arg(long = "phi-deg", value_delimiter = ',', allow_negative_numbers = true)]
        phi_deg: Vec<f64>,
    },
    /// Re-run a manifest and check its outputs are reproduced exactly.
    Replay { manifest: PathBuf },
}

fn enum_name<T: ValueEnum>(v: T) -> Value {
    Value::String(v.to_possible_value().expect("named variant").get_name().to_string())
}

fn path_value(p: &Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FitPotential { .. } => "fit-potential",
            Command::ScanSqueezing { .. } => "scan-squeezing",
            Command::EdEvolve { .. } => "ed-evolve",
            Command::SimulateClock { .. } => "simulate-clock",
            Command::Allan { .. } => "allan",
            Command::EllipseFit { .. } => "ellipse-fit",
            Command::Fisher { .. } => "fisher",
            Command::Replay { .. } => "replay",
        }
    }

    /// Config overrides implied by the command's own flags.
    fn overrides(&self) -> Result<Vec<(String, Value)>> {
        let mut o: Vec<(String, Value)> = Vec::new();
        let mut put = |k: &str, v: Value| o.push((k.to_string(), v));
        match self {
            Command::FitPotential { data } => {
                if let Some(p) = data {
                    put("inputs.data", path_value(p));
                }
            }
            Command::ScanSqueezing { method, sizes, t_us } => {
                if let Some(m) = method {
                    put("scan.method", enum_name(*m));
                }
                if !sizes.is_empty() {
                    let parsed = sizes.iter().map(|s| parse_size(s)).collect::<Result<Vec<_>>>()?;
                    put("scan.sizes", serde_json::to_value(parsed)?);
                }
                if !t_us.is_empty() {
                    put("scan.t_int_us", serde_json::to_value(t_us)?);
                }
            }
            Command::EdEvolve { t_us, rows, cols, alpha_deg, save_state } => {
                if !t_us.is_empty() {
                    put("sequence.t_int_us", serde_json::to_value(t_us)?);
                }
                if let Some(r) = rows {
                    put("geometry.rows", (*r).into());
                }
                if let Some(c) = cols {
                    put("geometry.cols", (*c).into());
                }
                if let Some(a) = alpha_deg {
                    put("sequence.alpha_deg", (*a).into());
                }
                if *save_state {
                    put("sequence.save_state", true.into());
                }
            }
            Command::SimulateClock { mode, n_shots, n_atoms, zeta } => {
                if let Some(m) = mode {
                    put("sampler.mode", enum_name(*m));
                }
                if let Some(n) = n_shots {
                    put("sampler.run.n_shots", (*n).into());
                }
                if let Some(n) = n_atoms {
                    put("sampler.run.n_atoms", (*n).into());
                }
                if !zeta.is_empty() {
                    if zeta.len() != 2 {
                        return Err(Error::Config { path: "sampler.zeta".into(), message: "expected ZETA0,ZETA1".into() });
                    }
                    put("sampler.zeta", serde_json::to_value(zeta)?);
                }
            }
            Command::Allan { input, axis } => {
                if let Some(p) = input {
                    put("inputs.record", path_value(p));
                }
                if let Some(a) = axis {
                    put("analysis.allan.axis", enum_name(*a));
                }
            }
            Command::EllipseFit { cal, meas, model, bootstrap } => {
                if let Some(p) = cal {
                    put("inputs.cal", path_value(p));
                }
                if let Some(p) = meas {
                    put("inputs.meas", path_value(p));
                }
                if let Some(m) = model {
                    put("analysis.ellipse.model", enum_name(*m));
                }
                if let Some(b) = bootstrap {
                    put("analysis.ellipse.n_bootstrap", (*b).into());
                }
            }
            Command::Fisher { phi_deg } => {
                if !phi_deg.is_empty() {
                    put("analysis.fisher.phi_deg", serde_json::to_value(phi_deg)?);
                }
            }
            Command::Replay { .. } => {}
        }
        Ok(o)
    }
}

fn parse_size(s: &str) -> Result<[u32; 2]> {
    let bad = || Error::Config { path: "scan.sizes".into(), message: format!("size `{s}` is not of the form ROWSxCOLS") };
    let (r, c) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    Ok([r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?])
}

/// Load the base document: a config file, the `config` of a manifest, or `{}`.
fn load_document(path: Option<&Path>) -> Result<Value> {
    let Some(p) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let v: Value = serde_json::from_slice(&fs::read(p)?)?;
    match v {
        Value::Object(mut m) if m.contains_key("config_sha256") && m.contains_key("config") => Ok(m.remove("config").expect("present")),
        Value::Object(_) => Ok(v),
        _ => Err(Error::Config { path: String::new(), message: "configuration must be a JSON object".into() }),
    }
}

/// Resolve the configuration for `cmd` from the global flags.
pub fn resolve_config(global: &GlobalArgs, cmd: &Command) -> Result<RunConfig> {
    let mut doc = load_document(global.config.as_deref())?;
    if let Some(s) = global.seed {
        set_path(&mut doc, "seed", s.into())?;
    }
    let overrides = cmd.overrides()?;
    if overrides.iter().any(|(k, _)| k.starts_with("geometry.")) && doc.get("geometry").is_none_or(Value::is_null) {
        let g = RunConfig::default().geometry_or_default();
        set_path(&mut doc, "geometry", serde_json::to_value(g)?)?;
    }
    for (k, v) in overrides {
        set_path(&mut doc, &k, v)?;
    }
    for s in &global.set {
        let (k, v) = parse_override(s)?;
        set_path(&mut doc, &k, v)?;
    }
    RunConfig::from_value(doc)
}

fn output_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Run `command` with a resolved configuration, writing outputs and the
/// manifest into `out`.
pub fn execute(command: &str, cfg: &RunConfig, out: &Path, exec: Exec) -> Result<(Manifest, Value)> {
    fs::create_dir_all(out)?;
    let o = match command {
        "fit-potential" => commands::fit_potential(cfg, out)?,
        "scan-squeezing" => commands::scan_squeezing(cfg, out, exec)?,
        "ed-evolve" => commands::ed_evolve(cfg, out, exec)?,
        "simulate-clock" => commands::simulate_clock(cfg, out, exec)?,
        "allan" => commands::allan(cfg, out)?,
        "ellipse-fit" => commands::ellipse_fit(cfg, out, exec)?,
        "fisher" => commands::fisher(cfg, out)?,
        other => return Err(Error::Config { path: "command".into(), message: format!("unknown command `{other}`") }),
    };
    let m = Manifest::new(command, cfg, out, &o.outputs)?;
    m.write(out)?;
    Ok((m, o.summary))
}

/// Re-execute a manifest into `out` and compare output digests.
pub fn replay(manifest: &Path, out: &Path, exec: Exec) -> Result<Manifest> {
    let old = Manifest::read(manifest)?;
    let cfg = RunConfig::from_value(old.config.clone())?;
    for d in &old.inputs {
        if file_digest(&d.path)? != d.sha256 {
            return Err(Error::invalid(format!("input {} changed since the manifest was written", d.path.display())));
        }
    }
    let (new, _) = execute(&old.command, &cfg, out, exec)?;
    if new.config_sha256 != old.config_sha256 {
        return Err(Error::Numerical("replayed configuration hashes differently".into()));
    }
    let diff = old.differing_outputs(&new);
    if !diff.is_empty() {
        let names: Vec<String> = diff.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::Numerical(format!("replay differs in {}", names.join(", "))));
    }
    Ok(new)
}

/// Print to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Entry point behind the binary.
pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if g.jobs > 0 {
        crate::exec::set_max_threads(g.jobs);
    }
    let exec = if g.sequential { Exec::Sequential } else { Exec::Parallel };
    if let Command::Replay { manifest } = &cli.command {
        let out = g.out.clone().unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("replay"));
        let m = replay(manifest, &out, exec)?;
        emit(&format!("replay of `{}` reproduced {} output files in {}", m.command, m.outputs.len(), out.display()));
        return Ok(());
    }
    let cfg = resolve_config(g, &cli.command)?;
    let out = output_dir(g.out.as_deref(), &cfg);
    let (_, summary) = execute(cli.command.name(), &cfg, &out, exec)?;
    emit(&serde_json::to_string_pretty(&summary)?);
    log::info!("outputs and manifest written to {}", out.display());
    Ok(())
}

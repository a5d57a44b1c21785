use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{AllanQuantity, EllipseNoiseModel, RunConfig, ScanMethod};
use crate::ellipse::{
    calibrated_pipeline, fisher_information_css, split_indices, EllipseModel, FitOptions, FreeMask, PipelineOptions,
};
use crate::exact_diag::{check_cap, run_sequence, run_sequence_scan, PulseSequence, SequenceOptions};
use crate::geometry::{ArrayGeometry, SubarrayLayout};
use crate::metrology::{to_db, QuadratureCurve, ALPHA_GRID};
use crate::potentials::{fit_soft_core, PairOscillationData};
use crate::record::{MeasurementMode, MeasurementRecord};
use crate::sampler::{
    sample_css, sample_interleaved, sample_stability_interleaved, sample_stability_run, LaserPhaseMode, NoiseSpec,
};
use crate::stability::{dz_from_record, fit_white_noise, freq_series, overlapping_adev, AllanCurve};
use crate::weak_dressing::{
    couplings_from_potential, default_scan_sizes, log_time_grid, quadrature_curve, scan_xi_vs_n,
    write_scan_csv, InteractionPhases, ScanOptions, ScanRow,
};
use crate::{Error, Exec, Result};

/// Files written by a command (relative to the output directory) and a
/// short machine-readable summary for stdout.
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub summary: Value,
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Self {
        Writer { dir, written: Vec::new() }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(PathBuf::from(name));
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.path(name);
        fs::write(p, serde_json::to_string_pretty(v)? + "\n")?;
        Ok(())
    }

    fn record(&mut self, name: &str, r: &MeasurementRecord) -> Result<()> {
        let p = self.path(name);
        r.write_csv(&p)?;
        self.written.push(PathBuf::from(format!("{name}.meta.json")));
        Ok(())
    }

    fn finish(self, summary: Value) -> Outcome {
        Outcome { outputs: self.written, summary }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config { path: format!("inputs.{key}"), message: "input file not given".into() })
}

pub fn fit_potential(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let data = PairOscillationData::read_csv(required(&cfg.inputs.data, "data")?)?;
    let fit = fit_soft_core(&data)?;
    let report = json!({
        "v0_khz": fit.v0_hz * 1e-3,
        "v0_err_khz": fit.v0_err() * 1e-3,
        "rb_lat": fit.rb_lat,
        "rb_err_lat": fit.rb_err(),
        "chi2": fit.chi2,
        "dof": fit.dof,
        "fit": fit,
    });
    let mut w = Writer::new(out);
    w.json("fit_potential.json", &report)?;
    Ok(w.finish(report))
}

fn sequence_options(cfg: &RunConfig, exec: Exec) -> SequenceOptions {
    SequenceOptions {
        ramp: cfg.sequence.ramp,
        finite_clock_pulses: cfg.sequence.finite_clock_pulses,
        integrator: cfg.sequence.integrator,
        exec,
        ..SequenceOptions::default()
    }
}

fn write_alpha_curves(path: &Path, curves: &[(&ScanRow, QuadratureCurve)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["N", "rows", "cols", "alpha_deg", "var_ratio", "var_ratio_db"])?;
    for (row, c) in curves {
        for k in 0..ALPHA_GRID {
            let a = 180.0 * k as f64 / (ALPHA_GRID - 1) as f64;
            let v = c.at(a.to_radians());
            w.write_record([
                row.n.to_string(),
                row.rows.to_string(),
                row.cols.to_string(),
                a.to_string(),
                v.to_string(),
                to_db(v).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn scan_squeezing(cfg: &RunConfig, out: &Path, exec: Exec) -> Result<Outcome> {
    let sc = &cfg.scan;
    let sizes: Vec<(u32, u32)> = match (&sc.sizes, sc.method) {
        (Some(s), _) => s.iter().map(|&[r, c]| (r, c)).collect(),
        (None, ScanMethod::Weak) => default_scan_sizes(),
        (None, ScanMethod::Ed) => vec![(1, 2), (1, 3), (2, 2), (2, 3), (3, 3)],
    };
    if sizes.is_empty() || sizes.iter().any(|&(r, c)| r == 0 || c == 0) {
        return Err(Error::Config { path: "scan.sizes".into(), message: "sizes must be nonempty with positive extents".into() });
    }
    let t_grid: Vec<f64> = match &sc.t_int_us {
        Some(t) => t.iter().map(|t| t * 1e-6).collect(),
        None => {
            if !(sc.t_min_us > 0.0 && sc.t_max_us > sc.t_min_us) {
                return Err(Error::Config { path: "scan.t_min_us".into(), message: "need 0 < t_min_us < t_max_us".into() });
            }
            log_time_grid(sc.t_min_us * 1e-6, sc.t_max_us * 1e-6, sc.n_times)
        }
    };
    let lattice = cfg.lattice_constant();
    let (rows, curves): (Vec<ScanRow>, Vec<QuadratureCurve>) = match sc.method {
        ScanMethod::Weak => {
            let v = cfg.dressing.potential(lattice)?;
            let opts = ScanOptions { spacing: sc.spacing, lattice_constant: lattice, refine: sc.refine, exec };
            let rows = scan_xi_vs_n(&sizes, &v, &t_grid, opts)?;
            let curves = rows
                .iter()
                .map(|r| {
                    let g = ArrayGeometry::build_subarrays_unchecked_gap(SubarrayLayout::single(r.rows, r.cols, sc.spacing), lattice)?;
                    Ok(quadrature_curve(&InteractionPhases::new(&couplings_from_potential(&g, &v), r.t_int_us * 1e-6)))
                })
                .collect::<Result<_>>()?;
            (rows, curves)
        }
        ScanMethod::Ed => {
            // refuse before any work is done
            for &(r, c) in &sizes {
                check_cap((r * c) as usize)?;
            }
            let p = cfg.dressing.params()?;
            let mut rows = Vec::new();
            let mut curves = Vec::new();
            for &(r, c) in &sizes {
                let g = ArrayGeometry::build_subarrays_unchecked_gap(SubarrayLayout::single(r, c, sc.spacing), lattice)?;
                let runs = run_sequence_scan(&g, &p, &t_grid, sequence_options(cfg, exec))?;
                let (best, run) = runs
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.squeezing.xi_w_sq.total_cmp(&b.1.squeezing.xi_w_sq))
                    .expect("nonempty grid");
                for w in &run.warnings {
                    log::warn!("{r}×{c}: {w}");
                }
                let s = &run.squeezing;
                rows.push(ScanRow {
                    n: g.len(),
                    rows: r,
                    cols: c,
                    t_int_us: run.t_int * 1e6,
                    alpha_opt_deg: s.alpha_opt.to_degrees(),
                    contrast: s.contrast,
                    var_ratio_min: s.var_ratio_min,
                    xi_w_sq: s.xi_w_sq,
                    xi_db: s.xi_db(),
                    interior: best > 0 && best + 1 < t_grid.len(),
                });
                curves.push(s.curve);
            }
            (rows, curves)
        }
    };
    let mut w = Writer::new(out);
    write_scan_csv(&rows, w.path("scan.csv"))?;
    let paired: Vec<_> = rows.iter().zip(curves).collect();
    write_alpha_curves(&w.path("alpha_curves.csv"), &paired)?;
    let summary = json!({
        "method": sc.method,
        "rows": rows.iter().map(|r| json!({"N": r.n, "t_int_us": r.t_int_us, "xi_db": r.xi_db})).collect::<Vec<_>>(),
    });
    Ok(w.finish(summary))
}

pub fn ed_evolve(cfg: &RunConfig, out: &Path, exec: Exec) -> Result<Outcome> {
    let g = cfg.geometry_or_default().build()?;
    check_cap(g.len())?;
    let p = cfg.dressing.params()?;
    let ts: Vec<f64> = cfg.sequence.t_int_us.iter().map(|t| t * 1e-6).collect();
    if ts.is_empty() {
        return Err(Error::Config { path: "sequence.t_int_us".into(), message: "no interaction times".into() });
    }
    let opts = sequence_options(cfg, exec);
    let runs = match cfg.sequence.alpha_deg {
        Some(a) => ts
            .iter()
            .map(|&t| run_sequence(&g, &p, &PulseSequence::spin_echo_with_readout(t, a.to_radians()), opts))
            .collect::<Result<Vec<_>>>()?,
        None => run_sequence_scan(&g, &p, &ts, opts)?,
    };
    let mut w = Writer::new(out);
    {
        let mut c = csv::Writer::from_path(w.path("ed_runs.csv"))?;
        c.write_record([
            "t_int_us",
            "contrast",
            "alpha_opt_deg",
            "var_ratio_min",
            "xi_w_sq",
            "xi_db",
            "rydberg_population",
            "max_rydberg_population",
            "readout_var_ratio",
        ])?;
        for r in &runs {
            let s = &r.squeezing;
            c.write_record([
                (r.t_int * 1e6).to_string(),
                s.contrast.to_string(),
                s.alpha_opt.to_degrees().to_string(),
                s.var_ratio_min.to_string(),
                s.xi_w_sq.to_string(),
                s.xi_db().to_string(),
                r.rydberg_population.to_string(),
                r.max_rydberg_population.to_string(),
                r.readout.as_ref().map_or(String::new(), |x| x.var_ratio.to_string()),
            ])?;
        }
        c.flush()?;
    }
    w.json("ed_runs.json", &runs)?;
    if cfg.sequence.save_state {
        for (i, r) in runs.iter().enumerate() {
            r.final_state.write_binary(w.path(&format!("state_{i}.bin")))?;
        }
    }
    for r in &runs {
        for msg in &r.warnings {
            log::warn!("t = {:.3} µs: {msg}", r.t_int * 1e6);
        }
    }
    let summary = json!({
        "n_atoms": g.len(),
        "runs": runs.iter().map(|r| json!({"t_int_us": r.t_int * 1e6, "xi_db": r.squeezing.xi_db(), "contrast": r.squeezing.contrast})).collect::<Vec<_>>(),
    });
    Ok(w.finish(summary))
}

/// Allan curve of a record per the analysis settings.
pub fn allan_of_record(cfg: &RunConfig, r: &MeasurementRecord) -> Result<AllanCurve> {
    let a = &cfg.analysis.allan;
    let dz = dz_from_record(r)?;
    let interval = r.meta.cycle_time;
    let contrast = a.contrast.unwrap_or(cfg.sampler.run.contrast);
    let y = match a.quantity {
        AllanQuantity::Dz => dz,
        AllanQuantity::Angular => freq_series(&dz, contrast, r.t_dark, interval)?.values,
        AllanQuantity::Fractional => freq_series(&dz, contrast, r.t_dark, interval)?.fractional(a.nu0_hz),
    };
    Ok(overlapping_adev(&y, interval, a.axis, a.factors)?.with_cycle_time(interval))
}

fn allan_summary(c: &AllanCurve) -> Value {
    match fit_white_noise(c) {
        Ok(f) => serde_json::to_value(f).expect("fit serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn simulate_clock(cfg: &RunConfig, out: &Path, exec: Exec) -> Result<Outcome> {
    let seed = cfg.require_seed()?;
    let s = &cfg.sampler;
    let run = s.run;
    run.validate()?;
    let zeta = s.zeta.map(|[a, b]| (a, b));
    let sss_model = |phi: f64, z: (f64, f64)| EllipseModel {
        phi,
        contrast: run.contrast,
        y0: run.y0,
        zeta0: z.0,
        zeta1: z.1,
        n_atoms: run.n_atoms,
    };
    let with_run_meta = |mut r: MeasurementRecord| {
        r.t_dark = run.t_dark;
        r.meta.cycle_time = run.cycle_time;
        r
    };
    let (css, sss) = match s.mode {
        MeasurementMode::Stability => match zeta {
            Some(z) => {
                let (c, q) = sample_stability_interleaved(&run, z, seed)?;
                (c, Some(q))
            }
            None => (sample_stability_run(&run, None, seed)?, None),
        },
        mode => {
            let (law, phi) = if mode == MeasurementMode::Quadrature {
                (LaserPhaseMode::Fixed { theta: FRAC_PI_2 }, run.differential_phase())
            } else {
                (LaserPhaseMode::RandomUniform, s.phi_deg.to_radians())
            };
            let noise = NoiseSpec { y_a: run.y0 - 0.5, y_b: run.y0 - 0.5, ..NoiseSpec::new(law, phi, run.contrast) };
            match zeta {
                Some(z) => {
                    let (c, q) = sample_interleaved(&noise, &sss_model(phi, z), run.n_shots, seed, exec)?;
                    (with_run_meta(c), Some(with_run_meta(q)))
                }
                None => (with_run_meta(sample_css(run.n_atoms, &noise, run.n_shots, seed, exec)?), None),
            }
        }
    };
    let mut w = Writer::new(out);
    w.record("css.csv", &css)?;
    if let Some(q) = &sss {
        w.record("sss.csv", q)?;
    }
    let mut summary = json!({ "mode": s.mode, "n_shots": css.len() });
    if s.mode != MeasurementMode::Ellipse {
        let cc = allan_of_record(cfg, &css)?;
        cc.write_csv(w.path("allan_css.csv"))?;
        summary["allan_css"] = allan_summary(&cc);
        if let Some(q) = &sss {
            let cq = allan_of_record(cfg, q)?;
            cq.write_csv(w.path("allan_sss.csv"))?;
            summary["allan_sss"] = allan_summary(&cq);
            summary["variance_gain_db_m1"] = json!(crate::ellipse::variance_gain_db(&cc, &cq, 1));
        }
    }
    w.json("summary.json", &summary)?;
    Ok(w.finish(summary))
}

pub fn allan(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let r = MeasurementRecord::read_csv(required(&cfg.inputs.record, "record")?)?;
    let c = allan_of_record(cfg, &r)?;
    let mut w = Writer::new(out);
    c.write_csv(w.path("allan.csv"))?;
    let summary = json!({ "points": c.points.len(), "white_noise_fit": allan_summary(&c) });
    w.json("allan_fit.json", &summary)?;
    Ok(w.finish(summary))
}

pub fn ellipse_fit(cfg: &RunConfig, out: &Path, exec: Exec) -> Result<Outcome> {
    let seed = cfg.require_seed()?;
    let e = &cfg.analysis.ellipse;
    let meas = MeasurementRecord::read_csv(required(&cfg.inputs.meas, "meas")?)?;
    let (cal, meas) = match &cfg.inputs.cal {
        Some(p) => (MeasurementRecord::read_csv(p)?, meas),
        None => {
            let (a, b) = split_indices(meas.len(), seed);
            (meas.select(&a), meas.select(&b))
        }
    };
    let n_atoms = cal
        .uniform_atom_number()
        .ok_or_else(|| Error::invalid("ellipse fitting needs a fixed atom number per ensemble"))?;
    let (free, zeta) = match e.model {
        EllipseNoiseModel::Css => (FreeMask::css(), (1.0, 1.0)),
        EllipseNoiseModel::Sss => (FreeMask::default(), (e.init.zeta0, e.init.zeta1)),
    };
    let init = EllipseModel {
        phi: e.init.phi_deg.to_radians(),
        contrast: e.init.contrast,
        y0: e.init.y0,
        zeta0: zeta.0,
        zeta1: zeta.1,
        n_atoms,
    };
    let opts = PipelineOptions {
        n_bootstrap: e.n_bootstrap,
        fit: FitOptions { nodes: e.nodes, ..FitOptions::default() },
        free,
        loo: e.loo,
        factors: e.factors,
        exec,
    };
    let res = calibrated_pipeline(&cal, &meas, &init, seed, opts)?;
    let mut w = Writer::new(out);
    {
        let mut c = csv::Writer::from_path(w.path("jackknife.csv"))?;
        c.write_record(["shot", "phi_loo_rad", "phi_jk_rad"])?;
        for (i, (l, j)) in res.jackknife.phi_loo.iter().zip(&res.jackknife.phi_jk).enumerate() {
            c.write_record([i.to_string(), l.to_string(), j.to_string()])?;
        }
        c.flush()?;
    }
    res.allan.write_csv(w.path("allan_jackknife.csv"))?;
    let summary = json!({
        "model": e.model,
        "phi_deg": res.phi_hat.to_degrees(),
        "stat_err_deg": res.stat_err.to_degrees(),
        "calib_err_deg": res.calib_err.to_degrees(),
        "total_err_deg": res.total_err.to_degrees(),
        "calibration": res.calibration.model,
    });
    let mut report = summary.clone();
    report["pipeline"] = serde_json::to_value(&res)?;
    w.json("ellipse_fit.json", &report)?;
    Ok(w.finish(summary))
}

pub fn fisher(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let f = &cfg.analysis.fisher;
    let m = EllipseModel::css(f.n_atoms, 0.0, f.contrast, f.y0);
    m.validate()?;
    let rows: Vec<Value> = f
        .phi_deg
        .iter()
        .map(|&d| {
            let r = fisher_information_css(&m, d.to_radians(), f.nodes)?;
            Ok(json!({
                "phi_deg": d,
                "information": r.information,
                "crb_rad_per_shot": r.information.powf(-0.5),
                "richardson_rel_change": r.richardson_rel_change,
            }))
        })
        .collect::<Result<_>>()?;
    let mut w = Writer::new(out);
    {
        let mut c = csv::Writer::from_path(w.path("fisher.csv"))?;
        c.write_record(["phi_deg", "information", "crb_rad_per_shot"])?;
        for r in &rows {
            c.write_record([r["phi_deg"].to_string(), r["information"].to_string(), r["crb_rad_per_shot"].to_string()])?;
        }
        c.flush()?;
    }
    let summary = json!({ "rows": rows });
    w.json("fisher.json", &summary)?;
    Ok(w.finish(summary))
}

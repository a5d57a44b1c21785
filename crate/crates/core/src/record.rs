//! Per-shot measurement records shared by the sampler and the analysis code.
//!
//! On disk a record is a CSV with header
//! `shot_index,p_a,p_b,n_a,n_b,theta_mode,t_dark_s` plus an optional JSON
//! sidecar (`<file>.meta.json`) holding the remaining metadata. Records from
//! real experiments only need the CSV.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::DEFAULT_CYCLE_TIME;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    Quadrature,
    #[default]
    Stability,
    Ellipse,
}

/// How the common atom-laser phase θ was drawn for each shot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    #[default]
    Fixed,
    White,
    RandomUniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateLabel {
    Css,
    Sss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub p_a: f64,
    pub p_b: f64,
    pub n_a: u32,
    pub n_b: u32,
}

impl Shot {
    pub fn from_counts(k_a: u32, k_b: u32, n_a: u32, n_b: u32) -> Self {
        Shot { p_a: k_a as f64 / n_a as f64, p_b: k_b as f64 / n_b as f64, n_a, n_b }
    }

    pub fn k_a(&self) -> u32 {
        (self.p_a * self.n_a as f64).round() as u32
    }

    pub fn k_b(&self) -> u32 {
        (self.p_b * self.n_b as f64).round() as u32
    }
}

/// Metadata stored next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecordMeta {
    pub mode: MeasurementMode,
    pub cycle_time: f64,
    pub phase_offset_deg: f64,
    pub label: Option<StateLabel>,
}

impl Default for RecordMeta {
    fn default() -> Self {
        RecordMeta { mode: MeasurementMode::default(), cycle_time: DEFAULT_CYCLE_TIME, phase_offset_deg: 0.0, label: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub shots: Vec<Shot>,
    pub theta_mode: ThetaMode,
    /// Ramsey dark time (s).
    pub t_dark: f64,
    pub meta: RecordMeta,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    shot_index: usize,
    p_a: f64,
    p_b: f64,
    n_a: u32,
    n_b: u32,
    theta_mode: ThetaMode,
    t_dark_s: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

impl MeasurementRecord {
    pub fn new(shots: Vec<Shot>, theta_mode: ThetaMode, t_dark: f64, meta: RecordMeta) -> Result<Self> {
        let r = MeasurementRecord { shots, theta_mode, t_dark, meta };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_dark >= 0.0 && self.t_dark.is_finite()) {
            return Err(Error::invalid("t_dark must be finite and ≥ 0"));
        }
        if !(self.meta.cycle_time > 0.0 && self.meta.cycle_time.is_finite()) {
            return Err(Error::invalid("cycle_time must be positive"));
        }
        for (i, s) in self.shots.iter().enumerate() {
            if s.n_a == 0 || s.n_b == 0 {
                return Err(Error::invalid(format!("shot {i}: atom numbers must be positive")));
            }
            if !((0.0..=1.0).contains(&s.p_a) && (0.0..=1.0).contains(&s.p_b)) {
                return Err(Error::invalid(format!("shot {i}: excitation fractions must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    /// Atom number when it is the same for every shot and both ensembles.
    pub fn uniform_atom_number(&self) -> Option<u32> {
        let n = self.shots.first()?.n_a;
        self.shots.iter().all(|s| s.n_a == n && s.n_b == n).then_some(n)
    }

    /// Keep the shots at `idx`, in the given order.
    pub fn select(&self, idx: &[usize]) -> MeasurementRecord {
        MeasurementRecord { shots: idx.iter().map(|&i| self.shots[i]).collect(), ..self.clone() }
    }

    /// Exchange the roles of ensembles A and B.
    pub fn swapped(&self) -> MeasurementRecord {
        let shots = self.shots.iter().map(|s| Shot { p_a: s.p_b, p_b: s.p_a, n_a: s.n_b, n_b: s.n_a }).collect();
        MeasurementRecord { shots, ..self.clone() }
    }

    /// Write the CSV and its metadata sidecar.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for (i, s) in self.shots.iter().enumerate() {
            w.serialize(CsvRow {
                shot_index: i,
                p_a: s.p_a,
                p_b: s.p_b,
                n_a: s.n_a,
                n_b: s.n_b,
                theta_mode: self.theta_mode,
                t_dark_s: self.t_dark,
            })?;
        }
        w.flush()?;
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    /// Read a record CSV. The sidecar is optional; without it metadata takes
    /// default values.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rd = csv::Reader::from_path(path)?;
        let mut shots = Vec::new();
        let mut theta_mode = None;
        let mut t_dark = None;
        let mut last: Option<usize> = None;
        for row in rd.deserialize() {
            let row: CsvRow = row?;
            if last.is_some_and(|l| row.shot_index <= l) {
                return Err(Error::invalid(format!("shot_index {} is not increasing", row.shot_index)));
            }
            last = Some(row.shot_index);
            if theta_mode.is_some_and(|m| m != row.theta_mode) || t_dark.is_some_and(|t| t != row.t_dark_s) {
                return Err(Error::invalid("theta_mode and t_dark_s must be constant within a record"));
            }
            theta_mode = Some(row.theta_mode);
            t_dark = Some(row.t_dark_s);
            shots.push(Shot { p_a: row.p_a, p_b: row.p_b, n_a: row.n_a, n_b: row.n_b });
        }
        if shots.is_empty() {
            return Err(Error::invalid(format!("{} contains no shots", path.display())));
        }
        let side = sidecar_path(path);
        let meta = if side.exists() { serde_json::from_str(&std::fs::read_to_string(side)?)? } else { RecordMeta::default() };
        MeasurementRecord::new(shots, theta_mode.unwrap_or_default(), t_dark.unwrap_or(0.0), meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MeasurementRecord {
        let shots = vec![Shot::from_counts(3, 4, 7, 7), Shot::from_counts(0, 7, 7, 7), Shot { p_a: 0.1, p_b: 1.0 / 3.0, n_a: 10, n_b: 3 }];
        let meta = RecordMeta { mode: MeasurementMode::Ellipse, label: Some(StateLabel::Sss), ..Default::default() };
        MeasurementRecord::new(shots, ThetaMode::RandomUniform, 0.0545, meta).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let r = sample();
        r.write_csv(&p).unwrap();
        assert_eq!(MeasurementRecord::read_csv(&p).unwrap(), r);
        std::fs::remove_file(sidecar_path(&p)).unwrap();
        let bare = MeasurementRecord::read_csv(&p).unwrap();
        assert_eq!(bare.shots, r.shots);
        assert_eq!(bare.meta, RecordMeta::default());
    }

    #[test]
    fn rejects_bad_records() {
        let meta = RecordMeta::default();
        assert!(MeasurementRecord::new(vec![Shot { p_a: 1.2, p_b: 0.0, n_a: 1, n_b: 1 }], ThetaMode::Fixed, 0.1, meta.clone()).is_err());
        assert!(MeasurementRecord::new(vec![Shot { p_a: 0.2, p_b: 0.0, n_a: 0, n_b: 1 }], ThetaMode::Fixed, 0.1, meta).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "shot_index,p_a,p_b,n_a,n_b,theta_mode,t_dark_s\n").unwrap();
        assert!(MeasurementRecord::read_csv(&p).is_err());
        std::fs::write(&p, "shot_index,p_a,p_b,n_a,n_b,theta_mode,t_dark_s\n1,0.5,0.5,2,2,fixed,0.1\n0,0.5,0.5,2,2,fixed,0.1\n").unwrap();
        assert!(MeasurementRecord::read_csv(&p).is_err());
    }

    #[test]
    fn counts_and_swap() {
        let r = sample();
        assert_eq!((r.shots[0].k_a(), r.shots[0].k_b()), (3, 4));
        assert_eq!(r.shots[2].k_b(), 1);
        assert_eq!(r.swapped().swapped(), r);
        assert_eq!(r.uniform_atom_number(), None);
        assert_eq!(r.select(&[0, 1]).uniform_atom_number(), Some(7));
    }
}

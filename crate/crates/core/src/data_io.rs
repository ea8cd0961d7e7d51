//! Patient data ingestion, synthetic series, and CSV persistence. Densities
//! are stored in cells·ml⁻¹; the per-μl unit exists only on input.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::analysis::RegressionFit;
use crate::error::{Error, Result};
use crate::fitting::{FitResult, ModelKind};
use crate::ode::{simulate_ode_with, OdeSimConfig};
use crate::params::{ModelParams, HOURS_PER_DAY, UL_PER_ML};
use crate::pde::{simulate_pde_with, AgeMesh, PdeSimConfig, RuptureFunction};
use crate::state::{OdeState, PatientSeries, PdeState, Sample, Trajectory};

pub const PATIENT_HEADER: [&str; 2] = ["day", "gametocytes_per_ml"];
pub const TRAJECTORY_HEADER: [&str; 6] = [
    "t_hours",
    "gametocytes",
    "merozoites",
    "parasitemia",
    "total_prbc",
    "total_urbc",
];
pub const FIT_HEADER: [&str; 7] = ["patient_id", "alpha_g", "m0", "mu_g", "k_opt", "sse", "converged"];
pub const REGRESSION_HEADER: [&str; 14] = [
    "patient_id",
    "log10_k1",
    "se_log10_k1",
    "theta1",
    "se_theta1",
    "log10_k2",
    "se_log10_k2",
    "theta2",
    "se_theta2",
    "t0_days",
    "r2_first",
    "r2_second",
    "lag_days",
    "sse",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityUnit {
    #[default]
    PerMl,
    PerUl,
}

impl DensityUnit {
    /// Factor taking a value in this unit to cells·ml⁻¹.
    pub fn to_per_ml(self) -> f64 {
        match self {
            DensityUnit::PerMl => 1.0,
            DensityUnit::PerUl => UL_PER_ML,
        }
    }
}

impl FromStr for DensityUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cells/ml" | "ml" | "per_ml" => Ok(DensityUnit::PerMl),
            "cells/μl" | "cells/µl" | "cells/ul" | "ul" | "μl" | "µl" | "per_ul" => Ok(DensityUnit::PerUl),
            other => Err(Error::param(
                "units",
                format!("expected cells/ml or cells/μl, got {other:?}"),
            )),
        }
    }
}

impl fmt::Display for DensityUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DensityUnit::PerMl => "cells/ml",
            DensityUnit::PerUl => "cells/μl",
        })
    }
}

fn data_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a `day,gametocytes_per_ml` file. A `gametocytes_per_ul` column is
/// also accepted and scaled to per ml. The patient id is the file stem.
pub fn load_patient_csv(path: &Path) -> Result<PatientSeries> {
    load_patient_csv_as(path, DensityUnit::PerMl)
}

/// Like [`load_patient_csv`], treating the density column as `unit` unless
/// its header names the unit explicitly.
pub fn load_patient_csv_as(path: &Path, unit: DensityUnit) -> Result<PatientSeries> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "patient".into());
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let unit = match (header.get(0), header.get(1), header.len()) {
        (Some("day"), Some("gametocytes_per_ml"), 2) => unit,
        (Some("day"), Some("gametocytes_per_ul"), 2) => DensityUnit::PerUl,
        _ => {
            return Err(parse_err(
                path,
                1,
                format!(
                    "expected header `day,gametocytes_per_ml`, found `{}`",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ))
        }
    };
    let scale = unit.to_per_ml();
    let mut days: Vec<u32> = Vec::new();
    let mut density = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let day: u32 = record[0].parse().map_err(|_| {
            parse_err(
                path,
                line,
                format!("day {:?} is not a non-negative integer", &record[0]),
            )
        })?;
        let g: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("density {:?} is not a number", &record[1])))?;
        if !g.is_finite() || g < 0.0 {
            return Err(parse_err(path, line, format!("negative or non-finite density {g}")));
        }
        if let Some(&prev) = days.last() {
            if day == prev {
                return Err(parse_err(path, line, format!("duplicate day {day}")));
            }
            if day < prev {
                return Err(parse_err(path, line, format!("day {day} follows day {prev}")));
            }
        }
        days.push(day);
        density.push(g * scale);
    }
    PatientSeries::new(id, days, density)
}

/// Key–value listing of patient files.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub patients: Vec<(String, PathBuf)>,
    pub units: DensityUnit,
    pub source: String,
}

impl DatasetManifest {
    /// Parses `key = value` lines: `units`, `source`, and `patient.<id> = <file>`.
    /// Relative files resolve against `base_dir`. `#` starts a comment.
    pub fn parse(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let mut manifest = DatasetManifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(origin, line_no, format!("expected `key = value`, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(id) = key.strip_prefix("patient.") {
                if id.is_empty() {
                    return Err(parse_err(origin, line_no, "empty patient id"));
                }
                if manifest.patients.iter().any(|(p, _)| p == id) {
                    return Err(parse_err(origin, line_no, format!("duplicate patient id {id:?}")));
                }
                manifest.patients.push((id.to_string(), base_dir.join(value)));
                continue;
            }
            match key {
                "units" => {
                    manifest.units = value
                        .parse()
                        .map_err(|e: Error| parse_err(origin, line_no, e.to_string()))?
                }
                "source" => manifest.source = value.to_string(),
                other => return Err(parse_err(origin, line_no, format!("unknown key {other:?}"))),
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base, path)
    }

    /// Loads every listed series, renamed to its manifest id.
    pub fn load_patients(&self) -> Result<Vec<PatientSeries>> {
        self.patients
            .iter()
            .map(|(id, file)| {
                let mut series = load_patient_csv_as(file, self.units)?;
                series.patient_id = id.clone();
                Ok(series)
            })
            .collect()
    }
}

/// Settings for [`generate_synthetic_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub patient_id: String,
    /// Observations on days 1..=days.
    pub days: u32,
    /// Integration step (hours), also the age step for the PDE model.
    pub dt: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            patient_id: "synthetic".into(),
            days: 40,
            dt: 0.05,
        }
    }
}

/// Daily gametocyte densities over 40 days with multiplicative lognormal
/// noise of coefficient of variation `noise_cv`.
pub fn generate_synthetic(params: &ModelParams, kind: ModelKind, noise_cv: f64, seed: u64) -> Result<PatientSeries> {
    generate_synthetic_with(params, kind, noise_cv, seed, &SyntheticConfig::default())
}

/// Noise factors have mean one: log-scale σ² = ln(1 + cv²), μ = −σ²/2.
/// The generator is ChaCha8 seeded from `seed`.
pub fn generate_synthetic_with(
    params: &ModelParams,
    kind: ModelKind,
    noise_cv: f64,
    seed: u64,
    config: &SyntheticConfig,
) -> Result<PatientSeries> {
    if !(0.0..1.0).contains(&noise_cv) {
        return Err(Error::param("noise_cv", format!("must lie in [0, 1), got {noise_cv}")));
    }
    let t_end = f64::from(config.days) * HOURS_PER_DAY;
    let mut daily = Vec::with_capacity(config.days as usize + 1);
    match kind {
        ModelKind::Ode => {
            let cfg = OdeSimConfig {
                dt: config.dt,
                t_end,
                record_every: HOURS_PER_DAY,
                clamp_negative: true,
            };
            simulate_ode_with(&OdeState::initial(params), &cfg, params, |_, s| daily.push(s.g))?;
        }
        ModelKind::Pde => {
            let mesh = AgeMesh::new(config.dt, params.dev_time + 6.0, params.dev_time)?;
            let cfg = PdeSimConfig {
                dt: config.dt,
                t_end,
                record_every: HOURS_PER_DAY,
            };
            let rf = RuptureFunction::from_params(params);
            simulate_pde_with(&PdeState::initial(params, mesh), &cfg, params, &rf, |_, s, _| {
                daily.push(s.g)
            })?;
        }
    }
    let days: Vec<u32> = (1..=config.days).collect();
    let mut density: Vec<f64> = days.iter().map(|&d| daily[d as usize]).collect();
    apply_noise(&mut density, noise_cv, seed)?;
    PatientSeries::new(config.patient_id.clone(), days, density)
}

/// Multiplies each value by an independent mean-one lognormal factor with
/// coefficient of variation `noise_cv`, drawn from ChaCha8 seeded by `seed`.
pub fn apply_noise(values: &mut [f64], noise_cv: f64, seed: u64) -> Result<()> {
    if !(0.0..1.0).contains(&noise_cv) {
        return Err(Error::param("noise_cv", format!("must lie in [0, 1), got {noise_cv}")));
    }
    if noise_cv == 0.0 {
        return Ok(());
    }
    let sigma = (1.0 + noise_cv * noise_cv).ln().sqrt();
    let noise = LogNormal::new(-0.5 * sigma * sigma, sigma).map_err(|e| Error::param("noise_cv", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in values.iter_mut() {
        *v *= noise.sample(&mut rng);
    }
    Ok(())
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `Display` for f64 prints the shortest string that parses back exactly.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    traj.validate()?;
    let rows = (0..traj.len()).map(|i| {
        let s = traj.sample(i);
        vec![
            num(s.t),
            num(s.gametocytes),
            num(s.merozoites),
            num(s.parasitemia),
            num(s.total_prbc),
            num(s.total_urbc),
        ]
    });
    write_atomic(path, &csv_bytes(&TRAJECTORY_HEADER, rows)?)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER.iter().copied()) {
        return Err(parse_err(path, 1, "unexpected trajectory header"));
    }
    let mut traj = Trajectory::default();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 6 {
            return Err(parse_err(
                path,
                line,
                format!("expected 6 fields, found {}", record.len()),
            ));
        }
        let mut v = [0.0; 6];
        for (slot, field) in v.iter_mut().zip(record.iter()) {
            *slot = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("{field:?} is not a number")))?;
        }
        traj.push(Sample {
            t: v[0],
            gametocytes: v[1],
            merozoites: v[2],
            parasitemia: v[3],
            total_prbc: v[4],
            total_urbc: v[5],
        });
    }
    traj.validate().map_err(|e| data_err(path, e.to_string()))?;
    Ok(traj)
}

/// Writes a patient series with the canonical per-ml header.
pub fn write_patient_csv(series: &PatientSeries, path: &Path) -> Result<()> {
    let rows = series
        .days
        .iter()
        .zip(&series.gametocyte_density)
        .map(|(d, g)| vec![d.to_string(), num(*g)]);
    write_atomic(path, &csv_bytes(&PATIENT_HEADER, rows)?)
}

pub fn write_fit_results_csv(results: &[FitResult], path: &Path) -> Result<()> {
    let rows = results.iter().map(|r| {
        vec![
            r.patient_id.clone(),
            num(r.alpha_g),
            num(r.m0),
            num(r.mu_g),
            r.k_opt.map_or_else(String::new, |k| k.to_string()),
            num(r.sse),
            r.converged.to_string(),
        ]
    });
    write_atomic(path, &csv_bytes(&FIT_HEADER, rows)?)
}

/// Standard errors are the OLS standard errors of each coefficient.
pub fn write_regression_csv(rows: &[(String, RegressionFit)], path: &Path) -> Result<()> {
    let rows = rows.iter().map(|(id, f)| {
        vec![
            id.clone(),
            num(f.log10_k1),
            num(f.se_log10_k1),
            num(f.theta1),
            num(f.se_theta1),
            num(f.log10_k2),
            num(f.se_log10_k2),
            num(f.theta2),
            num(f.se_theta2),
            num(f.t0),
            num(f.r2_first),
            num(f.r2_second),
            num(f.lag),
            num(f.sse),
        ]
    });
    write_atomic(path, &csv_bytes(&REGRESSION_HEADER, rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_params;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_patient_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "G54.csv", "day,gametocytes_per_ml\n1,0\n2,1500\n");
        let s = load_patient_csv(&p).unwrap();
        assert_eq!(s.patient_id, "G54");
        assert_eq!(s.days, vec![1, 2]);
        assert_eq!(s.gametocyte_density, vec![0.0, 1500.0]);
    }

    #[test]
    fn per_microlitre_is_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "day,gametocytes_per_ul\n1,2\n2,3.5\n");
        assert_eq!(load_patient_csv(&p).unwrap().gametocyte_density, vec![2000.0, 3500.0]);
        let q = write(dir.path(), "b.csv", "day,gametocytes_per_ml\n1,2\n");
        assert_eq!(
            load_patient_csv_as(&q, DensityUnit::PerUl).unwrap().gametocyte_density,
            vec![2000.0]
        );
    }

    #[test]
    fn rejects_bad_rows_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write(dir.path(), "d.csv", "day,gametocytes_per_ml\n1,0\n2,5\n2,6\n");
        let err = load_patient_csv(&dup).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        assert!(err.to_string().contains("duplicate day 2"));
        let neg = write(dir.path(), "n.csv", "day,gametocytes_per_ml\n1,-3\n");
        assert!(matches!(load_patient_csv(&neg), Err(Error::Parse { line: 2, .. })));
        let junk = write(dir.path(), "j.csv", "day,gametocytes_per_ml\n1,abc\n");
        assert!(matches!(load_patient_csv(&junk), Err(Error::Parse { line: 2, .. })));
        let back = write(dir.path(), "b.csv", "day,gametocytes_per_ml\n3,1\n2,1\n");
        assert!(load_patient_csv(&back).is_err());
        let hdr = write(dir.path(), "h.csv", "t,g\n1,1\n");
        assert!(matches!(load_patient_csv(&hdr), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn manifest_parsing() {
        let text = "# cohort\nunits = cells/μl\nsource = archive scan\npatient.A = a.csv\npatient.B = sub/b.csv\n";
        let m = DatasetManifest::parse(text, Path::new("/data"), Path::new("m.txt")).unwrap();
        assert_eq!(m.units, DensityUnit::PerUl);
        assert_eq!(m.source, "archive scan");
        assert_eq!(m.patients[1], ("B".to_string(), PathBuf::from("/data/sub/b.csv")));
        let dup = "patient.A = a.csv\npatient.A = b.csv\n";
        assert!(matches!(
            DatasetManifest::parse(dup, Path::new("."), Path::new("m")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(DatasetManifest::parse("units = cells/l\n", Path::new("."), Path::new("m")).is_err());
        assert!(DatasetManifest::parse("colour = red\n", Path::new("."), Path::new("m")).is_err());
    }

    #[test]
    fn synthetic_is_exact_without_noise_and_reproducible() {
        let p = default_params().with_equal_stages(10);
        let clean = generate_synthetic(&p, ModelKind::Ode, 0.0, 1).unwrap();
        let again = generate_synthetic(&p, ModelKind::Ode, 0.0, 99).unwrap();
        assert_eq!(clean, again);
        assert_eq!(clean.len(), 40);
        assert_eq!(clean.days[0], 1);
        let a = generate_synthetic(&p, ModelKind::Ode, 0.2, 7).unwrap();
        let b = generate_synthetic(&p, ModelKind::Ode, 0.2, 7).unwrap();
        let c = generate_synthetic(&p, ModelKind::Ode, 0.2, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(generate_synthetic(&p, ModelKind::Ode, 1.0, 7).is_err());
        let mut noisy = clean.gametocyte_density.clone();
        apply_noise(&mut noisy, 0.2, 7).unwrap();
        assert_eq!(noisy, a.gametocyte_density);
    }

    #[test]
    fn noise_has_the_requested_cv() {
        // 10⁴ replicates of a 40-day series; each day's spread is checked.
        let n = 10_000;
        let days = 40;
        let mut sum = vec![0.0; days];
        let mut sum2 = vec![0.0; days];
        for seed in 0..n {
            let mut v = vec![1.0; days];
            apply_noise(&mut v, 0.2, seed).unwrap();
            for (i, x) in v.iter().enumerate() {
                sum[i] += x;
                sum2[i] += x * x;
            }
        }
        for i in 0..days {
            let mean = sum[i] / n as f64;
            let var = (sum2[i] - n as f64 * mean * mean) / (n as f64 - 1.0);
            let cv = var.sqrt() / mean;
            assert!((cv - 0.2).abs() < 0.02, "day {}: cv {cv}", i + 1);
            assert!((mean - 1.0).abs() < 0.01, "day {}: mean {mean}", i + 1);
        }
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut traj = Trajectory::default();
        for i in 0..5 {
            let x = i as f64;
            traj.push(Sample {
                t: x * 0.1,
                gametocytes: 1.0 / 3.0 + x,
                merozoites: 1e-300 * x,
                parasitemia: 0.1 * x + 1e-17,
                total_prbc: std::f64::consts::PI * 1e9,
                total_urbc: 4.99e9 - x,
            });
        }
        let path = dir.path().join("t.csv");
        write_trajectory_csv(&traj, &path).unwrap();
        assert_eq!(read_trajectory_csv(&path).unwrap(), traj);

        let empty = dir.path().join("e.csv");
        write_trajectory_csv(&Trajectory::default(), &empty).unwrap();
        assert_eq!(fs::read_to_string(&empty).unwrap().lines().count(), 1);
        assert!(read_trajectory_csv(&empty).unwrap().is_empty());
    }

    #[test]
    fn fit_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.csv");
        let r = FitResult {
            patient_id: "S1300".into(),
            alpha_g: 1.347e-7,
            m0: 2.5e7,
            mu_g: 1.07e-3,
            k_opt: Some(52),
            sse: 0.5,
            converged: true,
            evaluations: 10,
        };
        write_fit_results_csv(&[r], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "patient_id,alpha_g,m0,mu_g,k_opt,sse,converged\nS1300,0.0000001347,25000000,0.00107,52,0.5,true\n"
        );
    }
}

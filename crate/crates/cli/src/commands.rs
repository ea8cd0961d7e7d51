//! One function per subcommand. Each returns the text for stdout; files go
//! under `--out` and are written atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plasmodyn::analysis::{fit_two_regime_with, r0_ode_breakdown, r0_pde_breakdown, R0Breakdown, RegressionOptions};
use plasmodyn::data_io::{
    generate_synthetic, read_trajectory_csv, write_atomic, write_fit_results_csv, write_regression_csv,
    write_trajectory_csv, DatasetManifest,
};
use plasmodyn::fitting::fit;
use plasmodyn::ode::chain_survival_with;
use plasmodyn::{
    pde_survival, simulate_ode, simulate_pde, AgeMesh, FitProblem, ModelKind, OdeSimConfig, OdeState, PdeSimConfig,
    PdeState, RuptureFunction, Trajectory,
};
use rayon::prelude::*;

use crate::config::{ConfigError, RunConfig};
use crate::CliError;

type Out = Result<String, CliError>;

const DEFAULT_ODE_DT: f64 = 0.05;
const DEFAULT_FIT_DT: f64 = 0.25;
const DEFAULT_COMPARE_K: [usize; 4] = [1, 10, 50, 100];
const DEFAULT_SURVIVAL_K: [usize; 3] = [1, 10, 50];

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Core(e.into()))?;
    Ok(dir)
}

fn stage_counts(cfg: &RunConfig, default: &[usize]) -> Vec<usize> {
    if cfg.k.is_empty() {
        default.to_vec()
    } else {
        cfg.k.clone()
    }
}

/// Hourly trajectory of one model. `k` replaces the chain's stage layout.
pub fn run_model(kind: ModelKind, k: Option<usize>, cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let mut params = cfg.params.clone();
    match kind {
        ModelKind::Ode => {
            if let Some(k) = k {
                params.set_equal_stages(k);
            }
            let sim = OdeSimConfig {
                dt: cfg.dt.unwrap_or(DEFAULT_ODE_DT),
                t_end: cfg.t_end,
                record_every: 1.0,
                clamp_negative: true,
            };
            Ok(simulate_ode(&OdeState::initial(&params), &sim, &params)?)
        }
        ModelKind::Pde => {
            let mesh = AgeMesh::new(cfg.da, params.dev_time + 6.0, params.dev_time)?;
            let sim = PdeSimConfig {
                dt: cfg.dt.unwrap_or(cfg.da),
                t_end: cfg.t_end,
                record_every: 1.0,
            };
            let rf = RuptureFunction::from_params(&params);
            Ok(simulate_pde(&PdeState::initial(&params, mesh), &sim, &params, &rf)?)
        }
    }
}

pub fn simulate(cfg: &RunConfig) -> Out {
    let kind = cfg.model.unwrap_or(ModelKind::Ode);
    let dir = out_dir(cfg)?;
    let runs: Vec<(Option<usize>, PathBuf)> = match kind {
        ModelKind::Ode => stage_counts(cfg, &[cfg.params.k_stages()])
            .into_iter()
            .map(|k| (Some(k), dir.join(format!("ode_k{k}.csv"))))
            .collect(),
        ModelKind::Pde => vec![(None, dir.join("pde.csv"))],
    };
    runs.par_iter()
        .map(|(k, path)| {
            let traj = run_model(kind, *k, cfg)?;
            write_trajectory_csv(&traj, path)?;
            Ok(())
        })
        .collect::<Result<Vec<()>, CliError>>()?;
    Ok(runs.iter().map(|(_, p)| format!("wrote {}\n", p.display())).collect())
}

pub fn fit_patients(cfg: &RunConfig) -> Out {
    let kind = cfg.model.unwrap_or(ModelKind::Ode);
    let patients = match (&cfg.data, cfg.noise) {
        (Some(manifest), _) => DatasetManifest::load(manifest)?.load_patients()?,
        (None, Some(cv)) => vec![generate_synthetic(&cfg.params, kind, cv, cfg.seed)?],
        (None, None) => {
            return Err(ConfigError("fit needs --data <manifest> or --noise <cv> for synthetic data".into()).into())
        }
    };
    let mut results = Vec::with_capacity(patients.len());
    for data in patients {
        let mut problem = FitProblem::new(data, kind, cfg.params.clone());
        problem.objective_scale = cfg.objective;
        problem.dt = cfg.dt.unwrap_or(DEFAULT_FIT_DT);
        if let (Some(&lo), Some(&hi)) = (cfg.k.iter().min(), cfg.k.iter().max()) {
            problem.k_range = (lo, hi);
        }
        log::info!("fitting {} ({kind})", problem.data.patient_id);
        results.push(fit(&problem)?);
    }
    let path = out_dir(cfg)?.join(format!("fit_{kind}.csv"));
    write_fit_results_csv(&results, &path)?;
    let mut text = String::from("patient_id,alpha_g,m0,mu_g,k_opt,sse,converged\n");
    for r in &results {
        let k = r.k_opt.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(
            text,
            "{},{:.4e},{:.4e},{:.4e},{k},{:.6e},{}",
            r.patient_id, r.alpha_g, r.m0, r.mu_g, r.sse, r.converged
        );
    }
    let _ = writeln!(text, "wrote {}", path.display());
    Ok(text)
}

/// `‖a − b‖₂ / ‖b‖₂` over the common prefix of both series.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let (num, den) = a
        .iter()
        .zip(b)
        .fold((0.0, 0.0), |(n, d), (x, y)| (n + (x - y) * (x - y), d + y * y));
    (num / den).sqrt()
}

pub fn compare(cfg: &RunConfig) -> Out {
    let ks = stage_counts(cfg, &DEFAULT_COMPARE_K);
    let pde = run_model(ModelKind::Pde, None, cfg)?;
    let rows = ks
        .par_iter()
        .map(|&k| {
            let ode = run_model(ModelKind::Ode, Some(k), cfg)?;
            Ok((
                k,
                relative_l2(&ode.gametocytes, &pde.gametocytes),
                relative_l2(&ode.parasitemia, &pde.parasitemia),
            ))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut text = String::from("k,rel_l2_gametocytes,rel_l2_parasitemia\n");
    for (k, g, p) in rows {
        let _ = writeln!(text, "{k},{g},{p}");
    }
    if let Some(path) = write_table(cfg, "compare.csv", &text)? {
        let _ = writeln!(text, "wrote {}", path.display());
    }
    Ok(text)
}

pub fn regress(cfg: &RunConfig) -> Out {
    let (label, traj) = match &cfg.trajectory {
        Some(path) => (stem(path), read_trajectory_csv(path)?),
        None => {
            let kind = cfg.model.unwrap_or(ModelKind::Pde);
            let k = cfg.k.first().copied();
            let label = match (kind, k) {
                (ModelKind::Ode, Some(k)) => format!("ode_k{k}"),
                _ => kind.to_string(),
            };
            (label, run_model(kind, k, cfg)?)
        }
    };
    let opts = RegressionOptions {
        lag: cfg.lag,
        ..RegressionOptions::default()
    };
    let f = fit_two_regime_with(&traj, &opts)?;
    let path = out_dir(cfg)?.join("regression.csv");
    write_regression_csv(&[(label.clone(), f)], &path)?;
    let mut text = String::new();
    let _ = writeln!(text, "id: {label}");
    let _ = writeln!(
        text,
        "first regime:  log10 k1 = {:.4} ± {:.4}, theta1 = {:.4} ± {:.4}, R² = {:.4} (n = {})",
        f.log10_k1, f.se_log10_k1, f.theta1, f.se_theta1, f.r2_first, f.n_first
    );
    let _ = writeln!(
        text,
        "second regime: log10 k2 = {:.4} ± {:.4}, theta2 = {:.4} ± {:.4}, R² = {:.4} (n = {})",
        f.log10_k2, f.se_log10_k2, f.theta2, f.se_theta2, f.r2_second, f.n_second
    );
    let _ = writeln!(text, "change point: T0 = {:.4} d, lag = {} d", f.t0, f.lag);
    let _ = writeln!(text, "wrote {}", path.display());
    Ok(text)
}

pub fn survival(cfg: &RunConfig) -> Out {
    let ks = stage_counts(cfg, &DEFAULT_SURVIVAL_K);
    let rf = RuptureFunction::from_params(&cfg.params);
    let ages: Vec<f64> = if cfg.at.is_empty() {
        let a_max = (cfg.params.dev_time + 6.0).floor() as usize;
        (0..=a_max).map(|a| a as f64).collect()
    } else {
        cfg.at.clone()
    };
    let mut text = String::from("age_hours");
    for k in &ks {
        let _ = write!(text, ",chain_k{k}");
    }
    text.push_str(",pde\n");
    for &a in &ages {
        let _ = write!(text, "{a}");
        for &k in &ks {
            let _ = write!(text, ",{}", chain_survival_with(k, a, cfg.params.dev_time));
        }
        let _ = writeln!(text, ",{}", pde_survival(a, &rf));
    }
    if let Some(path) = write_table(cfg, "survival.csv", &text)? {
        let _ = writeln!(text, "wrote {}", path.display());
    }
    Ok(text)
}

pub fn r0(cfg: &RunConfig) -> Out {
    let mut rows: Vec<(String, String, R0Breakdown)> = Vec::new();
    if cfg.model != Some(ModelKind::Pde) {
        for k in stage_counts(cfg, &[cfg.params.k_stages()]) {
            let mut p = cfg.params.clone();
            if k != p.k_stages() {
                p.set_equal_stages(k);
            }
            rows.push(("ode".into(), k.to_string(), r0_ode_breakdown(&p)));
        }
    }
    if cfg.model != Some(ModelKind::Ode) {
        rows.push(("pde".into(), String::new(), r0_pde_breakdown(&cfg.params)));
    }
    let mut text = String::from("model,k,invasion,offspring,survival,production,host_pool,r0\n");
    for (model, k, b) in rows {
        let _ = writeln!(
            text,
            "{model},{k},{},{},{},{},{},{}",
            b.invasion, b.offspring, b.survival, b.production, b.host_pool, b.value
        );
    }
    if let Some(path) = write_table(cfg, "r0.csv", &text)? {
        let _ = writeln!(text, "wrote {}", path.display());
    }
    Ok(text)
}

/// Tables printed on stdout are also written under `--out` when it is given.
fn write_table(cfg: &RunConfig, name: &str, text: &str) -> Result<Option<PathBuf>, CliError> {
    if cfg.out.is_none() {
        return Ok(None);
    }
    let path = out_dir(cfg)?.join(name);
    write_atomic(&path, text.as_bytes())?;
    Ok(Some(path))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trajectory".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_l2_examples() {
        assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_l2(&[0.0, 0.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
        assert!((relative_l2(&[3.0, 5.0], &[3.0, 4.0]) - 0.2).abs() < 1e-15);
    }
}

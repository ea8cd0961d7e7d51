//! Least-squares estimation of the commitment fraction α_G, the inoculum m₀
//! and the gametocyte clearance μ_G (plus, for the chain model, the stage
//! count K) from a patient's gametocyte series.

pub mod nelder_mead;

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{simulate_ode_with, OdeSimConfig};
use crate::params::{ModelParams, HOURS_PER_DAY};
use crate::pde::{simulate_pde_with, AgeMesh, PdeSimConfig, RuptureFunction};
use crate::state::{OdeState, PatientSeries, PdeState};

pub use nelder_mead::{Minimum, NelderMeadOptions};

/// Largest admissible stage count.
pub const K_MAX: usize = 200;
/// Number of multistart points (a 2×2×2 lattice).
pub const N_STARTS: usize = 8;
/// Offset inside the log-scale objective, cells·ml⁻¹.
pub const LOG_EPSILON: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Ode,
    Pde,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ode" => Ok(ModelKind::Ode),
            "pde" => Ok(ModelKind::Pde),
            other => Err(Error::param("model", format!("expected ode or pde, got {other:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ode => "ode",
            ModelKind::Pde => "pde",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveScale {
    Linear,
    /// Residuals of log₁₀(G + 1).
    #[default]
    Log10,
}

impl FromStr for ObjectiveScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(ObjectiveScale::Linear),
            "log" | "log10" => Ok(ObjectiveScale::Log10),
            other => Err(Error::param(
                "objective",
                format!("expected log or linear, got {other:?}"),
            )),
        }
    }
}

impl fmt::Display for ObjectiveScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveScale::Linear => "linear",
            ObjectiveScale::Log10 => "log",
        })
    }
}

/// The estimated parameters. `mu_g` is per hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeParams {
    pub alpha_g: f64,
    pub m0: f64,
    pub mu_g: f64,
}

impl FreeParams {
    fn to_log(self) -> [f64; 3] {
        [self.alpha_g.ln(), self.m0.ln(), self.mu_g.ln()]
    }

    fn from_log(x: &[f64]) -> Self {
        FreeParams {
            alpha_g: x[0].exp(),
            m0: x[1].exp(),
            mu_g: x[2].exp(),
        }
    }

    /// `base` with these values substituted.
    pub fn apply(&self, base: &ModelParams) -> ModelParams {
        let mut p = base.clone();
        p.alpha_g = self.alpha_g;
        p.m0 = self.m0;
        p.mu_g = self.mu_g;
        p
    }
}

/// Inclusive box for each free parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds {
    pub alpha_g: (f64, f64),
    pub m0: (f64, f64),
    pub mu_g: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            alpha_g: (1e-10, 1e-2),
            m0: (1e4, 1e9),
            mu_g: (1e-4, 1e-2),
        }
    }
}

impl ParamBounds {
    fn as_pairs(&self) -> [(&'static str, (f64, f64)); 3] {
        [("alpha_g", self.alpha_g), ("m0", self.m0), ("mu_g", self.mu_g)]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in self.as_pairs() {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::param(
                    name,
                    format!("bounds [{lo}, {hi}] must be positive, finite and ordered"),
                ));
            }
        }
        if self.alpha_g.1 >= 1.0 {
            return Err(Error::param("alpha_g", "upper bound must be < 1"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &FreeParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(p.alpha_g, self.alpha_g) && inside(p.m0, self.m0) && inside(p.mu_g, self.mu_g)
    }

    fn log_box(&self) -> ([f64; 3], [f64; 3]) {
        let pairs = self.as_pairs();
        (pairs.map(|(_, (lo, _))| lo.ln()), pairs.map(|(_, (_, hi))| hi.ln()))
    }

    /// Eight starts at the quarter points of each log-scaled interval.
    pub fn multistarts(&self) -> Vec<FreeParams> {
        let (lo, hi) = self.log_box();
        let at = |i: usize, q: f64| lo[i] + q * (hi[i] - lo[i]);
        let mut starts = Vec::with_capacity(N_STARTS);
        for qa in [0.25, 0.75] {
            for qm in [0.25, 0.75] {
                for qg in [0.25, 0.75] {
                    starts.push(FreeParams::from_log(&[at(0, qa), at(1, qm), at(2, qg)]));
                }
            }
        }
        starts
    }
}

/// A fitting task for one patient.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data: PatientSeries,
    pub model_kind: ModelKind,
    pub bounds: ParamBounds,
    /// Inclusive stage-count range searched for the chain model.
    pub k_range: (usize, usize),
    pub objective_scale: ObjectiveScale,
    /// Fixed parameters; the free ones and the stage layout are overwritten.
    pub base_params: ModelParams,
    /// Integration step (hours); also the age step for the PDE model.
    pub dt: f64,
    pub optimizer: NelderMeadOptions,
}

impl FitProblem {
    /// Defaults: full K range, log objective, 0.25 h step.
    pub fn new(data: PatientSeries, model_kind: ModelKind, base_params: ModelParams) -> Self {
        FitProblem {
            data,
            model_kind,
            bounds: ParamBounds::default(),
            k_range: (1, K_MAX),
            objective_scale: ObjectiveScale::default(),
            base_params,
            dt: 0.25,
            optimizer: NelderMeadOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.data.len() < 5 {
            return Err(Error::InsufficientData(format!(
                "patient {}: {} observations, need at least 5",
                self.data.patient_id,
                self.data.len()
            )));
        }
        self.bounds.validate()?;
        let (lo, hi) = self.k_range;
        if !(1 <= lo && lo <= hi && hi <= K_MAX) {
            return Err(Error::param(
                "k_range",
                format!("[{lo}, {hi}] must lie within [1, {K_MAX}]"),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        if (HOURS_PER_DAY / self.dt - (HOURS_PER_DAY / self.dt).round()).abs() > 1e-9 {
            return Err(Error::param("dt", "must divide 24 h"));
        }
        self.base_params.validate()
    }

    fn k_values(&self) -> Vec<usize> {
        match self.model_kind {
            ModelKind::Ode => (self.k_range.0..=self.k_range.1).collect(),
            ModelKind::Pde => vec![self.base_params.k_stages()],
        }
    }
}

/// Outcome of [`fit`]. `k_opt` is `None` for the age-structured model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub patient_id: String,
    pub alpha_g: f64,
    pub m0: f64,
    pub mu_g: f64,
    pub k_opt: Option<usize>,
    pub sse: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl FitResult {
    pub fn free(&self) -> FreeParams {
        FreeParams {
            alpha_g: self.alpha_g,
            m0: self.m0,
            mu_g: self.mu_g,
        }
    }

    /// Full parameter set for re-simulation, with `K` stages when fitted.
    pub fn params(&self, base: &ModelParams) -> ModelParams {
        let p = self.free().apply(base);
        match self.k_opt {
            Some(k) => p.with_equal_stages(k),
            None => p,
        }
    }
}

/// Model gametocyte density at each observation day of the problem's data.
pub fn model_gametocytes(free: &FreeParams, k: usize, problem: &FitProblem) -> Result<Vec<f64>> {
    let last_day = problem.data.days.last().copied().unwrap_or(0) as usize;
    let t_end = last_day as f64 * HOURS_PER_DAY;
    let mut daily = Vec::with_capacity(last_day + 1);
    let params = free.apply(&problem.base_params);
    match problem.model_kind {
        ModelKind::Ode => {
            let params = params.with_equal_stages(k);
            let config = OdeSimConfig {
                dt: problem.dt,
                t_end,
                record_every: HOURS_PER_DAY,
                clamp_negative: true,
            };
            simulate_ode_with(&OdeState::initial(&params), &config, &params, |_, s| daily.push(s.g))?;
        }
        ModelKind::Pde => {
            let mesh = AgeMesh::new(problem.dt, params.dev_time + 6.0, params.dev_time)?;
            let config = PdeSimConfig {
                dt: problem.dt,
                t_end,
                record_every: HOURS_PER_DAY,
            };
            let rf = RuptureFunction::from_params(&params);
            simulate_pde_with(&PdeState::initial(&params, mesh), &config, &params, &rf, |_, s, _| {
                daily.push(s.g)
            })?;
        }
    }
    Ok(problem.data.days.iter().map(|&d| daily[d as usize]).collect())
}

/// Sum of squared residuals between model and data on the problem's scale.
/// A failed simulation scores +∞.
pub fn objective(free: &FreeParams, k: usize, problem: &FitProblem) -> f64 {
    let model = match model_gametocytes(free, k, problem) {
        Ok(g) => g,
        Err(e) => {
            warn!("objective at {free:?}, K = {k}: {e}");
            return f64::INFINITY;
        }
    };
    let scale = |g: f64| match problem.objective_scale {
        ObjectiveScale::Linear => g,
        ObjectiveScale::Log10 => (g.max(0.0) + LOG_EPSILON).log10(),
    };
    model
        .iter()
        .zip(&problem.data.gametocyte_density)
        .map(|(&m, &d)| {
            let r = scale(m) - scale(d);
            r * r
        })
        .sum()
}

#[derive(Debug, Clone)]
struct Candidate {
    k: usize,
    x: FreeParams,
    sse: f64,
    converged: bool,
    evaluations: usize,
}

fn lexicographic(a: &FreeParams, b: &FreeParams) -> std::cmp::Ordering {
    a.alpha_g
        .total_cmp(&b.alpha_g)
        .then(a.m0.total_cmp(&b.m0))
        .then(a.mu_g.total_cmp(&b.mu_g))
}

fn fit_at_k(k: usize, problem: &FitProblem) -> Candidate {
    let (lo, hi) = problem.bounds.log_box();
    let runs: Vec<Minimum> = problem
        .bounds
        .multistarts()
        .par_iter()
        .map(|start| {
            nelder_mead::minimize(
                |x| objective(&FreeParams::from_log(x), k, problem),
                &start.to_log(),
                &lo,
                &hi,
                &problem.optimizer,
            )
        })
        .collect();
    let evaluations = runs.iter().map(|m| m.evaluations).sum();
    let converged = runs.iter().any(|m| m.converged);
    let best = runs
        .iter()
        .min_by(|a, b| {
            a.f.total_cmp(&b.f)
                .then_with(|| lexicographic(&FreeParams::from_log(&a.x), &FreeParams::from_log(&b.x)))
        })
        .expect("at least one start");
    Candidate {
        k,
        x: FreeParams::from_log(&best.x),
        sse: best.f,
        converged,
        evaluations,
    }
}

/// Multistart Nelder–Mead in log-parameter space, exhaustively over K for
/// the chain model. Deterministic for a given problem.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let candidates: Vec<Candidate> = problem.k_values().par_iter().map(|&k| fit_at_k(k, problem)).collect();
    let evaluations = candidates.iter().map(|c| c.evaluations).sum();
    // Candidates are in increasing K, so strict improvement keeps the lowest K on ties.
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if c.sse < best.sse {
            best = c;
        }
    }
    if !best.sse.is_finite() {
        return Err(Error::NonFinite {
            t: 0.0,
            what: format!("objective for patient {} at every start", problem.data.patient_id),
        });
    }
    Ok(FitResult {
        patient_id: problem.data.patient_id.clone(),
        alpha_g: best.x.alpha_g,
        m0: best.x.m0,
        mu_g: best.x.mu_g,
        k_opt: (problem.model_kind == ModelKind::Ode).then_some(best.k),
        sse: best.sse,
        converged: best.converged,
        evaluations,
    })
}

/// Fits the chain model, then re-evaluates the fitted (α_G, m₀, μ_G) under
/// the age-structured model. Returns both results; the second keeps the
/// chain fit's parameters and reports the age-structured objective.
pub fn fit_ode_then_pde(problem: &FitProblem) -> Result<(FitResult, FitResult)> {
    let mut ode_problem = problem.clone();
    ode_problem.model_kind = ModelKind::Ode;
    let ode = fit(&ode_problem)?;
    let mut pde_problem = problem.clone();
    pde_problem.model_kind = ModelKind::Pde;
    let sse = objective(&ode.free(), pde_problem.base_params.k_stages(), &pde_problem);
    let pde = FitResult {
        k_opt: None,
        sse,
        evaluations: 1,
        ..ode.clone()
    };
    Ok((ode, pde))
}

//! Age-structured pRBC model. Infection age is transported at unit speed by a
//! first-order upwind finite-volume scheme; the free merozoite, gametocyte and
//! RBC compartments are advanced with the same step by exact exponential
//! updates under frozen coefficients.

use crate::error::{Error, Result};
use crate::immunity::{self, adaptive_response, innate_response, ImmuneState};
use crate::params::{InnateMode, ModelParams};
use crate::state::{PdeState, Trajectory};

const MESH_TOL: f64 = 1e-9;

/// Uniform infection-age mesh on `[0, a_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeMesh {
    da: f64,
    a_max: f64,
    n_cells: usize,
}

impl AgeMesh {
    /// Requires `a_max ≥ dev_time + 6`, and `da` dividing both `a_max` and
    /// `dev_time` so the rupture threshold sits on a cell boundary.
    pub fn new(da: f64, a_max: f64, dev_time: f64) -> Result<Self> {
        if !(da.is_finite() && da > 0.0) {
            return Err(Error::InvalidMesh(format!("da must be > 0, got {da}")));
        }
        if !(a_max >= dev_time + 6.0) {
            return Err(Error::InvalidMesh(format!(
                "a_max = {a_max} h must be at least dev_time + 6 = {} h",
                dev_time + 6.0
            )));
        }
        let cells = a_max / da;
        if (cells - cells.round()).abs() > MESH_TOL * cells.max(1.0) {
            return Err(Error::InvalidMesh(format!("da = {da} does not divide a_max = {a_max}")));
        }
        let at_threshold = dev_time / da;
        if (at_threshold - at_threshold.round()).abs() > MESH_TOL * at_threshold.max(1.0) {
            return Err(Error::InvalidMesh(format!(
                "age {dev_time} h does not fall on a cell boundary for da = {da}"
            )));
        }
        Ok(AgeMesh {
            da,
            a_max,
            n_cells: cells.round() as usize,
        })
    }

    /// 0.05 h cells up to 54 h.
    pub fn default_for(params: &ModelParams) -> Result<Self> {
        AgeMesh::new(0.05, params.dev_time + 6.0, params.dev_time)
    }

    pub fn da(&self) -> f64 {
        self.da
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Midpoint age of cell `i`.
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.da
    }
}

/// Piecewise-constant rupture hazard: zero before `dev_time`, `mu_bar` after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuptureFunction {
    pub dev_time: f64,
    pub mu_bar: f64,
}

impl RuptureFunction {
    pub fn from_params(params: &ModelParams) -> Self {
        RuptureFunction {
            dev_time: params.dev_time,
            mu_bar: params.mu_bar,
        }
    }
}

/// μ(a).
pub fn rupture_rate(a: f64, rf: &RuptureFunction) -> f64 {
    if a < rf.dev_time {
        0.0
    } else {
        rf.mu_bar
    }
}

/// D(a) = exp(−∫₀ᵃ μ): one up to `dev_time`, then exponential decay.
pub fn pde_survival(a: f64, rf: &RuptureFunction) -> f64 {
    if a <= rf.dev_time {
        1.0
    } else {
        (-rf.mu_bar * (a - rf.dev_time)).exp()
    }
}

/// Time stepping settings (hours). `dt ≤ da` is required; `dt = da` makes the
/// transport an exact shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeSimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: f64,
}

impl Default for PdeSimConfig {
    fn default() -> Self {
        PdeSimConfig {
            dt: 0.05,
            t_end: 40.0 * 24.0,
            record_every: 1.0,
        }
    }
}

impl PdeSimConfig {
    /// Unit Courant number on `mesh`.
    pub fn for_mesh(mesh: &AgeMesh, t_end: f64, record_every: f64) -> Self {
        PdeSimConfig {
            dt: mesh.da(),
            t_end,
            record_every,
        }
    }
}

/// Densities exchanged during one step (cells·ml⁻¹).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepFluxes {
    /// Newly parasitized RBCs entering age zero.
    pub inflow: f64,
    /// pRBC mass removed by rupture and natural death.
    pub losses: f64,
    /// The rupture part of `losses`.
    pub ruptured: f64,
    /// Mass transported past `a_max`.
    pub outflow: f64,
}

/// Reusable stepper holding per-cell decay factors for a fixed `dt`.
pub struct PdeStepper<'a> {
    params: &'a ModelParams,
    dt: f64,
    courant: f64,
    decay: Vec<f64>,
    rupture_share: Vec<f64>,
}

impl<'a> PdeStepper<'a> {
    pub fn new(params: &'a ModelParams, mesh: &AgeMesh, rf: &RuptureFunction, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {dt}")));
        }
        if dt > mesh.da() * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, da: mesh.da() });
        }
        let n = mesh.n_cells();
        let mut decay = Vec::with_capacity(n);
        let mut rupture_share = Vec::with_capacity(n);
        for i in 0..n {
            let mu = rupture_rate(mesh.midpoint(i), rf);
            let total = mu + params.d0;
            decay.push((-total * dt).exp());
            rupture_share.push(if total > 0.0 { mu / total } else { 0.0 });
        }
        Ok(PdeStepper {
            params,
            dt,
            courant: (dt / mesh.da()).min(1.0),
            decay,
            rupture_share,
        })
    }

    /// Advances `state` from `t` to `t + dt` in place.
    pub fn step(&self, state: &mut PdeState, t: f64) -> Result<StepFluxes> {
        let params = self.params;
        let dt = self.dt;
        let da = state.mesh.da();

        // Sinks along characteristics over the step.
        let mut losses = 0.0;
        let mut ruptured = 0.0;
        for ((p, &f), &share) in state.p.iter_mut().zip(&self.decay).zip(&self.rupture_share) {
            let lost = *p * (1.0 - f);
            losses += lost;
            ruptured += lost * share;
            *p *= f;
        }
        losses *= da;
        ruptured *= da;
        let rupture_rate = ruptured / dt;

        // Free merozoites under coefficients frozen at the start of the step.
        let target = params.gamma_r * state.r_r + params.gamma_m * state.r_m + params.gamma_s * state.r_s;
        let s_i = innate_response(state.m, params.si_star);
        let s_a = adaptive_response(t, state.cum_m, params.sa_star, params.delta0, params.delta1);
        let mut clearance = params.mu_mero + params.beta * target + s_a;
        let mut source = (1.0 - params.alpha_g) * params.r_burst * rupture_rate;
        match params.innate_mode {
            InnateMode::Verbatim => source -= s_i,
            InnateMode::Proportional => clearance += s_i,
        }
        let (m_new, m_integral) = linear_decay_step(state.m, source, clearance, dt);
        let (m_new, m_integral) = (m_new.max(0.0), m_integral.max(0.0));

        // Infection drains each targeted RBC class into age zero. The
        // depletion R(1 − e^{−β γ ∫m}) is exact for the contact term alone,
        // so a class can never be drained below zero.
        let contact = params.beta * m_integral;
        let depleted = |gamma: f64, r: f64| -(-contact * gamma).exp_m1() * r;
        let drain = [
            depleted(params.gamma_r, state.r_r),
            depleted(params.gamma_m, state.r_m),
            depleted(params.gamma_s, state.r_s),
        ];
        let inflow = drain.iter().sum::<f64>();

        // Upwind transport in age with the inflow as a boundary flux.
        let n = state.p.len();
        let outflow;
        if self.courant >= 1.0 {
            outflow = state.p[n - 1] * da;
            state.p.rotate_right(1);
            state.p[0] = inflow / da;
        } else {
            let nu = self.courant;
            outflow = nu * state.p[n - 1] * da;
            for i in (1..n).rev() {
                state.p[i] = (1.0 - nu) * state.p[i] + nu * state.p[i - 1];
            }
            state.p[0] = (1.0 - nu) * state.p[0] + inflow / da;
        }

        let mat = [
            params.lambda0 - params.mu_rm() * state.r_r,
            params.mu_rm() * state.r_r - params.mu_ms() * state.r_m,
            params.mu_ms() * state.r_m - params.mu_sd() * state.r_s,
        ];
        state.r_r += dt * mat[0] - drain[0];
        state.r_m += dt * mat[1] - drain[1];
        state.r_s += dt * mat[2] - drain[2];

        let (g_new, _) = linear_decay_step(state.g, params.alpha_g * params.r_burst * rupture_rate, params.mu_g, dt);
        state.g = g_new;

        let immune = immunity::accumulate(
            ImmuneState { cum_m: state.cum_m },
            t,
            dt,
            m_integral / dt,
            params.delta0,
            params.delta1,
        );
        state.cum_m = immune.cum_m;
        state.m = m_new;

        let scalars = [state.r_r, state.r_m, state.r_s, state.m, state.g, state.cum_m];
        if scalars.iter().any(|v| !v.is_finite()) || !inflow.is_finite() || !losses.is_finite() {
            return Err(Error::NonFinite {
                t: t + dt,
                what: "age-structured state".into(),
            });
        }
        Ok(StepFluxes {
            inflow,
            losses,
            ruptured,
            outflow,
        })
    }
}

/// Exact solution of `y' = s − k y` over `dt`: returns `(y(dt), ∫₀^dt y)`.
fn linear_decay_step(y0: f64, s: f64, k: f64, dt: f64) -> (f64, f64) {
    if k * dt < 1e-12 {
        let y1 = y0 + s * dt;
        return (y1, 0.5 * (y0 + y1) * dt);
    }
    let eq = s / k;
    let e = (-k * dt).exp();
    let y1 = eq + (y0 - eq) * e;
    let integral = eq * dt + (y0 - eq) * (1.0 - e) / k;
    (y1, integral)
}

/// One step of the age-structured model, returning the new state.
pub fn pde_step(state: &PdeState, t: f64, dt: f64, params: &ModelParams, rf: &RuptureFunction) -> Result<PdeState> {
    let stepper = PdeStepper::new(params, &state.mesh, rf, dt)?;
    let mut next = state.clone();
    stepper.step(&mut next, t)?;
    Ok(next)
}

/// Integrates the age-structured model, recording observables every
/// `config.record_every` hours.
pub fn simulate_pde(
    init: &PdeState,
    config: &PdeSimConfig,
    params: &ModelParams,
    rf: &RuptureFunction,
) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    simulate_pde_with(init, config, params, rf, |t, s, _| traj.record(t, s, s.g, s.m))?;
    Ok(traj)
}

/// Like [`simulate_pde`] but hands each recorded state, and the fluxes of the
/// step that produced it, to `observe`. Returns the final state.
pub fn simulate_pde_with(
    init: &PdeState,
    config: &PdeSimConfig,
    params: &ModelParams,
    rf: &RuptureFunction,
    mut observe: impl FnMut(f64, &PdeState, &StepFluxes),
) -> Result<PdeState> {
    params.validate()?;
    if !(config.record_every >= config.dt) {
        return Err(Error::param("record_every", "must be >= dt"));
    }
    if init.p.len() != init.mesh.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: init.mesh.n_cells(),
            found: init.p.len(),
        });
    }
    let stepper = PdeStepper::new(params, &init.mesh, rf, config.dt)?;
    let steps = (config.t_end / config.dt).round() as usize;
    let every = ((config.record_every / config.dt).round() as usize).max(1);
    let mut state = init.clone();
    observe(0.0, &state, &StepFluxes::default());
    for step in 0..steps {
        let t = step as f64 * config.dt;
        let fluxes = stepper.step(&mut state, t)?;
        if (step + 1) % every == 0 {
            observe((step + 1) as f64 * config.dt, &state, &fluxes);
        }
    }
    Ok(state)
}

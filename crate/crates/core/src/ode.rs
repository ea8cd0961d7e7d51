//! The K-stage chain model: pRBCs pass through K exponential stages before
//! rupture, integrated with fixed-step classical Runge–Kutta.

use log::debug;

use crate::error::{Error, Result};
use crate::immunity::{adaptive_response, innate_response};
use crate::params::{InnateMode, ModelParams};
use crate::state::{OdeState, Trajectory};

/// Fixed-step integration settings (hours).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: f64,
    pub clamp_negative: bool,
}

impl Default for OdeSimConfig {
    fn default() -> Self {
        OdeSimConfig {
            dt: 0.05,
            t_end: 40.0 * 24.0,
            record_every: 1.0,
            clamp_negative: true,
        }
    }
}

impl OdeSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::param("t_end", format!("must be >= 0, got {}", self.t_end)));
        }
        if !(self.record_every >= self.dt) {
            return Err(Error::param(
                "record_every",
                format!("must be >= dt ({}), got {}", self.dt, self.record_every),
            ));
        }
        Ok(())
    }

    /// Number of steps and steps per record, both rounded to whole steps.
    pub(crate) fn grid(&self) -> (usize, usize) {
        let steps = (self.t_end / self.dt).round() as usize;
        let every = ((self.record_every / self.dt).round() as usize).max(1);
        (steps, every)
    }
}

/// Which immune terms are live over a step. Fixed for the whole step so that
/// the switching times Δ₀ and Δ₀+Δ₁ never fall inside an RK4 step.
#[derive(Debug, Clone, Copy)]
struct ImmunePhase {
    adaptive_on: bool,
    accumulating: bool,
}

impl ImmunePhase {
    fn at(t: f64, params: &ModelParams) -> Self {
        ImmunePhase {
            adaptive_on: t >= params.delta0,
            accumulating: t >= params.delta0 && t < params.delta0 + params.delta1,
        }
    }
}

/// Flat right-hand side on `[r_r, r_m, r_s, m, g, cum_m, p_1..p_K]`.
fn rhs_flat(y: &[f64], dy: &mut [f64], params: &ModelParams, phase: ImmunePhase) {
    let (r_r, r_m, r_s, m, g, cum) = (y[0], y[1], y[2], y[3], y[4], y[5]);
    let p = &y[6..];
    let k = p.len();
    let mu = &params.stage_rates;
    let d = &params.stage_deaths;

    let beta_m = params.beta * m;
    let target = params.gamma_r * r_r + params.gamma_m * r_m + params.gamma_s * r_s;
    let out_r = params.mu_rm() * r_r;
    let out_m = params.mu_ms() * r_m;
    let out_s = params.mu_sd() * r_s;
    dy[0] = params.lambda0 - out_r - beta_m * params.gamma_r * r_r;
    dy[1] = out_r - out_m - beta_m * params.gamma_m * r_m;
    dy[2] = out_m - out_s - beta_m * params.gamma_s * r_s;

    let dp = &mut dy[6..6 + k];
    let (mu, d) = (&mu[..k], &d[..k]);
    let mut inflow = beta_m * target;
    for (((dpi, &pi), &mui), &di) in dp.iter_mut().zip(p).zip(mu).zip(d) {
        let out = mui * pi;
        *dpi = inflow - out - di * pi;
        inflow = out;
    }
    let rupture = params.r_burst * inflow;

    let s_i = innate_response(m, params.si_star);
    let s_a = if phase.adaptive_on {
        adaptive_response(params.delta0, cum, params.sa_star, params.delta0, params.delta1)
    } else {
        0.0
    };
    let clearance = params.mu_mero + params.beta * target + s_a;
    dy[3] = match params.innate_mode {
        InnateMode::Verbatim => (1.0 - params.alpha_g) * rupture - clearance * m - s_i,
        InnateMode::Proportional => (1.0 - params.alpha_g) * rupture - (clearance + s_i) * m,
    };
    dy[4] = params.alpha_g * rupture - params.mu_g * g;
    dy[5] = if phase.accumulating { m } else { 0.0 };
}

/// Time derivative of the full chain model at time `t`.
pub fn ode_rhs(state: &OdeState, t: f64, params: &ModelParams) -> Result<OdeState> {
    let k = params.k_stages();
    if state.p.len() != k || params.stage_deaths.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: state.p.len(),
        });
    }
    let mut y = vec![0.0; OdeState::dim(k)];
    let mut dy = vec![0.0; OdeState::dim(k)];
    state.write_flat(&mut y);
    rhs_flat(&y, &mut dy, params, ImmunePhase::at(t, params));
    let mut out = state.clone();
    out.read_flat(&dy);
    Ok(out)
}

/// Scratch buffers for classical RK4 on a flat state.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, y: &mut [f64], h: f64, mut f: impl FnMut(&[f64], &mut [f64])) {
        f(y, &mut self.k1);
        for ((t, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *t = yi + 0.5 * h * k;
        }
        f(&self.tmp, &mut self.k2);
        for ((t, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *t = yi + 0.5 * h * k;
        }
        f(&self.tmp, &mut self.k3);
        for ((t, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *t = yi + h * k;
        }
        f(&self.tmp, &mut self.k4);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates the chain model from `init`, recording observables every
/// `config.record_every` hours.
pub fn simulate_ode(init: &OdeState, config: &OdeSimConfig, params: &ModelParams) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    simulate_ode_with(init, config, params, |t, s| traj.record(t, s, s.g, s.m))?;
    Ok(traj)
}

/// Same integration as [`simulate_ode`] but hands every recorded state to
/// `observe`; returns the final state.
pub fn simulate_ode_with(
    init: &OdeState,
    config: &OdeSimConfig,
    params: &ModelParams,
    mut observe: impl FnMut(f64, &OdeState),
) -> Result<OdeState> {
    params.validate()?;
    config.validate()?;
    let k = params.k_stages();
    if init.p.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: init.p.len(),
        });
    }
    let (steps, every) = config.grid();
    let dt = config.dt;
    let n = OdeState::dim(k);
    let mut y = vec![0.0; n];
    init.write_flat(&mut y);
    let mut state = init.clone();
    let mut rk = Rk4::new(n);
    let switches = [params.delta0, params.delta0 + params.delta1];
    let mut clamped = 0usize;

    observe(0.0, &state);
    for step in 0..steps {
        let t0 = step as f64 * dt;
        let t1 = (step + 1) as f64 * dt;
        // Split the step at an immunity switching time so each RK4 substep
        // sees smooth dynamics.
        let mut t = t0;
        for &ts in switches.iter().filter(|&&ts| ts > t0 + 1e-9 && ts < t1 - 1e-9) {
            let phase = ImmunePhase::at(t, params);
            rk.step(&mut y, ts - t, |y, dy| rhs_flat(y, dy, params, phase));
            t = ts;
        }
        let phase = ImmunePhase::at(t, params);
        rk.step(&mut y, t1 - t, |y, dy| rhs_flat(y, dy, params, phase));

        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: t1,
                what: format!("chain state component {i}"),
            });
        }
        if config.clamp_negative {
            for v in y.iter_mut().filter(|v| **v < 0.0) {
                *v = 0.0;
                clamped += 1;
            }
        }
        if (step + 1) % every == 0 {
            state.read_flat(&y);
            observe(t1, &state);
        }
    }
    if clamped > 0 {
        debug!("clamped {clamped} negative chain components to zero");
    }
    state.read_flat(&y);
    Ok(state)
}

/// P(T_K ≥ a) for the transit time T_K ~ Gamma(K, dev_time/K) of a chain of
/// K equal stages, through the Poisson identity
/// `P(T_K ≥ a) = P(Poisson(aK/dev_time) ≤ K − 1)`.
pub fn chain_survival_with(k: usize, a: f64, dev_time: f64) -> f64 {
    assert!(k >= 1, "chain needs at least one stage");
    if a <= 0.0 {
        return 1.0;
    }
    let lambda = a * k as f64 / dev_time;
    let ln_lambda = lambda.ln();
    // Σ_{j<K} exp(−λ + j ln λ − ln j!), summed in log space.
    let mut ln_term = -lambda;
    let mut ln_terms = Vec::with_capacity(k);
    ln_terms.push(ln_term);
    for j in 1..k {
        ln_term += ln_lambda - (j as f64).ln();
        ln_terms.push(ln_term);
    }
    let max = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = ln_terms.iter().map(|l| (l - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

/// [`chain_survival_with`] at the 48 h development time.
pub fn chain_survival(k: usize, a: f64) -> f64 {
    chain_survival_with(k, a, 48.0)
}

/// Mean and variance of Gamma(K, dev_time/K): `dev_time` and `dev_time²/K`.
pub fn erlang_moments(k: usize, dev_time: f64) -> (f64, f64) {
    // Gamma(K, dev_time/K): mean K·θ = dev_time, variance K·θ² = dev_time²/K.
    (dev_time, dev_time * dev_time / k as f64)
}

/// Total pRBC mass of a unit cohort placed in stage 1 at t = 0, with no
/// deaths and no reinfection, sampled every `record_every` hours.
pub fn chain_cohort_mass(k: usize, dev_time: f64, config: &OdeSimConfig) -> Result<Vec<(f64, f64)>> {
    let mut params = crate::params::default_params();
    params.dev_time = dev_time;
    params.set_equal_stages(k);
    params.stage_deaths = vec![0.0; k];
    params.alpha_g = 1.0;
    params.m0 = 0.0;
    let mut init = OdeState::initial(&params);
    init.p[0] = 1.0;
    let mut out = Vec::new();
    simulate_ode_with(&init, config, &params, |t, s| out.push((t, s.p.iter().sum())))?;
    Ok(out)
}

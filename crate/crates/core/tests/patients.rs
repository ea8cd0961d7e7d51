//! Qualitative shape of the gametocyte curve under fitted patient parameters.

use plasmodyn::{
    default_params, simulate_ode, simulate_pde, AgeMesh, ModelParams, OdeSimConfig, OdeState, PdeSimConfig, PdeState,
    RuptureFunction,
};

/// Fitted commitment, inoculum and clearance of patient G161.
fn g161() -> ModelParams {
    let mut p = default_params();
    p.mu_g = 1.25e-3;
    p.alpha_g = 118.57e-8;
    p.m0 = 5e7;
    p
}

fn pde_gametocytes(p: &ModelParams) -> Vec<f64> {
    let mesh = AgeMesh::default_for(p).unwrap();
    let rf = RuptureFunction::from_params(p);
    let cfg = PdeSimConfig::for_mesh(&mesh, 40.0 * 24.0, 24.0);
    simulate_pde(&PdeState::initial(p, mesh), &cfg, p, &rf)
        .unwrap()
        .gametocytes
}

fn ode_gametocytes(p: &ModelParams) -> Vec<f64> {
    let cfg = OdeSimConfig {
        record_every: 24.0,
        ..OdeSimConfig::default()
    };
    simulate_ode(&OdeState::initial(p), &cfg, p).unwrap().gametocytes
}

fn rises_then_decays(g: &[f64]) -> bool {
    let (peak, &max) = g.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let last = *g.last().unwrap();
    // Synchronous 48 h cycles make the daily series a staircase, so the
    // rise is judged against the start rather than day by day.
    peak > 3 && peak < g.len() - 3 && last < 0.9 * max && g[..3].iter().all(|&v| v < 0.1 * max)
}

#[test]
fn both_models_rise_then_decay() {
    let p = g161();
    let pde = pde_gametocytes(&p);
    assert!(rises_then_decays(&pde), "{pde:?}");
    let ode = ode_gametocytes(&p);
    assert!(rises_then_decays(&ode), "{ode:?}");
}

#[test]
fn age_model_onset_lags_the_single_stage_chain() {
    let p = g161();
    let pde = pde_gametocytes(&p);
    let one = ode_gametocytes(&p.clone().with_equal_stages(1));
    let onset = |g: &[f64]| g.iter().position(|&v| v > 1e3).unwrap();
    assert!(onset(&one) < onset(&pde), "{} vs {}", onset(&one), onset(&pde));
    for day in 2..=6 {
        assert!(one[day] > pde[day], "day {day}");
    }
}

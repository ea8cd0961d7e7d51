//! Fitting behaviour that spans several modules.

use plasmodyn::data_io::generate_synthetic;
use plasmodyn::{default_params, fit, FitProblem, ModelKind, ModelParams};

fn truth() -> ModelParams {
    let mut p = default_params();
    p.alpha_g = 1e-7;
    p.m0 = 1e7;
    p.mu_g = 1e-3;
    p
}

#[test]
fn halving_the_age_mesh_barely_moves_the_fit() {
    let data = generate_synthetic(&truth(), ModelKind::Pde, 0.0, 0).unwrap();
    let run = |dt: f64| {
        let mut problem = FitProblem::new(data.clone(), ModelKind::Pde, default_params());
        problem.dt = dt;
        fit(&problem).unwrap()
    };
    let (coarse, fine) = (run(0.25), run(0.125));
    for (name, a, b) in [
        ("alpha_g", coarse.alpha_g, fine.alpha_g),
        ("m0", coarse.m0, fine.m0),
        ("mu_g", coarse.mu_g, fine.mu_g),
    ] {
        let rel = (a - b).abs() / b;
        assert!(rel < 0.02, "{name}: {a} vs {b} ({:.2}%)", rel * 100.0);
    }
}

#[test]
fn single_stage_chain_fitted_to_age_model_data_runs_ahead_early() {
    let data = generate_synthetic(&truth(), ModelKind::Pde, 0.0, 0).unwrap();
    let mut problem = FitProblem::new(data.clone(), ModelKind::Ode, default_params());
    problem.k_range = (1, 1);
    let r = fit(&problem).unwrap();
    let model = plasmodyn::fitting::model_gametocytes(&r.free(), 1, &problem).unwrap();
    let early: Vec<usize> = (0..data.len()).filter(|&i| (3..=6).contains(&data.days[i])).collect();
    let ahead = early.iter().filter(|&&i| model[i] > data.gametocyte_density[i]).count();
    assert!(
        ahead == early.len(),
        "days 3..=6: model {:?} data {:?}",
        early.iter().map(|&i| model[i]).collect::<Vec<_>>(),
        early.iter().map(|&i| data.gametocyte_density[i]).collect::<Vec<_>>()
    );
}

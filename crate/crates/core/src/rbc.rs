//! Parasite-free maturation of uninfected RBCs through the reticulocyte,
//! mature and senescent classes.

use crate::params::ModelParams;

/// Homeostatic RBC densities (cells·ml⁻¹).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbcEquilibrium {
    pub r_r_star: f64,
    pub r_m_star: f64,
    pub r_s_star: f64,
}

impl RbcEquilibrium {
    pub fn total(&self) -> f64 {
        self.r_r_star + self.r_m_star + self.r_s_star
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r_r_star, self.r_m_star, self.r_s_star]
    }
}

/// Right-hand side of the three-class maturation system.
pub fn urbc_derivatives(state: [f64; 3], params: &ModelParams) -> [f64; 3] {
    let [r_r, r_m, r_s] = state;
    let out_r = params.mu_rm() * r_r;
    let out_m = params.mu_ms() * r_m;
    let out_s = params.mu_sd() * r_s;
    [params.lambda0 - out_r, out_r - out_m, out_m - out_s]
}

/// Each class holds Λ₀ times its mean residence time.
pub fn equilibrium(params: &ModelParams) -> RbcEquilibrium {
    RbcEquilibrium {
        r_r_star: params.lambda0 * params.dur_r,
        r_m_star: params.lambda0 * params.dur_m,
        r_s_star: params.lambda0 * params.dur_s,
    }
}

/// Integrates the parasite-free system with classical RK4 for `t_end` hours.
pub fn integrate(mut state: [f64; 3], params: &ModelParams, t_end: f64, dt: f64) -> [f64; 3] {
    let steps = (t_end / dt).ceil() as usize;
    let h = t_end / steps as f64;
    let add = |y: [f64; 3], k: [f64; 3], s: f64| [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]];
    for _ in 0..steps {
        let k1 = urbc_derivatives(state, params);
        let k2 = urbc_derivatives(add(state, k1, 0.5 * h), params);
        let k3 = urbc_derivatives(add(state, k2, 0.5 * h), params);
        let k4 = urbc_derivatives(add(state, k3, h), params);
        for i in 0..3 {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    state
}

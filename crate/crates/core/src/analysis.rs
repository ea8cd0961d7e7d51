//! Derived quantities: parasitemia, within-host reproduction numbers, and the
//! two-regime power-law relation between parasitemia and gametocytes.

use crate::error::{Error, Result};
use crate::params::{ModelParams, HOURS_PER_DAY};
use crate::rbc;
use crate::state::{InfectionState, Trajectory};

/// Fraction of all RBCs that are parasitized.
pub fn parasitemia<S: InfectionState>(state: &S) -> Result<f64> {
    let p = state.total_prbc();
    let total = p + state.total_urbc();
    if !(total > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok((p / total).clamp(0.0, 1.0))
}

/// Factors of the within-host reproduction number. `value` is their product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R0Breakdown {
    /// Probability a merozoite invades before clearance, β/(μ_m + βΣR*).
    pub invasion: f64,
    /// Asexual merozoites per rupture, (1 − α_G)·r.
    pub offspring: f64,
    /// Probability a pRBC escapes natural death until rupture.
    pub survival: f64,
    /// μ̄/(μ̄ + d₀) for the age-structured model, 1 for the chain.
    pub production: f64,
    /// Uninfected RBC pool ΣR*_j.
    pub host_pool: f64,
    pub value: f64,
}

fn breakdown(params: &ModelParams, survival: f64, production: f64) -> R0Breakdown {
    let host_pool = rbc::equilibrium(params).total();
    let invasion = params.beta / (params.mu_mero + params.beta * host_pool);
    let offspring = (1.0 - params.alpha_g) * params.r_burst;
    R0Breakdown {
        invasion,
        offspring,
        survival,
        production,
        host_pool,
        value: invasion * offspring * survival * production * host_pool,
    }
}

/// Chain model: survival is Π μ_i/(μ_i + d_i).
pub fn r0_ode_breakdown(params: &ModelParams) -> R0Breakdown {
    let survival = params
        .stage_rates
        .iter()
        .zip(&params.stage_deaths)
        .map(|(&mu, &d)| mu / (mu + d))
        .product();
    breakdown(params, survival, 1.0)
}

pub fn r0_ode(params: &ModelParams) -> f64 {
    r0_ode_breakdown(params).value
}

/// Age-structured model: survival is e^{−dev_time·d₀}, production μ̄/(μ̄ + d₀).
pub fn r0_pde_breakdown(params: &ModelParams) -> R0Breakdown {
    let survival = (-params.dev_time * params.d0).exp();
    breakdown(params, survival, params.mu_bar / (params.mu_bar + params.d0))
}

pub fn r0_pde(params: &ModelParams) -> f64 {
    r0_pde_breakdown(params).value
}

/// `r0_pde` with the production factor set to one; the large-K limit of `r0_ode`.
pub fn r0_pde_without_production(params: &ModelParams) -> f64 {
    let b = r0_pde_breakdown(params);
    b.value / b.production
}

/// Ordinary least squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    pub sse: f64,
    pub r2: f64,
    pub n: usize,
}

/// Fits a straight line; needs at least three points and spread in `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} points, need at least 3")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("no spread in the regressor".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let e = yi - intercept - slope * xi;
            e * e
        })
        .sum();
    let sigma2 = sse / (nf - 2.0);
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LineFit {
        intercept,
        slope,
        se_intercept: (sigma2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        se_slope: (sigma2 / sxx).sqrt(),
        sse,
        r2,
        n,
    })
}

const TIE_TOL: f64 = 1e-12;

/// Settings of the two-regime regression. Times in days.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOptions {
    pub lag: f64,
    /// Fitted samples satisfy `window.0 < t ≤ window.1`.
    pub window: (f64, f64),
    /// Change points are searched over sample times in this closed range.
    pub t0_search: (f64, f64),
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions {
            lag: 2.0,
            window: (2.0, 30.0),
            t0_search: (4.0, 28.0),
        }
    }
}

/// `log₁₀G = log₁₀k₁ + θ₁·log₁₀P(t − lag)` for `t ≤ T₀`, then
/// `log₁₀G = log₁₀k₂ + θ₂·log₁₀P(t)`. Standard errors are OLS standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub log10_k1: f64,
    pub theta1: f64,
    pub log10_k2: f64,
    pub theta2: f64,
    pub se_log10_k1: f64,
    pub se_theta1: f64,
    pub se_log10_k2: f64,
    pub se_theta2: f64,
    /// Change point (days).
    pub t0: f64,
    pub r2_first: f64,
    pub r2_second: f64,
    pub n_first: usize,
    pub n_second: usize,
    /// Total squared residual in log₁₀ units.
    pub sse: f64,
    /// Lag (days).
    pub lag: f64,
}

/// Two-regime fit with the default 2-day lag and (2, 30] day window.
pub fn fit_two_regime(traj: &Trajectory) -> Result<RegressionFit> {
    fit_two_regime_with(traj, &RegressionOptions::default())
}

/// Exhaustive change-point search; ties go to the earliest `T₀`.
pub fn fit_two_regime_with(traj: &Trajectory, opts: &RegressionOptions) -> Result<RegressionFit> {
    let days: Vec<f64> = traj.times.iter().map(|t| t / HOURS_PER_DAY).collect();
    let mut t = Vec::new();
    let mut log_g = Vec::new();
    let mut log_p_now = Vec::new();
    let mut log_p_lag = Vec::new();
    for (i, &d) in days.iter().enumerate() {
        if !(d > opts.window.0 && d <= opts.window.1) {
            continue;
        }
        let g = traj.gametocytes[i];
        let p = traj.parasitemia[i];
        let p_lag = Trajectory::interpolate(&traj.parasitemia, &days, d - opts.lag).ok_or_else(|| {
            Error::InsufficientData(format!(
                "no parasitemia at day {} for the lagged regressor",
                d - opts.lag
            ))
        })?;
        for (value, what) in [
            (g, "gametocyte density"),
            (p, "parasitemia"),
            (p_lag, "lagged parasitemia"),
        ] {
            if !(value > 0.0) {
                return Err(Error::NonPositive {
                    t: d,
                    value,
                    what: what.into(),
                });
            }
        }
        t.push(d);
        log_g.push(g.log10());
        log_p_now.push(p.log10());
        log_p_lag.push(p_lag.log10());
    }

    let mut best: Option<(f64, LineFit, LineFit, f64)> = None;
    for (split, &t0) in t.iter().enumerate() {
        if t0 < opts.t0_search.0 || t0 > opts.t0_search.1 {
            continue;
        }
        let cut = split + 1;
        if cut < 3 || t.len() - cut < 3 {
            continue;
        }
        let (Ok(first), Ok(second)) = (
            ols(&log_p_lag[..cut], &log_g[..cut]),
            ols(&log_p_now[cut..], &log_g[cut..]),
        ) else {
            continue;
        };
        let sse = first.sse + second.sse;
        // Improvements below round-off do not displace an earlier change point.
        if best.as_ref().is_none_or(|b| sse < b.0 - TIE_TOL) {
            best = Some((sse, first, second, t0));
        }
    }
    let (sse, first, second, t0) = best
        .ok_or_else(|| Error::InsufficientData("no change point leaves three usable points in each regime".into()))?;
    Ok(RegressionFit {
        log10_k1: first.intercept,
        theta1: first.slope,
        log10_k2: second.intercept,
        theta2: second.slope,
        se_log10_k1: first.se_intercept,
        se_theta1: first.se_slope,
        se_log10_k2: second.se_intercept,
        se_theta2: second.se_slope,
        t0,
        r2_first: first.r2,
        r2_second: second.r2,
        n_first: first.n,
        n_second: second.n,
        sse,
        lag: opts.lag,
    })
}

/// Population-level two-regime formula for gametocytes from parasitemia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClinicalFormula {
    pub k1: f64,
    pub theta1: f64,
    pub k2: f64,
    pub theta2: f64,
    /// Change point (days).
    pub t0: f64,
    /// Validity window (days), `lo < t ≤ hi`.
    pub window: (f64, f64),
}

impl Default for ClinicalFormula {
    fn default() -> Self {
        ClinicalFormula {
            k1: 3.843e7,
            theta1: 1.0304,
            k2: 2.981e9,
            theta2: -0.0470,
            t0: 14.5636,
            window: (2.0, 30.0),
        }
    }
}

impl ClinicalFormula {
    /// `p` is P(t − 2) in the first regime and P(t) in the second.
    pub fn evaluate(&self, p: f64, t_days: f64) -> Result<f64> {
        if !(t_days > self.window.0 && t_days <= self.window.1) {
            return Err(Error::OutOfRange(format!(
                "t = {t_days} d outside ({}, {}]",
                self.window.0, self.window.1
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::OutOfRange(format!("parasitemia {p} outside (0, 1]")));
        }
        Ok(if t_days <= self.t0 {
            self.k1 * p.powf(self.theta1)
        } else {
            self.k2 * p.powf(self.theta2)
        })
    }
}

/// Clinical gametocyte density (cells·ml⁻¹) with the default coefficients.
pub fn clinical_gametocytes(p: f64, t_days: f64) -> Result<f64> {
    ClinicalFormula::default().evaluate(p, t_days)
}

/// First-order bound on |ΔG/G| given |ΔP/P|.
pub fn clinical_relative_error_bound(rel_p: f64) -> f64 {
    (2.3884e-4 + 1.0617 * rel_p * rel_p).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_params;
    use crate::state::{OdeState, Sample};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ode_state(p_total: f64, r_total: f64) -> OdeState {
        let mut s = OdeState::initial(&default_params().with_equal_stages(2));
        s.p = vec![p_total / 2.0, p_total / 2.0];
        s.r_r = 0.0;
        s.r_m = r_total;
        s.r_s = 0.0;
        s
    }

    #[test]
    fn parasitemia_examples() {
        assert_eq!(parasitemia(&ode_state(0.0, 5e9)).unwrap(), 0.0);
        assert_eq!(parasitemia(&ode_state(3e9, 3e9)).unwrap(), 0.5);
        assert_relative_eq!(
            parasitemia(&ode_state(5e7, 4.95e9)).unwrap(),
            0.01,
            max_relative = 1e-12
        );
        assert!(matches!(parasitemia(&ode_state(0.0, 0.0)), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn r0_vanishes_without_contact_or_offspring() {
        let mut p = default_params();
        p.beta = 0.0;
        assert_eq!(r0_ode(&p), 0.0);
        assert_eq!(r0_pde(&p), 0.0);
        let mut p = default_params();
        p.alpha_g = 1.0;
        assert_eq!(r0_ode(&p), 0.0);
    }

    #[test]
    fn production_factor_near_one() {
        let b = r0_pde_breakdown(&default_params());
        assert!(b.production >= 0.99 && b.production < 1.0);
    }

    #[test]
    fn chain_survival_factor_limit() {
        let p = default_params().with_equal_stages(100);
        let b = r0_ode_breakdown(&p);
        let limit = (-48.0 * p.d0).exp();
        assert!((b.survival - limit).abs() / limit < 1e-3);
        assert_relative_eq!(b.survival, (1.0 + 48.0 * p.d0 / 100.0).powi(-100), max_relative = 1e-12);
    }

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = ols(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 2.0, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, 1.0, max_relative = 1e-12);
        assert_eq!(f.r2, 1.0);
        assert!(ols(&x[..2], &y[..2]).is_err());
    }

    #[test]
    fn clinical_examples() {
        assert_relative_eq!(clinical_gametocytes(1.0, 10.0).unwrap(), 3.843e7);
        let g = clinical_gametocytes(0.01, 10.0).unwrap();
        assert_relative_eq!(g, 3.843e7 * 10f64.powf(-2.0 * 1.0304), max_relative = 1e-12);
        // The rounded figure 3.38e5 is only good to about 1.2%.
        assert!((g - 3.38e5).abs() / 3.38e5 < 0.015);
        assert_relative_eq!(clinical_gametocytes(1.0, 20.0).unwrap(), 2.981e9);
        assert!(clinical_gametocytes(0.01, 2.0).is_err());
        assert!(clinical_gametocytes(0.01, 31.0).is_err());
        assert!(clinical_gametocytes(0.0, 10.0).is_err());
        assert!(clinical_relative_error_bound(0.05) < 0.0538);
    }

    fn power_law_traj(k: f64, theta: f64) -> Trajectory {
        let mut traj = Trajectory::default();
        for day in 0..=32 {
            let p = 1e-4 * (1.0 + day as f64).powf(1.5);
            traj.push(Sample {
                t: day as f64 * 24.0,
                gametocytes: k * p.powf(theta),
                merozoites: 0.0,
                parasitemia: p,
                total_prbc: 0.0,
                total_urbc: 0.0,
            });
        }
        traj
    }

    #[test]
    fn single_power_law_fits_both_regimes() {
        // Same law with a 2-day lag would differ; put the lag to zero.
        let traj = power_law_traj(2.0e8, 0.8);
        let opts = RegressionOptions {
            lag: 0.0,
            ..Default::default()
        };
        let f = fit_two_regime_with(&traj, &opts).unwrap();
        assert_relative_eq!(f.theta1, 0.8, max_relative = 1e-9);
        assert_relative_eq!(f.theta2, 0.8, max_relative = 1e-9);
        assert_relative_eq!(f.log10_k1, 2.0e8f64.log10(), max_relative = 1e-9);
        assert!(f.r2_first > 1.0 - 1e-12 && f.r2_second > 1.0 - 1e-12);
        // Degenerate change point: the earliest candidate wins the tie.
        assert_eq!(f.t0, 5.0);
    }

    #[test]
    fn rejects_nonpositive_samples() {
        let mut traj = power_law_traj(1e8, 1.0);
        traj.gametocytes[10] = 0.0;
        assert!(matches!(fit_two_regime(&traj), Err(Error::NonPositive { .. })));
    }

    proptest! {
        #[test]
        fn parasitemia_bounded_and_monotone(p in 0.0f64..1e10, dp in 0.0f64..1e10, r in 1.0f64..1e10) {
            let a = parasitemia(&ode_state(p, r)).unwrap();
            let b = parasitemia(&ode_state(p + dp, r)).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(a <= b);
        }

        #[test]
        fn r0_nonincreasing_in_death_and_commitment(d in 0.0f64..0.01, dd in 0.0f64..0.01, a in 0.0f64..0.5, da in 0.0f64..0.5) {
            let mut p = default_params().with_equal_stages(20);
            p.alpha_g = a;
            for v in p.stage_deaths.iter_mut() { *v = d; }
            let base = r0_ode(&p);
            let mut q = p.clone();
            for v in q.stage_deaths.iter_mut() { *v = d + dd; }
            prop_assert!(r0_ode(&q) <= base);
            let mut q = p.clone();
            q.alpha_g = a + da;
            prop_assert!(r0_ode(&q) <= base);
        }

        #[test]
        fn clinical_bound_holds(p in 1e-6f64..0.9, rel in -0.05f64..0.05, t in 2.01f64..30.0) {
            let g = clinical_gametocytes(p, t).unwrap();
            let g2 = clinical_gametocytes(p * (1.0 + rel), t).unwrap();
            prop_assert!(((g2 - g) / g).abs() <= clinical_relative_error_bound(0.05));
        }
    }
}

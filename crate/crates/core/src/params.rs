//! Model parameters and the hour-based unit convention.
//!
//! Every rate is stored per hour and every duration in hours. Densities are
//! cells per millilitre; the per-microlitre immunity thresholds of the
//! literature are scaled by 10³ when the defaults are built.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Hours per day.
pub const HOURS_PER_DAY: f64 = 24.0;

/// Millilitres per microlitre, inverted: densities per μl times this give per ml.
pub const UL_PER_ML: f64 = 1.0e3;

/// Time-like units accepted by [`convert_units`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Hour,
    Day,
    PerHour,
    PerDay,
}

impl Unit {
    fn is_rate(self) -> bool {
        matches!(self, Unit::PerHour | Unit::PerDay)
    }

    /// Size of one unit expressed in hours (durations) or per hour (rates).
    fn in_hours(self) -> f64 {
        match self {
            Unit::Hour | Unit::PerHour => 1.0,
            Unit::Day => HOURS_PER_DAY,
            Unit::PerDay => 1.0 / HOURS_PER_DAY,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Hour => "h",
            Unit::Day => "day",
            Unit::PerHour => "h^-1",
            Unit::PerDay => "day^-1",
        };
        f.write_str(s)
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "h" | "hour" | "hours" => Ok(Unit::Hour),
            "d" | "day" | "days" => Ok(Unit::Day),
            "h^-1" | "1/h" | "/h" | "per_hour" => Ok(Unit::PerHour),
            "day^-1" | "d^-1" | "1/day" | "/day" | "per_day" => Ok(Unit::PerDay),
            other => Err(Error::UnsupportedUnit {
                from: other.to_string(),
                to: "?".to_string(),
            }),
        }
    }
}

/// Converts `value` between hour/day durations or between per-hour/per-day rates.
pub fn convert_units(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.is_rate() != to.is_rate() {
        return Err(Error::UnsupportedUnit {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    if from == to {
        return Ok(value);
    }
    Ok(value * from.in_hours() / to.in_hours())
}

/// How the innate response enters the merozoite equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnateMode {
    /// `ṁ = … − S_I(t)`, exactly as the model is printed.
    #[default]
    Verbatim,
    /// `ṁ = … − S_I(t)·m(t)`: S_I acts as an extra per-capita clearance rate.
    Proportional,
}

impl FromStr for InnateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "verbatim" | "0" => Ok(InnateMode::Verbatim),
            "proportional" | "1" => Ok(InnateMode::Proportional),
            other => Err(Error::param(
                "innate_mode",
                format!("expected `verbatim` or `proportional`, got `{other}`"),
            )),
        }
    }
}

/// Fixed and patient-specific model parameters, in hours and cells·ml⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// RBC production rate Λ₀ (cells·ml⁻¹·h⁻¹).
    pub lambda0: f64,
    /// Mean reticulocyte duration 1/μ_{r→m} (h).
    pub dur_r: f64,
    /// Mean mature-RBC duration 1/μ_{m→s} (h).
    pub dur_m: f64,
    /// Mean senescent duration 1/μ_{s→d} (h).
    pub dur_s: f64,
    /// Merozoite–RBC contact rate β (ml·cell⁻¹·h⁻¹).
    pub beta: f64,
    /// Natural death rate of RBCs d₀ (h⁻¹).
    pub d0: f64,
    /// Free-merozoite decay rate μ_m (h⁻¹).
    pub mu_mero: f64,
    /// Merozoites released per rupture r.
    pub r_burst: f64,
    /// Fraction of released merozoites committed to gametocytes α_G.
    pub alpha_g: f64,
    /// Gametocyte clearance rate μ_G (h⁻¹).
    pub mu_g: f64,
    pub gamma_r: f64,
    pub gamma_m: f64,
    pub gamma_s: f64,
    /// Innate half-effect merozoite density S_I* (cells·ml⁻¹).
    pub si_star: f64,
    /// Adaptive half-effect cumulative density S_A* (cells·ml⁻¹·h).
    pub sa_star: f64,
    /// Adaptive response onset Δ₀ (h).
    pub delta0: f64,
    /// Adaptive accumulation window Δ₁ (h).
    pub delta1: f64,
    /// Rupture intensity beyond the development time μ̄ (h⁻¹).
    pub mu_bar: f64,
    /// Intracellular development time (h).
    pub dev_time: f64,
    /// Initial merozoite density m₀ (cells·ml⁻¹).
    pub m0: f64,
    /// Per-stage exit rates μ_i of the ODE chain (h⁻¹); its length is K.
    pub stage_rates: Vec<f64>,
    /// Per-stage pRBC death rates d_i (h⁻¹).
    pub stage_deaths: Vec<f64>,
    pub innate_mode: InnateMode,
}

/// Default number of chain stages.
pub const DEFAULT_K: usize = 50;

/// Names accepted by [`ModelParams::apply_override`].
pub const PARAM_NAMES: [&str; 22] = [
    "lambda0",
    "dur_r",
    "dur_m",
    "dur_s",
    "beta",
    "d0",
    "mu_mero",
    "r_burst",
    "alpha_g",
    "mu_g",
    "gamma_r",
    "gamma_m",
    "gamma_s",
    "si_star",
    "sa_star",
    "delta0",
    "delta1",
    "mu_bar",
    "dev_time",
    "m0",
    "k_stages",
    "innate_mode",
];

/// The fixed parameter set in canonical hour units with `K = 50` equal stages.
pub fn default_params() -> ModelParams {
    let d0 = 0.00833 / HOURS_PER_DAY;
    let dev_time = 48.0;
    let mut p = ModelParams {
        lambda0: 1.73e6,
        dur_r: 36.0,
        dur_m: 116.5 * HOURS_PER_DAY,
        dur_s: 48.0,
        // The tabulated magnitude is applied per hour; read per day the
        // within-host R₀ falls below one and no infection can establish.
        beta: 6.27e-10,
        d0,
        mu_mero: 48.0 / HOURS_PER_DAY,
        r_burst: 16.0,
        alpha_g: 0.05,
        mu_g: 1.0e-3,
        gamma_r: 1.0,
        gamma_m: 1.0,
        gamma_s: 1.0,
        si_star: 2755.0 * UL_PER_ML,
        // 20.4 cells·μl⁻¹·day of cumulative density.
        sa_star: 20.4 * UL_PER_ML * HOURS_PER_DAY,
        delta0: 16.0 * HOURS_PER_DAY,
        delta1: 8.0 * HOURS_PER_DAY,
        mu_bar: 10.0,
        dev_time,
        m0: 2.5e7,
        stage_rates: Vec::new(),
        stage_deaths: Vec::new(),
        innate_mode: InnateMode::Verbatim,
    };
    p.set_equal_stages(DEFAULT_K);
    p
}

impl Default for ModelParams {
    fn default() -> Self {
        default_params()
    }
}

impl ModelParams {
    /// Number of chain stages K.
    pub fn k_stages(&self) -> usize {
        self.stage_rates.len()
    }

    /// Builder-style variant of [`ModelParams::set_equal_stages`].
    pub fn with_equal_stages(mut self, k: usize) -> Self {
        self.set_equal_stages(k);
        self
    }

    /// `K` identical stages of rate `K/dev_time`, each with death rate `d₀`.
    pub fn set_equal_stages(&mut self, k: usize) {
        let k = k.max(1);
        self.stage_rates = vec![k as f64 / self.dev_time; k];
        self.stage_deaths = vec![self.d0; k];
    }

    pub fn mu_rm(&self) -> f64 {
        1.0 / self.dur_r
    }

    pub fn mu_ms(&self) -> f64 {
        1.0 / self.dur_m
    }

    pub fn mu_sd(&self) -> f64 {
        1.0 / self.dur_s
    }

    /// Mean chain transit time Σ 1/μ_i.
    pub fn chain_mean_duration(&self) -> f64 {
        self.stage_rates.iter().map(|mu| 1.0 / mu).sum()
    }

    /// Checks every invariant: positive rates, α_G ∈ [0,1], γ_j ∈ {0,1},
    /// matching stage vectors.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda0", self.lambda0),
            ("dur_r", self.dur_r),
            ("dur_m", self.dur_m),
            ("dur_s", self.dur_s),
            ("mu_mero", self.mu_mero),
            ("r_burst", self.r_burst),
            ("mu_g", self.mu_g),
            ("si_star", self.si_star),
            ("sa_star", self.sa_star),
            ("delta0", self.delta0),
            ("delta1", self.delta1),
            ("dev_time", self.dev_time),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let nonnegative = [
            ("beta", self.beta),
            ("d0", self.d0),
            ("mu_bar", self.mu_bar),
            ("m0", self.m0),
        ];
        for (name, v) in nonnegative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha_g) {
            return Err(Error::param(
                "alpha_g",
                format!("must lie in [0, 1], got {}", self.alpha_g),
            ));
        }
        for (name, g) in [
            ("gamma_r", self.gamma_r),
            ("gamma_m", self.gamma_m),
            ("gamma_s", self.gamma_s),
        ] {
            if g != 0.0 && g != 1.0 {
                return Err(Error::param(name, format!("must be 0 or 1, got {g}")));
            }
        }
        if self.stage_rates.is_empty() {
            return Err(Error::param("k_stages", "K must be at least 1"));
        }
        if self.stage_deaths.len() != self.stage_rates.len() {
            return Err(Error::DimensionMismatch {
                expected: self.stage_rates.len(),
                found: self.stage_deaths.len(),
            });
        }
        if self.stage_rates.iter().any(|&mu| !(mu.is_finite() && mu > 0.0)) {
            return Err(Error::param("stage_rates", "every μ_i must be finite and > 0"));
        }
        if self.stage_deaths.iter().any(|&d| !(d.is_finite() && d >= 0.0)) {
            return Err(Error::param("stage_deaths", "every d_i must be finite and >= 0"));
        }
        Ok(())
    }

    /// Applies a `name=value` override. Values are in canonical units
    /// (hours, cells·ml⁻¹). `k_stages` rebuilds equal stages; `d0` and
    /// `dev_time` keep equal stages consistent when they are in use.
    pub fn apply_override(&mut self, name: &str, value: &str) -> Result<()> {
        let name = name.trim();
        if name == "innate_mode" {
            self.innate_mode = value.parse()?;
            return Ok(());
        }
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::param(name, format!("`{value}` is not a number")))?;
        let equal = self.has_equal_stages();
        match name {
            "lambda0" => self.lambda0 = v,
            "dur_r" => self.dur_r = v,
            "dur_m" => self.dur_m = v,
            "dur_s" => self.dur_s = v,
            "beta" => self.beta = v,
            "d0" => self.d0 = v,
            "mu_mero" => self.mu_mero = v,
            "r_burst" => self.r_burst = v,
            "alpha_g" => self.alpha_g = v,
            "mu_g" => self.mu_g = v,
            "gamma_r" => self.gamma_r = v,
            "gamma_m" => self.gamma_m = v,
            "gamma_s" => self.gamma_s = v,
            "si_star" => self.si_star = v,
            "sa_star" => self.sa_star = v,
            "delta0" => self.delta0 = v,
            "delta1" => self.delta1 = v,
            "mu_bar" => self.mu_bar = v,
            "dev_time" => self.dev_time = v,
            "m0" => self.m0 = v,
            "k_stages" => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::param(name, format!("must be a positive integer, got {v}")));
                }
                self.set_equal_stages(v as usize);
                return Ok(());
            }
            other => return Err(Error::UnknownParameter(other.to_string())),
        }
        if equal && matches!(name, "d0" | "dev_time") {
            self.set_equal_stages(self.k_stages());
        }
        Ok(())
    }

    fn has_equal_stages(&self) -> bool {
        let k = self.k_stages() as f64;
        let mu0 = k / self.dev_time;
        self.stage_rates.iter().all(|&mu| ((mu - mu0) / mu0).abs() < 1e-12)
            && self.stage_deaths.iter().all(|&d| d == self.d0)
    }
}

//! State vectors of both models, recorded trajectories, and patient series.

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::pde::AgeMesh;
use crate::rbc;

/// Aggregate densities shared by both model states.
pub trait InfectionState {
    /// Total parasitized RBC density (cells·ml⁻¹).
    fn total_prbc(&self) -> f64;
    /// Total uninfected RBC density R_r + R_m + R_s (cells·ml⁻¹).
    fn total_urbc(&self) -> f64;
}

/// State of the K-stage chain model.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    pub r_r: f64,
    pub r_m: f64,
    pub r_s: f64,
    /// pRBC densities per stage, length K.
    pub p: Vec<f64>,
    pub m: f64,
    pub g: f64,
    /// Running ∫m ds over the adaptive-response window (cells·ml⁻¹·h).
    pub cum_m: f64,
}

impl OdeState {
    /// Uninfected host at RBC equilibrium carrying `m0` merozoites.
    pub fn initial(params: &ModelParams) -> Self {
        let eq = rbc::equilibrium(params);
        OdeState {
            r_r: eq.r_r_star,
            r_m: eq.r_m_star,
            r_s: eq.r_s_star,
            p: vec![0.0; params.k_stages()],
            m: params.m0,
            g: 0.0,
            cum_m: 0.0,
        }
    }

    pub(crate) fn dim(k: usize) -> usize {
        k + 6
    }

    /// Packs into `[r_r, r_m, r_s, m, g, cum_m, p_1..p_K]`.
    pub(crate) fn write_flat(&self, out: &mut [f64]) {
        out[0] = self.r_r;
        out[1] = self.r_m;
        out[2] = self.r_s;
        out[3] = self.m;
        out[4] = self.g;
        out[5] = self.cum_m;
        out[6..].copy_from_slice(&self.p);
    }

    pub(crate) fn read_flat(&mut self, y: &[f64]) {
        self.r_r = y[0];
        self.r_m = y[1];
        self.r_s = y[2];
        self.m = y[3];
        self.g = y[4];
        self.cum_m = y[5];
        self.p.copy_from_slice(&y[6..]);
    }
}

impl InfectionState for OdeState {
    fn total_prbc(&self) -> f64 {
        self.p.iter().sum()
    }

    fn total_urbc(&self) -> f64 {
        self.r_r + self.r_m + self.r_s
    }
}

/// State of the age-structured model. `p` holds cell-averaged densities
/// p(t, a) (cells·ml⁻¹·h⁻¹) on `mesh`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeState {
    pub r_r: f64,
    pub r_m: f64,
    pub r_s: f64,
    pub p: Vec<f64>,
    pub m: f64,
    pub g: f64,
    pub cum_m: f64,
    pub mesh: AgeMesh,
}

impl PdeState {
    /// Uninfected host at RBC equilibrium carrying `m0` merozoites.
    pub fn initial(params: &ModelParams, mesh: AgeMesh) -> Self {
        let eq = rbc::equilibrium(params);
        PdeState {
            r_r: eq.r_r_star,
            r_m: eq.r_m_star,
            r_s: eq.r_s_star,
            p: vec![0.0; mesh.n_cells()],
            m: params.m0,
            g: 0.0,
            cum_m: 0.0,
            mesh,
        }
    }
}

impl InfectionState for PdeState {
    fn total_prbc(&self) -> f64 {
        self.p.iter().sum::<f64>() * self.mesh.da()
    }

    fn total_urbc(&self) -> f64 {
        self.r_r + self.r_m + self.r_s
    }
}

/// Time series of observables. Times are in hours.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub gametocytes: Vec<f64>,
    pub merozoites: Vec<f64>,
    pub parasitemia: Vec<f64>,
    pub total_prbc: Vec<f64>,
    pub total_urbc: Vec<f64>,
}

/// One recorded row of a [`Trajectory`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub gametocytes: f64,
    pub merozoites: f64,
    pub parasitemia: f64,
    pub total_prbc: f64,
    pub total_urbc: f64,
}

impl Trajectory {
    pub fn with_capacity(n: usize) -> Self {
        Trajectory {
            times: Vec::with_capacity(n),
            gametocytes: Vec::with_capacity(n),
            merozoites: Vec::with_capacity(n),
            parasitemia: Vec::with_capacity(n),
            total_prbc: Vec::with_capacity(n),
            total_urbc: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, s: Sample) {
        self.times.push(s.t);
        self.gametocytes.push(s.gametocytes);
        self.merozoites.push(s.merozoites);
        self.parasitemia.push(s.parasitemia);
        self.total_prbc.push(s.total_prbc);
        self.total_urbc.push(s.total_urbc);
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            t: self.times[i],
            gametocytes: self.gametocytes[i],
            merozoites: self.merozoites[i],
            parasitemia: self.parasitemia[i],
            total_prbc: self.total_prbc[i],
            total_urbc: self.total_urbc[i],
        }
    }

    pub(crate) fn record<S: InfectionState>(&mut self, t: f64, state: &S, g: f64, m: f64) {
        let prbc = state.total_prbc();
        let urbc = state.total_urbc();
        let total = prbc + urbc;
        let parasitemia = if total > 0.0 {
            (prbc / total).clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.push(Sample {
            t,
            gametocytes: g,
            merozoites: m,
            parasitemia,
            total_prbc: prbc,
            total_urbc: urbc,
        });
    }

    /// Linear interpolation of a column at time `t` (hours); `None` outside
    /// the recorded span.
    pub fn interpolate(column: &[f64], times: &[f64], t: f64) -> Option<f64> {
        if times.is_empty() || t < times[0] || t > times[times.len() - 1] {
            return None;
        }
        let i = times.partition_point(|&x| x < t);
        if i < times.len() && times[i] == t {
            return Some(column[i]);
        }
        let (t0, t1) = (times[i - 1], times[i]);
        let w = (t - t0) / (t1 - t0);
        Some(column[i - 1] * (1.0 - w) + column[i] * w)
    }

    /// Gametocyte density at time `t` (hours), interpolated.
    pub fn gametocytes_at(&self, t: f64) -> Option<f64> {
        Self::interpolate(&self.gametocytes, &self.times, t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        let lens = [
            self.gametocytes.len(),
            self.merozoites.len(),
            self.parasitemia.len(),
            self.total_prbc.len(),
            self.total_urbc.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::InsufficientData("trajectory columns differ in length".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InsufficientData(
                "trajectory times not strictly increasing".into(),
            ));
        }
        if self.parasitemia.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InsufficientData("parasitemia outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Daily gametocyte observations for one patient, in cells·ml⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientSeries {
    pub patient_id: String,
    pub days: Vec<u32>,
    pub gametocyte_density: Vec<f64>,
}

impl PatientSeries {
    pub fn new(patient_id: impl Into<String>, days: Vec<u32>, gametocyte_density: Vec<f64>) -> Result<Self> {
        let s = PatientSeries {
            patient_id: patient_id.into(),
            days,
            gametocyte_density,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.days.len() != self.gametocyte_density.len() {
            return Err(Error::InsufficientData(format!(
                "patient {}: {} days but {} densities",
                self.patient_id,
                self.days.len(),
                self.gametocyte_density.len()
            )));
        }
        if let Some(w) = self.days.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InsufficientData(format!(
                "patient {}: day {} does not follow day {}",
                self.patient_id, w[1], w[0]
            )));
        }
        if let Some(v) = self.gametocyte_density.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InsufficientData(format!(
                "patient {}: invalid density {v}",
                self.patient_id
            )));
        }
        Ok(())
    }

    /// Last observation day in hours.
    pub fn last_hour(&self) -> f64 {
        self.days
            .last()
            .map_or(0.0, |&d| f64::from(d) * crate::params::HOURS_PER_DAY)
    }
}

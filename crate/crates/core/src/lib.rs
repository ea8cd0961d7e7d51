//! Within-host dynamics of malaria blood-stage infection: uninfected red
//! cell turnover, parasitized cells structured either by K maturation stages
//! or by continuous infection age, free merozoites, gametocytes and immune
//! control, together with fitting to gametocyte series and the power-law
//! relation between parasitemia and gametocytes.
//!
//! Time is in hours and densities in cells per ml throughout.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data_io;
pub mod error;
pub mod fitting;
pub mod immunity;
pub mod ode;
pub mod params;
pub mod pde;
pub mod rbc;
pub mod state;

pub use analysis::{
    clinical_gametocytes, fit_two_regime, fit_two_regime_with, parasitemia, r0_ode, r0_pde, RegressionFit,
    RegressionOptions,
};
pub use error::{Error, Result};
pub use fitting::{fit, FitProblem, FitResult, ModelKind, ObjectiveScale};
pub use ode::{chain_survival, simulate_ode, OdeSimConfig};
pub use params::{default_params, InnateMode, ModelParams, Unit};
pub use pde::{pde_survival, simulate_pde, AgeMesh, PdeSimConfig, RuptureFunction};
pub use state::{InfectionState, OdeState, PatientSeries, PdeState, Trajectory};

//! The advection-diffusion propagator: Hundsdorfer-Verwer stepping with the
//! mixed-derivative term treated explicitly, implicitly (schemes A and B) or
//! as part of a fully implicit predictor.

pub mod hv;
pub mod mixed;

pub use hv::{diffusion_step, fully_implicit_step, hv_step, hv_with_implicit_mixed, Workspace};
pub use mixed::{choose_beta, mixed_step_scheme_a, mixed_step_scheme_b, MixedDiag, MixedSolveSpec};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{PricerError, Result};
use crate::grid::Grid3D;

/// Scheme variant for the diffusion step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    HvExplicitMixed,
    ImplicitA,
    ImplicitB,
    FullyImplicit,
}

/// Numerical parameters of the time stepper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Time step in years.
    pub dt: f64,
    /// HV stage parameter theta.
    pub theta: f64,
    /// Multiplier in the beta bound for the EM-matrix construction.
    pub beta_mult: f64,
    /// Relative tolerance of the Picard iteration.
    pub picard_tol: f64,
    /// Iteration cap of the Picard iteration.
    pub picard_max: usize,
    pub scheme: Scheme,
    /// Number of damped first-order start-up steps.
    pub rannacher_steps: usize,
    /// Include the -rV discount term (split between F1 and F3).
    pub discounting: bool,
    /// Use the previous field as the Picard initial guess.
    pub picard_warm_start: bool,
    /// Record the field minimum after every sub-step.
    pub track_stage_mins: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 0.005,
            theta: 0.8,
            beta_mult: 10.0,
            picard_tol: 1e-6,
            picard_max: 10,
            scheme: Scheme::ImplicitB,
            rannacher_steps: 0,
            discounting: true,
            picard_warm_start: false,
            track_stage_mins: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(PricerError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(PricerError::InvalidConfig(format!("theta must lie in (0,1], got {}", self.theta)));
        }
        if !(self.beta_mult > 1.5) {
            return Err(PricerError::InvalidConfig(format!(
                "beta_mult must exceed 3/2 (strict EM-matrix bound), got {}",
                self.beta_mult
            )));
        }
        if !(self.picard_tol > 0.0) {
            return Err(PricerError::InvalidConfig("picard_tol must be > 0".into()));
        }
        if self.picard_max == 0 {
            return Err(PricerError::InvalidConfig("picard_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// The quantity propagated by every splitting step: option values over the
/// tensor grid, tagged with the backward time they correspond to.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub data: Array3<f64>,
    pub time_label: f64,
}

impl ValueField {
    pub fn new(data: Array3<f64>, time_label: f64) -> Self {
        ValueField { data, time_label }
    }

    pub fn zeros(grid: &Grid3D, time_label: f64) -> Self {
        let (ns, nv, nr) = grid.dims();
        ValueField { data: Array3::zeros((ns, nv, nr)), time_label }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(PricerError::ValidationFailure("value field contains non-finite entries".into()));
        }
        Ok(())
    }
}

/// Per-step diagnostics: Picard behaviour and field extrema.
#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    /// Number of mixed-derivative pair solves performed.
    pub picard_solves: usize,
    /// Total Picard iterations across those solves.
    pub picard_iters: usize,
    /// Solves that converged within two iterations.
    pub picard_within_two: usize,
    /// Largest iteration count seen.
    pub picard_max_seen: usize,
    /// Largest empirical contraction ratio (second change / first change).
    pub contraction_max: f64,
    pub field_min: f64,
    pub field_max: f64,
    /// Minimum over every intermediate stage, when tracking is enabled.
    pub stage_mins: Vec<f64>,
}

impl StepDiagnostics {
    pub fn absorb_mixed(&mut self, d: &MixedDiag) {
        self.picard_solves += d.solves;
        self.picard_iters += d.iters_total;
        self.picard_within_two += d.within_two;
        self.picard_max_seen = self.picard_max_seen.max(d.max_iters_seen);
        if d.contraction_max > self.contraction_max {
            self.contraction_max = d.contraction_max;
        }
    }

    pub fn csv_header() -> &'static str {
        "step,tau,picard_solves,picard_iters,picard_within_two,picard_max,contraction_max,field_min,field_max"
    }

    pub fn csv_row(&self, step: usize, tau: f64) -> String {
        format!(
            "{},{:.10e},{},{},{},{},{:.3e},{:.10e},{:.10e}",
            step,
            tau,
            self.picard_solves,
            self.picard_iters,
            self.picard_within_two,
            self.picard_max_seen,
            self.contraction_max,
            self.field_min,
            self.field_max
        )
    }
}

//! Noise, time integrators and trajectory diagnostics for
//! `dU = (-αU + K F(U)) dt + ε B dW`.

mod analysis;
mod integrate;
mod noise;
mod record;

pub use analysis::{
    convergence_table, detect_switches, detect_switches_in_means, doss_sussmann_study, ensemble, invariance_monitor,
    Direction, SwitchEvent,
};
pub use integrate::{
    doss_sussmann_simulate, doss_sussmann_with_path, em_simulate_full, em_simulate_with_source, galerkin_simulate,
    galerkin_simulate_with_source,
};
pub use noise::{
    sample_noise_increments, IncrementSource, NoiseMode, NoisePath, NoiseRule, NoiseSpec, NoiseStream, NoiseTarget,
    PathReplay,
};
pub use record::{Diagnostics, Integrator, StateKind, TrajectoryRecord, TrajectoryTable};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::operator::DEFAULT_MEMBERSHIP_TOL;

pub const DEFAULT_CLAMP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub t_end: f64,
    pub u0: Field,
    pub record_every: usize,
    pub clamp: f64,
    pub allow_non_lipschitz: bool,
    pub membership_tol: f64,
    /// Compute `Θ`, `‖·‖_H`, `‖·‖₋₁` at each snapshot.
    pub diagnostics: bool,
}

impl SimConfig {
    pub fn new(alpha: f64, epsilon: f64, dt: f64, t_end: f64, u0: Field) -> Self {
        Self {
            alpha,
            epsilon,
            dt,
            t_end,
            u0,
            record_every: 1,
            clamp: DEFAULT_CLAMP,
            allow_non_lipschitz: false,
            membership_tol: DEFAULT_MEMBERSHIP_TOL,
            diagnostics: true,
        }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn allow_non_lipschitz(mut self, yes: bool) -> Self {
        self.allow_non_lipschitz = yes;
        self
    }

    pub fn diagnostics(mut self, yes: bool) -> Self {
        self.diagnostics = yes;
        self
    }

    /// Validates and returns the step count `round(T / Δt)`.
    pub fn validate(&self) -> Result<usize> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if self.dt >= 2.0 / self.alpha {
            return bad(format!("dt = {} violates dt < 2/alpha = {}", self.dt, 2.0 / self.alpha));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        if !(self.clamp > 0.0) {
            return bad(format!("clamp must be > 0, got {}", self.clamp));
        }
        let steps = (self.t_end / self.dt).round();
        if steps < 1.0 {
            return bad(format!("t_end / dt rounds to {steps}"));
        }
        Ok(steps as usize)
    }

    pub fn steps(&self) -> Result<usize> {
        self.validate()
    }
}

//! Trajectory containers and time-grid bookkeeping.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::vec_finite;

/// Fixed discretization of the planning horizon: `steps` control intervals of
/// `dt` seconds each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, dt: f64) -> Result<Self> {
        if steps < 1 {
            return Err(Error::Contract("TimeGrid requires at least one step".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Contract(format!("TimeGrid requires dt > 0, got {dt}")));
        }
        Ok(TimeGrid { steps, dt })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}

/// Paired state/control sequences on a fixed time grid: `states` has length
/// `T + 1`, `controls` has length `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>) -> Result<Self> {
        if states.len() != controls.len() + 1 {
            return Err(Error::dimension(
                "Trajectory",
                format!("{} states for {} controls", controls.len() + 1, controls.len()),
                format!("{} states", states.len()),
            ));
        }
        if states.is_empty() {
            return Err(Error::Contract("Trajectory requires at least one state".into()));
        }
        for (t, x) in states.iter().enumerate() {
            if !vec_finite(x) {
                return Err(Error::non_finite(format!("trajectory state {t}")));
            }
        }
        for (t, u) in controls.iter().enumerate() {
            if !vec_finite(u) {
                return Err(Error::non_finite(format!("trajectory control {t}")));
            }
        }
        Ok(Trajectory { states, controls })
    }

    /// Number of control intervals `T`.
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn nx(&self) -> usize {
        self.states[0].len()
    }

    pub fn nu(&self) -> usize {
        self.controls.first().map_or(0, |u| u.len())
    }

    /// States stacked time-major into a single `(nx·(T+1))`-vector.
    pub fn stacked_states(&self) -> DVector<f64> {
        let nx = self.nx();
        let mut out = DVector::zeros(nx * self.states.len());
        for (t, x) in self.states.iter().enumerate() {
            out.rows_mut(t * nx, nx).copy_from(x);
        }
        out
    }

    /// Controls stacked time-major into a single `(nu·T)`-vector.
    pub fn stacked_controls(&self) -> DVector<f64> {
        let nu = self.nu();
        let mut out = DVector::zeros(nu * self.controls.len());
        for (t, u) in self.controls.iter().enumerate() {
            out.rows_mut(t * nu, nu).copy_from(u);
        }
        out
    }
}

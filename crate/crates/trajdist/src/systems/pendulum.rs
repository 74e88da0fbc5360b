//! Damped pendulum, angle measured from the hanging position.
//!
//! State `(θ, θ̇)`, control is the joint torque:
//! `θ̈ = −(g/l)·sin θ − b·θ̇/(m l²) + u/(m l²)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub damping: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 1.0,
            length: 1.0,
            damping: 0.1,
            gravity: 9.81,
            dt: 0.05,
        }
    }
}

pub(super) fn dynamics(p: &PendulumParams, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let ml2 = p.mass * p.length * p.length;
    let theta_ddot = -(p.gravity / p.length) * x[0].sin() - p.damping * x[1] / ml2 + u[0] / ml2;
    DVector::from_vec(vec![x[1], theta_ddot])
}

pub(super) fn jacobians(p: &PendulumParams, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let ml2 = p.mass * p.length * p.length;
    let dfdx = DMatrix::from_row_slice(
        2,
        2,
        &[
            0.0,
            1.0,
            -(p.gravity / p.length) * x[0].cos(),
            -p.damping / ml2,
        ],
    );
    let dfdu = DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / ml2]);
    (dfdx, dfdu)
}

/// Pendulum tip in the vertical plane and its state Jacobian.
pub(super) fn tip(p: &PendulumParams, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (s, c) = x[0].sin_cos();
    let point = DVector::from_vec(vec![p.length * s, -p.length * c]);
    let jac = DMatrix::from_row_slice(2, 2, &[p.length * c, 0.0, p.length * s, 0.0]);
    (point, jac)
}

//! Planar bicopter: state `(x, y, θ, ẋ, ẏ, θ̇)`, controls are the two rotor
//! thrusts.
//!
//! `ẍ = −(f₁+f₂)·sin θ / m`, `ÿ = (f₁+f₂)·cos θ / m − g`,
//! `θ̈ = arm·(f₁−f₂) / I`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BicopterParams {
    pub mass: f64,
    pub arm: f64,
    pub inertia: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for BicopterParams {
    fn default() -> Self {
        BicopterParams {
            mass: 0.5,
            arm: 0.17,
            inertia: 0.005,
            gravity: 9.81,
            dt: 0.05,
        }
    }
}

impl BicopterParams {
    /// Per-rotor thrust that balances gravity at level attitude.
    pub fn hover_thrusts(&self) -> DVector<f64> {
        DVector::from_element(2, self.mass * self.gravity / 2.0)
    }
}

pub(super) fn dynamics(p: &BicopterParams, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let (s, c) = x[2].sin_cos();
    let thrust = u[0] + u[1];
    DVector::from_vec(vec![
        x[3],
        x[4],
        x[5],
        -thrust * s / p.mass,
        thrust * c / p.mass - p.gravity,
        p.arm * (u[0] - u[1]) / p.inertia,
    ])
}

pub(super) fn jacobians(p: &BicopterParams, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (s, c) = x[2].sin_cos();
    let thrust = u[0] + u[1];
    let mut dfdx = DMatrix::zeros(6, 6);
    dfdx[(0, 3)] = 1.0;
    dfdx[(1, 4)] = 1.0;
    dfdx[(2, 5)] = 1.0;
    dfdx[(3, 2)] = -thrust * c / p.mass;
    dfdx[(4, 2)] = -thrust * s / p.mass;

    let mut dfdu = DMatrix::zeros(6, 2);
    dfdu[(3, 0)] = -s / p.mass;
    dfdu[(3, 1)] = -s / p.mass;
    dfdu[(4, 0)] = c / p.mass;
    dfdu[(4, 1)] = c / p.mass;
    dfdu[(5, 0)] = p.arm / p.inertia;
    dfdu[(5, 1)] = -p.arm / p.inertia;
    (dfdx, dfdu)
}

//! Double-integrator point mass in 1-3 workspace dimensions.
//!
//! State `(p, v)`, control `u` is the commanded acceleration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PointMassParams {
    pub dims: usize,
    pub dt: f64,
}

pub(super) fn dynamics(p: &PointMassParams, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let d = p.dims;
    let mut xdot = DVector::zeros(2 * d);
    for i in 0..d {
        xdot[i] = x[d + i];
        xdot[d + i] = u[i];
    }
    xdot
}

pub(super) fn jacobians(p: &PointMassParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = p.dims;
    let mut dfdx = DMatrix::zeros(2 * d, 2 * d);
    let mut dfdu = DMatrix::zeros(2 * d, d);
    for i in 0..d {
        dfdx[(i, d + i)] = 1.0;
        dfdu[(d + i, i)] = 1.0;
    }
    (dfdx, dfdu)
}

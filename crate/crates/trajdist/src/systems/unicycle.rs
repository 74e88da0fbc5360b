//! Kinematic unicycle: state `(x, y, θ)`, controls `(v, ω)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UnicycleParams {
    pub dt: f64,
}

pub(super) fn dynamics(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let (s, c) = x[2].sin_cos();
    DVector::from_vec(vec![u[0] * c, u[0] * s, u[1]])
}

pub(super) fn jacobians(x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (s, c) = x[2].sin_cos();
    let mut dfdx = DMatrix::zeros(3, 3);
    dfdx[(0, 2)] = -u[0] * s;
    dfdx[(1, 2)] = u[0] * c;
    let dfdu = DMatrix::from_row_slice(3, 2, &[c, 0.0, s, 0.0, 0.0, 1.0]);
    (dfdx, dfdu)
}

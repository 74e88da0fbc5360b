//! 12-state quadcopter with Euler-angle attitude.
//!
//! State `(p, η, v, ω)` with position `p`, ZYX Euler angles `η = (φ, θ, ψ)`,
//! world-frame linear velocity `v`, and body rates `ω = (p, q, r)`. Controls
//! are the four rotor thrusts; rotors sit on the +x, +y, −x, −y arms, so
//! roll torque is `arm·(f₂−f₄)`, pitch torque `arm·(f₃−f₁)` and yaw torque
//! `κ·(f₁−f₂+f₃−f₄)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadcopterParams {
    pub mass: f64,
    pub arm: f64,
    pub inertia_x: f64,
    pub inertia_y: f64,
    pub inertia_z: f64,
    /// Rotor drag coefficient mapping thrust to yaw torque.
    pub torque_coeff: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for QuadcopterParams {
    fn default() -> Self {
        QuadcopterParams {
            mass: 0.8,
            arm: 0.17,
            inertia_x: 0.005,
            inertia_y: 0.005,
            inertia_z: 0.009,
            torque_coeff: 0.016,
            gravity: 9.81,
            dt: 0.05,
        }
    }
}

impl QuadcopterParams {
    /// Per-rotor thrust that balances gravity at level attitude.
    pub fn hover_thrusts(&self) -> DVector<f64> {
        DVector::from_element(4, self.mass * self.gravity / 4.0)
    }
}

/// Third column of the ZYX rotation matrix (world direction of body z).
fn body_z(phi: f64, theta: f64, psi: f64) -> [f64; 3] {
    let (sph, cph) = phi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (sps, cps) = psi.sin_cos();
    [
        cps * sth * cph + sps * sph,
        sps * sth * cph - cps * sph,
        cth * cph,
    ]
}

pub(super) fn dynamics(p: &QuadcopterParams, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let (phi, theta, psi) = (x[3], x[4], x[5]);
    let (wx, wy, wz) = (x[9], x[10], x[11]);
    let (sph, cph) = phi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let tth = sth / cth;

    let thrust = u[0] + u[1] + u[2] + u[3];
    let r3 = body_z(phi, theta, psi);
    let torque = [
        p.arm * (u[1] - u[3]),
        p.arm * (u[2] - u[0]),
        p.torque_coeff * (u[0] - u[1] + u[2] - u[3]),
    ];

    let mut xdot = DVector::zeros(12);
    xdot[0] = x[6];
    xdot[1] = x[7];
    xdot[2] = x[8];
    xdot[3] = wx + wy * sph * tth + wz * cph * tth;
    xdot[4] = wy * cph - wz * sph;
    xdot[5] = (wy * sph + wz * cph) / cth;
    xdot[6] = thrust * r3[0] / p.mass;
    xdot[7] = thrust * r3[1] / p.mass;
    xdot[8] = thrust * r3[2] / p.mass - p.gravity;
    xdot[9] = (torque[0] - (p.inertia_z - p.inertia_y) * wy * wz) / p.inertia_x;
    xdot[10] = (torque[1] - (p.inertia_x - p.inertia_z) * wx * wz) / p.inertia_y;
    xdot[11] = (torque[2] - (p.inertia_y - p.inertia_x) * wx * wy) / p.inertia_z;
    xdot
}

pub(super) fn jacobians(p: &QuadcopterParams, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (phi, theta, psi) = (x[3], x[4], x[5]);
    let (wy, wz) = (x[10], x[11]);
    let wx = x[9];
    let (sph, cph) = phi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (sps, cps) = psi.sin_cos();
    let tth = sth / cth;
    let sec2 = 1.0 / (cth * cth);

    let thrust = u[0] + u[1] + u[2] + u[3];
    let r3 = body_z(phi, theta, psi);

    let mut dfdx = DMatrix::zeros(12, 12);
    // Position kinematics.
    for i in 0..3 {
        dfdx[(i, 6 + i)] = 1.0;
    }
    // Attitude kinematics.
    dfdx[(3, 3)] = wy * cph * tth - wz * sph * tth;
    dfdx[(3, 4)] = (wy * sph + wz * cph) * sec2;
    dfdx[(3, 9)] = 1.0;
    dfdx[(3, 10)] = sph * tth;
    dfdx[(3, 11)] = cph * tth;
    dfdx[(4, 3)] = -wy * sph - wz * cph;
    dfdx[(4, 10)] = cph;
    dfdx[(4, 11)] = -sph;
    dfdx[(5, 3)] = (wy * cph - wz * sph) / cth;
    dfdx[(5, 4)] = (wy * sph + wz * cph) * sth * sec2;
    dfdx[(5, 10)] = sph / cth;
    dfdx[(5, 11)] = cph / cth;
    // Translational dynamics: thrust direction depends on attitude.
    let dr3_dphi = [
        -cps * sth * sph + sps * cph,
        -sps * sth * sph - cps * cph,
        -cth * sph,
    ];
    let dr3_dtheta = [cps * cth * cph, sps * cth * cph, -sth * cph];
    let dr3_dpsi = [-sps * sth * cph + cps * sph, cps * sth * cph + sps * sph, 0.0];
    for i in 0..3 {
        dfdx[(6 + i, 3)] = thrust * dr3_dphi[i] / p.mass;
        dfdx[(6 + i, 4)] = thrust * dr3_dtheta[i] / p.mass;
        dfdx[(6 + i, 5)] = thrust * dr3_dpsi[i] / p.mass;
    }
    // Rotational dynamics: gyroscopic coupling.
    dfdx[(9, 10)] = -(p.inertia_z - p.inertia_y) * wz / p.inertia_x;
    dfdx[(9, 11)] = -(p.inertia_z - p.inertia_y) * wy / p.inertia_x;
    dfdx[(10, 9)] = -(p.inertia_x - p.inertia_z) * wz / p.inertia_y;
    dfdx[(10, 11)] = -(p.inertia_x - p.inertia_z) * wx / p.inertia_y;
    dfdx[(11, 9)] = -(p.inertia_y - p.inertia_x) * wy / p.inertia_z;
    dfdx[(11, 10)] = -(p.inertia_y - p.inertia_x) * wx / p.inertia_z;

    let mut dfdu = DMatrix::zeros(12, 4);
    for i in 0..3 {
        for j in 0..4 {
            dfdu[(6 + i, j)] = r3[i] / p.mass;
        }
    }
    dfdu[(9, 1)] = p.arm / p.inertia_x;
    dfdu[(9, 3)] = -p.arm / p.inertia_x;
    dfdu[(10, 0)] = -p.arm / p.inertia_y;
    dfdu[(10, 2)] = p.arm / p.inertia_y;
    dfdu[(11, 0)] = p.torque_coeff / p.inertia_z;
    dfdu[(11, 1)] = -p.torque_coeff / p.inertia_z;
    dfdu[(11, 2)] = p.torque_coeff / p.inertia_z;
    dfdu[(11, 3)] = -p.torque_coeff / p.inertia_z;
    (dfdx, dfdu)
}

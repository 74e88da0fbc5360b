//! n-link planar manipulator under double-integrator joint dynamics.
//!
//! State `(q, q̇)` with joint angles `q`; the control is the joint
//! acceleration command, so the dynamics are linear while the end-effector
//! geometry (and hence any workspace cost) stays nonlinear.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlanarArmParams {
    pub links: usize,
    pub link_length: f64,
    pub dt: f64,
}

impl Default for PlanarArmParams {
    fn default() -> Self {
        PlanarArmParams {
            links: 7,
            link_length: 0.3,
            dt: 0.05,
        }
    }
}

pub(super) fn dynamics(p: &PlanarArmParams, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let n = p.links;
    let mut xdot = DVector::zeros(2 * n);
    for i in 0..n {
        xdot[i] = x[n + i];
        xdot[n + i] = u[i];
    }
    xdot
}

pub(super) fn jacobians(p: &PlanarArmParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = p.links;
    let mut dfdx = DMatrix::zeros(2 * n, 2 * n);
    let mut dfdu = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        dfdx[(i, n + i)] = 1.0;
        dfdu[(n + i, i)] = 1.0;
    }
    (dfdx, dfdu)
}

/// Forward kinematics of the end effector and its Jacobian w.r.t. the state.
pub(super) fn end_effector(p: &PlanarArmParams, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = p.links;
    let mut point = DVector::zeros(2);
    let mut cumulative = 0.0;
    let mut link_dirs = Vec::with_capacity(n);
    for i in 0..n {
        cumulative += x[i];
        let (s, c) = cumulative.sin_cos();
        point[0] += p.link_length * c;
        point[1] += p.link_length * s;
        link_dirs.push((s, c));
    }
    // ∂p/∂q_j sums the contributions of links j..n.
    let mut jac = DMatrix::zeros(2, 2 * n);
    let mut sum_s = 0.0;
    let mut sum_c = 0.0;
    for j in (0..n).rev() {
        let (s, c) = link_dirs[j];
        sum_s += p.link_length * s;
        sum_c += p.link_length * c;
        jac[(0, j)] = -sum_s;
        jac[(1, j)] = sum_c;
    }
    (point, jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_arm_reaches_full_length() {
        let p = PlanarArmParams { links: 3, link_length: 0.5, dt: 0.05 };
        let x = DVector::zeros(6);
        let (point, _) = end_effector(&p, &x);
        assert!((point[0] - 1.5).abs() < 1e-12);
        assert!(point[1].abs() < 1e-12);
    }

    #[test]
    fn end_effector_jacobian_matches_finite_differences() {
        let p = PlanarArmParams { links: 4, link_length: 0.3, dt: 0.05 };
        let x = DVector::from_vec(vec![0.3, -0.5, 0.8, 0.2, 0.0, 0.0, 0.0, 0.0]);
        let (_, jac) = end_effector(&p, &x);
        let h = 1e-7;
        for j in 0..8 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let d = (end_effector(&p, &xp).0 - end_effector(&p, &xm).0) / (2.0 * h);
            for i in 0..2 {
                assert!((jac[(i, j)] - d[i]).abs() < 1e-6, "entry ({i},{j})");
            }
        }
    }
}

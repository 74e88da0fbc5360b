//! Built-in self-tests behind the `check` subcommand: derivative and
//! equivalence spot checks that validate a build on the target machine.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::costs::Cost;
use crate::gaussian::{GaussianDist, TrajDist};
use crate::harness::tasks;
use crate::linalg;
use crate::lqr::{solve_batch, solve_riccati, LQRProblem};
use crate::systems::SystemModel;

pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn fd_jacobian_check(model: &SystemModel, rng: &mut ChaCha12Rng, points: usize, tol: f64) -> (bool, String) {
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for _ in 0..points {
        let x = DVector::from_fn(model.nx(), |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(model.nu(), |_, _| rng.random_range(-1.0..1.0));
        let jac = match model.linearize(&x, &u) {
            Ok(j) => j,
            Err(e) => return (false, format!("linearize failed: {e}")),
        };
        for j in 0..model.nx() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (model.step(&xp, &u).unwrap() - model.step(&xm, &u).unwrap()) / (2.0 * h);
            worst = worst.max((jac.a.column(j) - col).amax());
        }
        for j in 0..model.nu() {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let col = (model.step(&x, &up).unwrap() - model.step(&x, &um).unwrap()) / (2.0 * h);
            worst = worst.max((jac.b.column(j) - col).amax());
        }
    }
    (worst < tol, format!("max Jacobian error {worst:.2e}"))
}

fn batch_riccati_check(rng: &mut ChaCha12Rng) -> (bool, String) {
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let (nx, nu, horizon) = (3, 2, 12);
        let spd = |n: usize, rng: &mut ChaCha12Rng| {
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            &m * m.transpose() * 0.4 + DMatrix::identity(n, n) * 0.2
        };
        let prob = LQRProblem {
            a_seq: (0..horizon)
                .map(|_| DMatrix::from_fn(nx, nx, |_, _| rng.random_range(-0.8..0.8)))
                .collect(),
            b_seq: (0..horizon)
                .map(|_| DMatrix::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0)))
                .collect(),
            q_blocks: (0..=horizon).map(|_| spd(nx, rng)).collect(),
            r_blocks: (0..horizon).map(|_| spd(nu, rng)).collect(),
            x0: DVector::from_fn(nx, |_, _| rng.random_range(-1.0..1.0)),
            q_lin: None,
            r_lin: None,
        };
        let ctrl = match solve_batch(&prob) {
            Ok(c) => c,
            Err(e) => return (false, format!("batch solve failed: {e}")),
        };
        let policy = match solve_riccati(&prob) {
            Ok(p) => p,
            Err(e) => return (false, format!("Riccati solve failed: {e}")),
        };
        let rollout = policy.rollout(&prob).unwrap();
        worst = worst.max((rollout - &ctrl.mean).amax());
    }
    (worst < 1e-8, format!("max batch/Riccati gap {worst:.2e}"))
}

fn cost_derivative_check(rng: &mut ChaCha12Rng) -> (bool, String) {
    let task = tasks::quadcopter_reach();
    let model = &task.model;
    let spec = &task.cost;
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let x = DVector::from_fn(model.nx(), |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(model.nu(), |_, _| rng.random_range(-1.0..1.0));
        let d = spec.quadratize(model, 1, 10, &x, Some(&u)).unwrap();
        for j in 0..model.nx() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let vp = spec.quadratize(model, 1, 10, &xp, Some(&u)).unwrap().value;
            let vm = spec.quadratize(model, 1, 10, &xm, Some(&u)).unwrap().value;
            worst = worst.max((d.cx[j] - (vp - vm) / (2.0 * h)).abs());
        }
    }
    (worst < 1e-4, format!("max cost gradient error {worst:.2e}"))
}

fn gaussian_check() -> (bool, String) {
    // Hand-computable conditioning example.
    let mean = DVector::zeros(2);
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let dist = match TrajDist::new(GaussianDist::new(mean, cov).unwrap(), 1, 1) {
        Ok(d) => d,
        Err(e) => return (false, format!("{e}")),
    };
    let conds = match dist.condition(0, &DVector::from_vec(vec![1.0]), 1) {
        Ok(c) => c,
        Err(e) => return (false, format!("{e}")),
    };
    let mean_err = (conds[0].mean()[0] - 0.5).abs();
    let cov_err = (conds[0].cov()[(0, 0)] - 0.75).abs();
    (
        mean_err < 1e-12 && cov_err < 1e-12,
        format!("conditioning errors mean {mean_err:.2e}, cov {cov_err:.2e}"),
    )
}

fn solve_check(rng: &mut ChaCha12Rng) -> (bool, String) {
    let m = {
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(6, 6) * 0.1
    };
    let rhs = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
    match linalg::symmetric_solve(&m, &rhs) {
        Ok(x) => {
            let resid = (&m * &x - &rhs).norm() / rhs.norm();
            (resid < 1e-10, format!("solve residual {resid:.2e}"))
        }
        Err(e) => (false, format!("{e}")),
    }
}

/// Runs every self-test, returning one outcome per check.
pub fn run_all() -> Vec<CheckOutcome> {
    let mut rng = ChaCha12Rng::seed_from_u64(20_240_501);
    let mut out = Vec::new();

    for name in ["point_mass", "pendulum", "unicycle", "bicopter", "quadcopter", "planar_arm"] {
        let model = tasks::preset(name).unwrap().model;
        let (passed, detail) = fd_jacobian_check(&model, &mut rng, 20, 1e-5);
        out.push(CheckOutcome {
            name: Box::leak(format!("jacobians/{name}").into_boxed_str()),
            passed,
            detail,
        });
    }
    let (passed, detail) = batch_riccati_check(&mut rng);
    out.push(CheckOutcome { name: "lqr/batch_riccati_equivalence", passed, detail });
    let (passed, detail) = cost_derivative_check(&mut rng);
    out.push(CheckOutcome { name: "costs/gradient_consistency", passed, detail });
    let (passed, detail) = gaussian_check();
    out.push(CheckOutcome { name: "gaussian/conditioning", passed, detail });
    let (passed, detail) = solve_check(&mut rng);
    out.push(CheckOutcome { name: "linalg/symmetric_solve", passed, detail });
    out
}

//! Discrete-time plant models with analytic Jacobians.
//!
//! All nonlinear plants share the same explicit-Euler discretization of their
//! continuous dynamics; `Linear` wraps an already-discrete system. Models are
//! immutable after construction and all operations are pure.

mod bicopter;
mod pendulum;
mod planar_arm;
mod point_mass;
mod quadcopter;
mod unicycle;

pub use bicopter::BicopterParams;
pub use pendulum::PendulumParams;
pub use planar_arm::PlanarArmParams;
pub use point_mass::PointMassParams;
pub use quadcopter::QuadcopterParams;
pub use unicycle::UnicycleParams;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::vec_finite;
use crate::trajectory::Trajectory;

/// Dynamics Jacobians `A = ∂f/∂x`, `B = ∂f/∂u` of the discrete step map.
#[derive(Clone, Debug)]
pub struct Jacobians {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// A discrete-time linear system `x' = A x + B u` (mainly used to bridge LQR
/// problems into the iLQR solver and in tests).
#[derive(Clone, Debug)]
pub struct LinearParams {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dt: f64,
}

/// The plant catalog.
#[derive(Clone, Debug)]
pub enum SystemModel {
    Linear(LinearParams),
    PointMass(PointMassParams),
    Pendulum(PendulumParams),
    Unicycle(UnicycleParams),
    Bicopter(BicopterParams),
    Quadcopter(QuadcopterParams),
    PlanarArm(PlanarArmParams),
}

impl SystemModel {
    pub fn name(&self) -> &'static str {
        match self {
            SystemModel::Linear(_) => "linear",
            SystemModel::PointMass(_) => "point_mass",
            SystemModel::Pendulum(_) => "pendulum",
            SystemModel::Unicycle(_) => "unicycle",
            SystemModel::Bicopter(_) => "bicopter",
            SystemModel::Quadcopter(_) => "quadcopter",
            SystemModel::PlanarArm(_) => "planar_arm",
        }
    }

    pub fn nx(&self) -> usize {
        match self {
            SystemModel::Linear(p) => p.a.nrows(),
            SystemModel::PointMass(p) => 2 * p.dims,
            SystemModel::Pendulum(_) => 2,
            SystemModel::Unicycle(_) => 3,
            SystemModel::Bicopter(_) => 6,
            SystemModel::Quadcopter(_) => 12,
            SystemModel::PlanarArm(p) => 2 * p.links,
        }
    }

    pub fn nu(&self) -> usize {
        match self {
            SystemModel::Linear(p) => p.b.ncols(),
            SystemModel::PointMass(p) => p.dims,
            SystemModel::Pendulum(_) => 1,
            SystemModel::Unicycle(_) => 2,
            SystemModel::Bicopter(_) => 2,
            SystemModel::Quadcopter(_) => 4,
            SystemModel::PlanarArm(p) => p.links,
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            SystemModel::Linear(p) => p.dt,
            SystemModel::PointMass(p) => p.dt,
            SystemModel::Pendulum(p) => p.dt,
            SystemModel::Unicycle(p) => p.dt,
            SystemModel::Bicopter(p) => p.dt,
            SystemModel::Quadcopter(p) => p.dt,
            SystemModel::PlanarArm(p) => p.dt,
        }
    }

    /// Indices of the velocity sub-state, the target of additive velocity
    /// disturbances. Empty for plants without a velocity sub-state.
    pub fn velocity_indices(&self) -> Vec<usize> {
        match self {
            SystemModel::Linear(_) | SystemModel::Unicycle(_) => Vec::new(),
            SystemModel::PointMass(p) => (p.dims..2 * p.dims).collect(),
            SystemModel::Pendulum(_) => vec![1],
            SystemModel::Bicopter(_) => vec![3, 4, 5],
            SystemModel::Quadcopter(_) => (6..12).collect(),
            SystemModel::PlanarArm(p) => (p.links..2 * p.links).collect(),
        }
    }

    fn check_dims(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        if x.len() != self.nx() || u.len() != self.nu() {
            return Err(Error::dimension(
                format!("{}::step", self.name()),
                format!("x:{} u:{}", self.nx(), self.nu()),
                format!("x:{} u:{}", x.len(), u.len()),
            ));
        }
        if !vec_finite(x) || !vec_finite(u) {
            return Err(Error::non_finite(format!("{} input", self.name())));
        }
        Ok(())
    }

    /// One discrete dynamics step `x_{t+1} = f(x_t, u_t)`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        Ok(match self {
            SystemModel::Linear(p) => &p.a * x + &p.b * u,
            SystemModel::PointMass(p) => x + point_mass::dynamics(p, x, u) * p.dt,
            SystemModel::Pendulum(p) => x + pendulum::dynamics(p, x, u) * p.dt,
            SystemModel::Unicycle(p) => x + unicycle::dynamics(x, u) * p.dt,
            SystemModel::Bicopter(p) => x + bicopter::dynamics(p, x, u) * p.dt,
            SystemModel::Quadcopter(p) => x + quadcopter::dynamics(p, x, u) * p.dt,
            SystemModel::PlanarArm(p) => x + planar_arm::dynamics(p, x, u) * p.dt,
        })
    }

    /// Analytic Jacobians of the discrete step map at `(x, u)`.
    pub fn linearize(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Jacobians> {
        self.check_dims(x, u)?;
        if let SystemModel::Linear(p) = self {
            return Ok(Jacobians { a: p.a.clone(), b: p.b.clone() });
        }
        let (dfdx, dfdu) = match self {
            SystemModel::Linear(_) => unreachable!(),
            SystemModel::PointMass(p) => point_mass::jacobians(p),
            SystemModel::Pendulum(p) => pendulum::jacobians(p, x),
            SystemModel::Unicycle(_) => unicycle::jacobians(x, u),
            SystemModel::Bicopter(p) => bicopter::jacobians(p, x, u),
            SystemModel::Quadcopter(p) => quadcopter::jacobians(p, x, u),
            SystemModel::PlanarArm(p) => planar_arm::jacobians(p),
        };
        let dt = self.dt();
        let nx = self.nx();
        let a = DMatrix::identity(nx, nx) + dfdx * dt;
        let b = dfdu * dt;
        Ok(Jacobians { a, b })
    }

    /// Rolls `controls` out from `x0` through the true dynamics.
    pub fn rollout(&self, x0: &DVector<f64>, controls: &[DVector<f64>]) -> Result<Trajectory> {
        if controls.is_empty() {
            return Err(Error::Contract("rollout requires at least one control".into()));
        }
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for (t, u) in controls.iter().enumerate() {
            let next = self.step(states.last().unwrap(), u).map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} at step {t}"),
                },
                other => other,
            })?;
            if !vec_finite(&next) {
                return Err(Error::non_finite(format!("{} rollout at step {t}", self.name())));
            }
            states.push(next);
        }
        Trajectory::new(states, controls.to_vec())
    }

    /// Workspace point relevant for obstacle/goal geometry (end effector for
    /// the arm, center of mass otherwise) and its Jacobian w.r.t. the state.
    pub fn workspace_point(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let nx = self.nx();
        match self {
            SystemModel::Linear(_) => (x.clone(), DMatrix::identity(nx, nx)),
            SystemModel::PointMass(p) => {
                let d = p.dims;
                let mut jac = DMatrix::zeros(d, nx);
                jac.view_mut((0, 0), (d, d)).copy_from(&DMatrix::identity(d, d));
                (x.rows(0, d).clone_owned(), jac)
            }
            SystemModel::Pendulum(p) => pendulum::tip(p, x),
            SystemModel::Unicycle(_) | SystemModel::Bicopter(_) => {
                let mut jac = DMatrix::zeros(2, nx);
                jac[(0, 0)] = 1.0;
                jac[(1, 1)] = 1.0;
                (x.rows(0, 2).clone_owned(), jac)
            }
            SystemModel::Quadcopter(_) => {
                let mut jac = DMatrix::zeros(3, nx);
                for i in 0..3 {
                    jac[(i, i)] = 1.0;
                }
                (x.rows(0, 3).clone_owned(), jac)
            }
            SystemModel::PlanarArm(p) => planar_arm::end_effector(p, x),
        }
    }

    /// Builds a model from a config entry (`name`, `dt`, named scalar
    /// parameters). Unknown names and non-physical parameters are rejected.
    pub fn from_config(name: &str, dt: f64, params: &BTreeMap<String, f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("system dt must be positive, got {dt}")));
        }
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let positive = |key: &str, value: f64| -> Result<f64> {
            if value > 0.0 {
                Ok(value)
            } else {
                Err(Error::Config(format!("parameter {key} must be positive, got {value}")))
            }
        };
        match name {
            "point_mass" => {
                let dims = get("dims", 2.0) as usize;
                if !(1..=3).contains(&dims) {
                    return Err(Error::Config(format!("point_mass dims must be 1..=3, got {dims}")));
                }
                Ok(SystemModel::PointMass(PointMassParams { dims, dt }))
            }
            "pendulum" => Ok(SystemModel::Pendulum(PendulumParams {
                mass: positive("mass", get("mass", 1.0))?,
                length: positive("length", get("length", 1.0))?,
                damping: get("damping", 0.1).max(0.0),
                gravity: positive("gravity", get("gravity", 9.81))?,
                dt,
            })),
            "unicycle" => Ok(SystemModel::Unicycle(UnicycleParams { dt })),
            "bicopter" => Ok(SystemModel::Bicopter(BicopterParams {
                mass: positive("mass", get("mass", 0.5))?,
                arm: positive("arm", get("arm", 0.17))?,
                inertia: positive("inertia", get("inertia", 0.005))?,
                gravity: positive("gravity", get("gravity", 9.81))?,
                dt,
            })),
            "quadcopter" => Ok(SystemModel::Quadcopter(QuadcopterParams {
                mass: positive("mass", get("mass", 0.8))?,
                arm: positive("arm", get("arm", 0.17))?,
                inertia_x: positive("inertia_x", get("inertia_x", 0.005))?,
                inertia_y: positive("inertia_y", get("inertia_y", 0.005))?,
                inertia_z: positive("inertia_z", get("inertia_z", 0.009))?,
                torque_coeff: positive("torque_coeff", get("torque_coeff", 0.016))?,
                gravity: positive("gravity", get("gravity", 9.81))?,
                dt,
            })),
            "planar_arm" => {
                let links = get("links", 7.0) as usize;
                if links < 1 {
                    return Err(Error::Config("planar_arm needs at least one link".into()));
                }
                Ok(SystemModel::PlanarArm(PlanarArmParams {
                    links,
                    link_length: positive("link_length", get("link_length", 0.3))?,
                    dt,
                }))
            }
            other => Err(Error::Config(format!("unknown system '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Central finite differences of the step map, the independent oracle for
    /// the analytic Jacobians.
    fn fd_jacobians(model: &SystemModel, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let h = 1e-6;
        let nx = model.nx();
        let nu = model.nu();
        let mut a = DMatrix::zeros(nx, nx);
        for j in 0..nx {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let diff = (model.step(&xp, u).unwrap() - model.step(&xm, u).unwrap()) / (2.0 * h);
            a.set_column(j, &diff);
        }
        let mut b = DMatrix::zeros(nx, nu);
        for j in 0..nu {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let diff = (model.step(x, &up).unwrap() - model.step(x, &um).unwrap()) / (2.0 * h);
            b.set_column(j, &diff);
        }
        (a, b)
    }

    fn catalog() -> Vec<SystemModel> {
        let dt = 0.05;
        vec![
            SystemModel::PointMass(PointMassParams { dims: 2, dt }),
            SystemModel::PointMass(PointMassParams { dims: 3, dt }),
            SystemModel::Pendulum(PendulumParams::default()),
            SystemModel::Unicycle(UnicycleParams { dt }),
            SystemModel::Bicopter(BicopterParams::default()),
            SystemModel::Quadcopter(QuadcopterParams::default()),
            SystemModel::PlanarArm(PlanarArmParams::default()),
        ]
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for model in catalog() {
            for _ in 0..100 {
                let x = DVector::from_fn(model.nx(), |_, _| rng.random_range(-1.0..1.0));
                let u = DVector::from_fn(model.nu(), |_, _| rng.random_range(-1.0..1.0));
                let jac = model.linearize(&x, &u).unwrap();
                let (a_fd, b_fd) = fd_jacobians(&model, &x, &u);
                let da = crate::linalg::max_abs(&(&jac.a - &a_fd));
                let db = crate::linalg::max_abs(&(&jac.b - &b_fd));
                assert!(da < 1e-5, "{}: A mismatch {da}", model.name());
                assert!(db < 1e-5, "{}: B mismatch {db}", model.name());
            }
        }
    }

    #[test]
    fn double_integrator_equilibrium_and_euler_step() {
        let model = SystemModel::PointMass(PointMassParams { dims: 1, dt: 0.1 });
        let rest = model
            .step(&DVector::from_vec(vec![0.0, 0.0]), &DVector::from_vec(vec![0.0]))
            .unwrap();
        assert_eq!(rest.as_slice(), &[0.0, 0.0]);

        // Euler by hand: p' = p + dt·v = 0.1, v' = v = 1.
        let next = model
            .step(&DVector::from_vec(vec![0.0, 1.0]), &DVector::from_vec(vec![0.0]))
            .unwrap();
        assert!((next[0] - 0.1).abs() < 1e-15);
        assert!((next[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadcopter_hover_balance() {
        let params = QuadcopterParams::default();
        let hover = params.hover_thrusts();
        let model = SystemModel::Quadcopter(params);
        let x = DVector::zeros(12);
        let next = model.step(&x, &hover).unwrap();
        for i in 6..12 {
            assert!(next[i].abs() < 1e-9, "velocity state {i} drifted: {}", next[i]);
        }
    }

    #[test]
    fn linear_plant_returns_constant_jacobians() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
        let model = SystemModel::Linear(LinearParams { a: a.clone(), b: b.clone(), dt: 0.1 });
        let jac = model
            .linearize(&DVector::zeros(2), &DVector::zeros(1))
            .unwrap();
        assert_eq!(jac.a, a);
        assert_eq!(jac.b, b);
    }

    #[test]
    fn pendulum_angle_coupling_entry() {
        let p = PendulumParams::default();
        let (g, l, dt) = (p.gravity, p.length, p.dt);
        let model = SystemModel::Pendulum(p);
        let jac = model
            .linearize(&DVector::zeros(2), &DVector::zeros(1))
            .unwrap();
        assert!((jac.a[(1, 0)] + dt * g / l).abs() < 1e-12, "got {}", jac.a[(1, 0)]);
    }

    #[test]
    fn rollout_from_equilibrium_is_constant() {
        let model = SystemModel::PointMass(PointMassParams { dims: 2, dt: 0.05 });
        let controls = vec![DVector::zeros(2); 10];
        let traj = model.rollout(&DVector::zeros(4), &controls).unwrap();
        for x in &traj.states {
            assert!(x.norm() == 0.0);
        }
    }

    #[test]
    fn linear_rollout_matches_batch_prediction() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.6..0.6));
        let b = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let model = SystemModel::Linear(LinearParams { a: a.clone(), b: b.clone(), dt: 0.1 });
        let horizon = 8;
        let controls: Vec<_> = (0..horizon)
            .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let x0 = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let traj = model.rollout(&x0, &controls).unwrap();

        let batch = crate::batch::build_batch_matrices(&vec![a; horizon], &vec![b; horizon]).unwrap();
        let pred = batch.predict(&x0, &traj.stacked_controls()).unwrap();
        assert!((pred - traj.stacked_states()).norm() < 1e-10);
    }

    #[test]
    fn unicycle_straight_line() {
        let dt = 0.05;
        let model = SystemModel::Unicycle(UnicycleParams { dt });
        let v = 0.8;
        let controls = vec![DVector::from_vec(vec![v, 0.0]); 40];
        let traj = model.rollout(&DVector::zeros(3), &controls).unwrap();
        let end = traj.states.last().unwrap();
        assert!((end[0] - v * 40.0 * dt).abs() < 1e-12);
        assert!(end[1].abs() < 1e-12);
        assert!(end[2].abs() < 1e-12);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let mut params = BTreeMap::new();
        params.insert("mass".to_string(), 1.2);
        let model = SystemModel::from_config("quadcopter", 0.05, &params).unwrap();
        assert_eq!(model.nx(), 12);
        assert!(SystemModel::from_config("quadcopter", 0.0, &params).is_err());
        params.insert("mass".to_string(), -1.0);
        assert!(SystemModel::from_config("quadcopter", 0.05, &params).is_err());
        assert!(SystemModel::from_config("warp_drive", 0.05, &BTreeMap::new()).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = SystemModel::Pendulum(PendulumParams::default());
        let err = model.step(&DVector::zeros(3), &DVector::zeros(1));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }
}

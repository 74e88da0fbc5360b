//! Preset reach tasks for every plant in the catalog. These are the defaults
//! behind the shipped config files and the benchmark suites.

use nalgebra::{DMatrix, DVector};

use crate::costs::{EndEffectorGoal, GoalCostSpec, Obstacle};
use crate::error::{Error, Result};
use crate::ilqr::ILQRSettings;
use crate::systems::{
    BicopterParams, PendulumParams, PlanarArmParams, PointMassParams, QuadcopterParams,
    SystemModel, UnicycleParams,
};
use crate::trajectory::TimeGrid;

/// Everything needed to plan the long-horizon trajectory for one task.
#[derive(Clone, Debug)]
pub struct Task {
    pub model: SystemModel,
    pub cost: GoalCostSpec,
    pub grid: TimeGrid,
    pub short_horizon: usize,
    pub x0: DVector<f64>,
    pub u_init: Vec<DVector<f64>>,
    pub settings: ILQRSettings,
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

fn planner_settings() -> ILQRSettings {
    let mut s = ILQRSettings::default();
    s.max_iterations = 400;
    s.cost_tol_rel = 1e-10;
    s
}

/// 2D point-mass reach: drift from the origin to a goal position with a
/// loose running cost and a stiff terminal cost.
pub fn point_mass_reach() -> Task {
    let dt = 0.05;
    let steps = 100;
    let model = SystemModel::PointMass(PointMassParams { dims: 2, dt });
    let grid = TimeGrid::new(steps, dt).unwrap();
    let cost = GoalCostSpec::quadratic(
        DVector::from_vec(vec![1.0, 0.6, 0.0, 0.0]),
        diag(&[1e-3, 1e-3, 1e-3, 1e-3]),
        diag(&[0.1, 0.1]),
        diag(&[500.0, 500.0, 50.0, 50.0]),
    );
    Task {
        x0: DVector::zeros(4),
        u_init: vec![DVector::zeros(2); steps],
        model,
        cost,
        grid,
        short_horizon: 25,
        settings: planner_settings(),
    }
}

/// Pendulum swing-up from the hanging position to upright.
pub fn pendulum_swingup() -> Task {
    let params = PendulumParams::default();
    let dt = params.dt;
    let steps = 100;
    let model = SystemModel::Pendulum(params);
    let cost = GoalCostSpec::quadratic(
        DVector::from_vec(vec![std::f64::consts::PI, 0.0]),
        diag(&[0.01, 0.01]),
        diag(&[0.05]),
        diag(&[200.0, 20.0]),
    );
    Task {
        x0: DVector::zeros(2),
        u_init: vec![DVector::zeros(1); steps],
        model,
        cost,
        grid: TimeGrid::new(steps, dt).unwrap(),
        short_horizon: 25,
        settings: planner_settings(),
    }
}

/// Unicycle reach with a free final heading.
pub fn unicycle_reach() -> Task {
    let dt = 0.05;
    let steps = 80;
    let model = SystemModel::Unicycle(UnicycleParams { dt });
    let cost = GoalCostSpec::quadratic(
        DVector::from_vec(vec![1.0, 1.0, 0.0]),
        diag(&[1e-3, 1e-3, 1e-4]),
        diag(&[0.5, 0.2]),
        diag(&[300.0, 300.0, 1.0]),
    );
    Task {
        x0: DVector::zeros(3),
        u_init: vec![DVector::from_vec(vec![0.1, 0.0]); steps],
        model,
        cost,
        grid: TimeGrid::new(steps, dt).unwrap(),
        short_horizon: 20,
        settings: planner_settings(),
    }
}

/// Planar bicopter reach starting from hover.
pub fn bicopter_reach() -> Task {
    let params = BicopterParams::default();
    let dt = params.dt;
    let steps = 100;
    let hover = params.hover_thrusts();
    let model = SystemModel::Bicopter(params);
    let cost = GoalCostSpec::quadratic(
        DVector::from_vec(vec![1.0, 0.8, 0.0, 0.0, 0.0, 0.0]),
        diag(&[1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3]),
        diag(&[0.05, 0.05]),
        diag(&[800.0, 800.0, 100.0, 100.0, 100.0, 50.0]),
    );
    Task {
        x0: DVector::zeros(6),
        u_init: vec![hover; steps],
        model,
        cost,
        grid: TimeGrid::new(steps, dt).unwrap(),
        short_horizon: 25,
        settings: planner_settings(),
    }
}

/// Quadcopter reach through free space past one spherical obstacle.
pub fn quadcopter_reach() -> Task {
    let params = QuadcopterParams::default();
    let dt = params.dt;
    let steps = 150;
    let hover = params.hover_thrusts();
    let model = SystemModel::Quadcopter(params);
    let mut cost = GoalCostSpec::quadratic(
        DVector::from_vec(vec![
            1.2, 1.0, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ]),
        diag(&[
            0.01, 0.01, 0.01, 0.005, 0.005, 0.005, 0.002, 0.002, 0.002, 0.002, 0.002, 0.002,
        ]),
        diag(&[0.01, 0.01, 0.01, 0.01]),
        diag(&[
            2000.0, 2000.0, 2000.0, 200.0, 200.0, 200.0, 200.0, 200.0, 200.0, 50.0, 50.0, 50.0,
        ]),
    );
    cost.obstacles.push(Obstacle {
        center: DVector::from_vec(vec![0.6, 0.5, 0.4]),
        radius: 0.25,
        weight: 500.0,
    });
    Task {
        x0: DVector::zeros(12),
        u_init: vec![hover; steps],
        model,
        cost,
        grid: TimeGrid::new(steps, dt).unwrap(),
        short_horizon: 30,
        settings: planner_settings(),
    }
}

/// 7-link planar arm reach: joint-space goal plus an end-effector terminal
/// term, which keeps the dynamics linear and the cost non-quadratic.
pub fn planar_arm_reach() -> Task {
    let params = PlanarArmParams::default();
    let n = params.links;
    let dt = params.dt;
    let steps = 150;
    let model = SystemModel::PlanarArm(params);

    let mut q_goal = DVector::zeros(2 * n);
    let goal_angles = [0.6, 0.45, 0.3, 0.2, 0.15, 0.1, 0.05];
    for i in 0..n {
        q_goal[i] = goal_angles[i.min(goal_angles.len() - 1)];
    }
    let (ee_target, _) = model.workspace_point(&q_goal);

    let mut q_diag = vec![1e-3; 2 * n];
    for item in q_diag.iter_mut().take(2 * n).skip(n) {
        *item = 1e-3;
    }
    let mut qt_diag = vec![50.0; 2 * n];
    for item in qt_diag.iter_mut().take(2 * n).skip(n) {
        *item = 10.0;
    }
    let mut cost = GoalCostSpec::quadratic(
        q_goal,
        DMatrix::from_diagonal(&DVector::from_column_slice(&q_diag)),
        DMatrix::identity(n, n) * 0.01,
        DMatrix::from_diagonal(&DVector::from_column_slice(&qt_diag)),
    );
    cost.ee_goal = Some(EndEffectorGoal {
        target: ee_target,
        stage_weight: 0.0,
        terminal_weight: 200.0,
    });

    let mut x0 = DVector::zeros(2 * n);
    for i in 0..n {
        x0[i] = 0.1;
    }
    Task {
        x0,
        u_init: vec![DVector::zeros(n); steps],
        model,
        cost,
        grid: TimeGrid::new(steps, dt).unwrap(),
        short_horizon: 30,
        settings: planner_settings(),
    }
}

/// Looks a preset up by system name.
pub fn preset(system: &str) -> Result<Task> {
    match system {
        "point_mass" => Ok(point_mass_reach()),
        "pendulum" => Ok(pendulum_swingup()),
        "unicycle" => Ok(unicycle_reach()),
        "bicopter" => Ok(bicopter_reach()),
        "quadcopter" => Ok(quadcopter_reach()),
        "planar_arm" => Ok(planar_arm_reach()),
        other => Err(Error::Config(format!("no preset task for system '{other}'"))),
    }
}

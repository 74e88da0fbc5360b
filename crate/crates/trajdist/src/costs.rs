//! Cost functions with first/second derivatives.
//!
//! All quadratic terms carry a global 1/2 factor so that the Hessian of the
//! batch cost is exactly `SuᵀQsSu + Rs` and solution covariances need no
//! factor-2 correction. The obstacle potential field uses the Gauss-Newton
//! outer-product Hessian, which keeps every state Hessian PSD; the same
//! convention applies to the end-effector goal term.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::systems::SystemModel;
use crate::trajectory::Trajectory;

/// Spherical obstacle with a clipped-quadratic potential field
/// `weight · max(0, radius − d)²`, active only in collision.
#[derive(Clone, Debug)]
pub struct Obstacle {
    pub center: DVector<f64>,
    pub radius: f64,
    pub weight: f64,
}

/// Workspace goal for plants whose task is expressed through a kinematic map
/// (the planar arm's end effector): `weight/2 · ‖p(x) − target‖²` per stage
/// plus a terminal term.
#[derive(Clone, Debug)]
pub struct EndEffectorGoal {
    pub target: DVector<f64>,
    pub stage_weight: f64,
    pub terminal_weight: f64,
}

/// Long-horizon goal cost: small running state cost, control cost, obstacle
/// field, and a large terminal state cost.
#[derive(Clone, Debug)]
pub struct GoalCostSpec {
    pub x_goal: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_terminal: DMatrix<f64>,
    pub obstacles: Vec<Obstacle>,
    pub ee_goal: Option<EndEffectorGoal>,
}

/// Short-horizon tracking cost: one `(reference, weight)` pair per step plus
/// control and obstacle terms. `refs[j]` applies to the state after `j + 1`
/// steps; the final reference acts as the terminal stage.
#[derive(Clone, Debug)]
pub struct TrackingCostSpec {
    pub refs: Vec<(DVector<f64>, DMatrix<f64>)>,
    pub r: DMatrix<f64>,
    pub obstacles: Vec<Obstacle>,
}

/// Stage value and derivatives of a cost at one step.
#[derive(Clone, Debug)]
pub struct StageCostDerivatives {
    pub value: f64,
    pub cx: DVector<f64>,
    pub cu: DVector<f64>,
    pub cxx: DMatrix<f64>,
    pub cuu: DMatrix<f64>,
}

/// Cost interface consumed by the iLQR solver. `u` is `None` at the terminal
/// step, where control derivatives are zero.
pub trait Cost {
    fn value(&self, model: &SystemModel, traj: &Trajectory) -> Result<f64>;
    fn quadratize(
        &self,
        model: &SystemModel,
        t: usize,
        horizon: usize,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
    ) -> Result<StageCostDerivatives>;
}

/// Potential-field value `Σ_k weight_k · max(0, r_k − d_k(x))²` at the
/// model's workspace point.
pub fn eval_obstacle_cost(obstacles: &[Obstacle], model: &SystemModel, x: &DVector<f64>) -> f64 {
    if obstacles.is_empty() {
        return 0.0;
    }
    let (point, _) = model.workspace_point(x);
    let mut total = 0.0;
    for obs in obstacles {
        let d = (&point - &obs.center).norm();
        let s = (obs.radius - d).max(0.0);
        total += obs.weight * s * s;
    }
    total
}

/// Gradient and Gauss-Newton Hessian of `1/2 · eval_obstacle_cost` w.r.t. the
/// state, accumulated into `cx` and `cxx`.
fn accumulate_obstacle_derivatives(
    obstacles: &[Obstacle],
    model: &SystemModel,
    x: &DVector<f64>,
    cx: &mut DVector<f64>,
    cxx: &mut DMatrix<f64>,
) {
    if obstacles.is_empty() {
        return;
    }
    let (point, jac) = model.workspace_point(x);
    for obs in obstacles {
        let delta = &point - &obs.center;
        let d = delta.norm();
        if d >= obs.radius || d < 1e-9 {
            continue;
        }
        let s = obs.radius - d;
        // ∇d = Jᵀ·(p−c)/d; ∇(l/2) = −w·s·∇d; GN Hessian of l/2 = w·∇d∇dᵀ.
        let grad_d = jac.transpose() * (&delta / d);
        *cx += &grad_d * (-obs.weight * s);
        *cxx += &grad_d * grad_d.transpose() * obs.weight;
    }
}

fn accumulate_ee_derivatives(
    goal: &EndEffectorGoal,
    weight: f64,
    model: &SystemModel,
    x: &DVector<f64>,
    cx: &mut DVector<f64>,
    cxx: &mut DMatrix<f64>,
) {
    if weight == 0.0 {
        return;
    }
    let (point, jac) = model.workspace_point(x);
    let delta = &point - &goal.target;
    *cx += jac.transpose() * &delta * weight;
    *cxx += jac.transpose() * &jac * weight;
}

fn ee_value(goal: &EndEffectorGoal, weight: f64, model: &SystemModel, x: &DVector<f64>) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    let (point, _) = model.workspace_point(x);
    0.5 * weight * (&point - &goal.target).norm_squared()
}

impl GoalCostSpec {
    /// Pure quadratic spec without obstacles or workspace terms.
    pub fn quadratic(x_goal: DVector<f64>, q: DMatrix<f64>, r: DMatrix<f64>, q_terminal: DMatrix<f64>) -> Self {
        GoalCostSpec {
            x_goal,
            q,
            r,
            q_terminal,
            obstacles: Vec::new(),
            ee_goal: None,
        }
    }

    pub fn validate(&self, nx: usize, nu: usize) -> Result<()> {
        let check = |name: &str, rows: usize, cols: usize, want_r: usize, want_c: usize| -> Result<()> {
            if rows != want_r || cols != want_c {
                return Err(Error::dimension(
                    format!("GoalCostSpec::{name}"),
                    format!("{want_r}x{want_c}"),
                    format!("{rows}x{cols}"),
                ));
            }
            Ok(())
        };
        check("x_goal", self.x_goal.len(), 1, nx, 1)?;
        check("q", self.q.nrows(), self.q.ncols(), nx, nx)?;
        check("q_terminal", self.q_terminal.nrows(), self.q_terminal.ncols(), nx, nx)?;
        check("r", self.r.nrows(), self.r.ncols(), nu, nu)?;
        for (k, obs) in self.obstacles.iter().enumerate() {
            if obs.radius <= 0.0 {
                return Err(Error::Contract(format!("obstacle {k} has non-positive radius")));
            }
        }
        Ok(())
    }

    fn stage_value(&self, model: &SystemModel, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let dx = x - &self.x_goal;
        let mut value = 0.5 * (dx.dot(&(&self.q * &dx)) + u.dot(&(&self.r * u)));
        value += 0.5 * eval_obstacle_cost(&self.obstacles, model, x);
        if let Some(goal) = &self.ee_goal {
            value += ee_value(goal, goal.stage_weight, model, x);
        }
        value
    }

    fn terminal_value(&self, model: &SystemModel, x: &DVector<f64>) -> f64 {
        let dx = x - &self.x_goal;
        let mut value = 0.5 * dx.dot(&(&self.q_terminal * &dx));
        if let Some(goal) = &self.ee_goal {
            value += ee_value(goal, goal.terminal_weight, model, x);
        }
        value
    }
}

impl Cost for GoalCostSpec {
    fn value(&self, model: &SystemModel, traj: &Trajectory) -> Result<f64> {
        self.validate(traj.nx(), traj.nu())?;
        let horizon = traj.horizon();
        let mut total = 0.0;
        for t in 0..horizon {
            total += self.stage_value(model, &traj.states[t], &traj.controls[t]);
        }
        total += self.terminal_value(model, &traj.states[horizon]);
        Ok(total)
    }

    fn quadratize(
        &self,
        model: &SystemModel,
        t: usize,
        horizon: usize,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
    ) -> Result<StageCostDerivatives> {
        if t > horizon {
            return Err(Error::Contract(format!("step {t} beyond horizon {horizon}")));
        }
        let nu = self.r.nrows();
        if t == horizon {
            let mut cx = &self.q_terminal * (x - &self.x_goal);
            let mut cxx = self.q_terminal.clone();
            if let Some(goal) = &self.ee_goal {
                accumulate_ee_derivatives(goal, goal.terminal_weight, model, x, &mut cx, &mut cxx);
            }
            return Ok(StageCostDerivatives {
                value: self.terminal_value(model, x),
                cx,
                cu: DVector::zeros(nu),
                cxx,
                cuu: DMatrix::zeros(nu, nu),
            });
        }
        let u = u.ok_or_else(|| Error::Contract("stage quadratization requires a control".into()))?;
        let mut cx = &self.q * (x - &self.x_goal);
        let mut cxx = self.q.clone();
        accumulate_obstacle_derivatives(&self.obstacles, model, x, &mut cx, &mut cxx);
        if let Some(goal) = &self.ee_goal {
            accumulate_ee_derivatives(goal, goal.stage_weight, model, x, &mut cx, &mut cxx);
        }
        Ok(StageCostDerivatives {
            value: self.stage_value(model, x, u),
            cx,
            cu: &self.r * u,
            cxx,
            cuu: self.r.clone(),
        })
    }
}

/// Convenience wrapper matching the long-horizon cost evaluated over a full
/// trajectory.
pub fn eval_goal_cost(spec: &GoalCostSpec, model: &SystemModel, traj: &Trajectory) -> Result<f64> {
    spec.value(model, traj)
}

impl TrackingCostSpec {
    pub fn horizon(&self) -> usize {
        self.refs.len()
    }

    pub fn validate(&self, nx: usize, nu: usize) -> Result<()> {
        if self.refs.is_empty() {
            return Err(Error::Contract("TrackingCostSpec requires at least one reference".into()));
        }
        for (j, (mean, weight)) in self.refs.iter().enumerate() {
            if mean.len() != nx || weight.nrows() != nx || weight.ncols() != nx {
                return Err(Error::dimension(
                    format!("TrackingCostSpec::refs[{j}]"),
                    format!("{nx}-vector with {nx}x{nx} weight"),
                    format!("{}-vector with {}x{} weight", mean.len(), weight.nrows(), weight.ncols()),
                ));
            }
        }
        if self.r.nrows() != nu || self.r.ncols() != nu {
            return Err(Error::dimension(
                "TrackingCostSpec::r",
                format!("{nu}x{nu}"),
                format!("{}x{}", self.r.nrows(), self.r.ncols()),
            ));
        }
        Ok(())
    }

    fn tracked(&self, t: usize) -> Option<&(DVector<f64>, DMatrix<f64>)> {
        if t == 0 {
            None
        } else {
            self.refs.get(t - 1)
        }
    }
}

impl Cost for TrackingCostSpec {
    fn value(&self, model: &SystemModel, traj: &Trajectory) -> Result<f64> {
        if traj.horizon() != self.refs.len() {
            return Err(Error::dimension(
                "TrackingCostSpec::value",
                format!("trajectory with {} steps", self.refs.len()),
                format!("{}", traj.horizon()),
            ));
        }
        self.validate(traj.nx(), traj.nu())?;
        let horizon = traj.horizon();
        let mut total = 0.0;
        for t in 0..horizon {
            let x = &traj.states[t];
            let u = &traj.controls[t];
            total += 0.5 * u.dot(&(&self.r * u));
            total += 0.5 * eval_obstacle_cost(&self.obstacles, model, x);
            if let Some((mean, weight)) = self.tracked(t) {
                let dx = x - mean;
                total += 0.5 * dx.dot(&(weight * &dx));
            }
        }
        let (mean, weight) = &self.refs[horizon - 1];
        let dx = &traj.states[horizon] - mean;
        total += 0.5 * dx.dot(&(weight * &dx));
        Ok(total)
    }

    fn quadratize(
        &self,
        model: &SystemModel,
        t: usize,
        horizon: usize,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
    ) -> Result<StageCostDerivatives> {
        if horizon != self.refs.len() || t > horizon {
            return Err(Error::Contract(format!(
                "tracking quadratization at step {t} of {horizon} with {} refs",
                self.refs.len()
            )));
        }
        let nx = self.refs[0].0.len();
        let nu = self.r.nrows();
        if t == horizon {
            let (mean, weight) = &self.refs[horizon - 1];
            let dx = x - mean;
            return Ok(StageCostDerivatives {
                value: 0.5 * dx.dot(&(weight * &dx)),
                cx: weight * dx,
                cu: DVector::zeros(nu),
                cxx: weight.clone(),
                cuu: DMatrix::zeros(nu, nu),
            });
        }
        let u = u.ok_or_else(|| Error::Contract("stage quadratization requires a control".into()))?;
        let mut value = 0.5 * u.dot(&(&self.r * u));
        let mut cx = DVector::zeros(nx);
        let mut cxx = DMatrix::zeros(nx, nx);
        value += 0.5 * eval_obstacle_cost(&self.obstacles, model, x);
        accumulate_obstacle_derivatives(&self.obstacles, model, x, &mut cx, &mut cxx);
        if let Some((mean, weight)) = self.tracked(t) {
            let dx = x - mean;
            value += 0.5 * dx.dot(&(weight * &dx));
            cx += weight * &dx;
            cxx += weight;
        }
        Ok(StageCostDerivatives {
            value,
            cx,
            cu: &self.r * u,
            cxx,
            cuu: self.r.clone(),
        })
    }
}

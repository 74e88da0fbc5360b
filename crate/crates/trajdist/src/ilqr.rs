//! Iterative LQR: backward pass with Levenberg-style regularization, a
//! feedback-corrected forward pass with backtracking line search, and
//! extraction of the Gaussian trajectory distribution at the optimum.

use nalgebra::{DMatrix, DVector};

use crate::costs::{Cost, StageCostDerivatives};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lqr::{solve_batch, state_distribution, FeedbackPolicy, LQRProblem};
use crate::systems::SystemModel;
use crate::trajectory::Trajectory;

/// Abort distribution extraction when the spectral radius of the product of
/// the dynamics Jacobians exceeds this limit; the lifted matrices are
/// numerically meaningless for such unstable linearizations.
pub const SPECTRAL_RADIUS_LIMIT: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct ILQRSettings {
    pub max_iterations: usize,
    /// Stop when the relative decrease of the accepted cost falls below this.
    pub cost_tol_rel: f64,
    /// Stop when the max-norm of the LQR subproblem step falls below this.
    pub grad_tol: f64,
    /// Backtracking schedule, descending from 1.
    pub line_search_alphas: Vec<f64>,
    pub reg_init: f64,
    pub reg_min: f64,
    pub reg_max: f64,
    pub reg_scale: f64,
}

impl Default for ILQRSettings {
    fn default() -> Self {
        ILQRSettings {
            max_iterations: 100,
            cost_tol_rel: 1e-6,
            grad_tol: 1e-6,
            line_search_alphas: (0..=10).map(|i| 0.5_f64.powi(i)).collect(),
            reg_init: 1e-6,
            reg_min: 1e-8,
            reg_max: 1e6,
            reg_scale: 10.0,
        }
    }
}

impl ILQRSettings {
    fn validate(&self) -> Result<()> {
        if !(self.cost_tol_rel > 0.0) || !(self.grad_tol > 0.0) {
            return Err(Error::Contract("iLQR tolerances must be positive".into()));
        }
        let alphas = &self.line_search_alphas;
        if alphas.is_empty() || (alphas[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Contract("line search schedule must start at 1".into()));
        }
        if alphas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Contract("line search schedule must be descending".into()));
        }
        Ok(())
    }
}

/// One line of the convergence trace.
#[derive(Clone, Copy, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub alpha: Option<f64>,
    pub reg: f64,
    pub grad_inf: f64,
}

#[derive(Clone, Debug)]
pub struct ILQRSolution {
    pub trajectory: Trajectory,
    pub policy: FeedbackPolicy,
    pub iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
    /// Max-norm of the final LQR subproblem step.
    pub grad_inf: f64,
    pub trace: Vec<IterationRecord>,
}

/// Gaussian trajectory distribution extracted at the optimum.
#[derive(Clone, Debug)]
pub struct ILQRDistribution {
    pub mean_x: DVector<f64>,
    pub cov_x: DMatrix<f64>,
    pub mean_u: DVector<f64>,
    pub cov_u: DMatrix<f64>,
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
}

impl ILQRDistribution {
    /// View over the stacked state distribution with block structure.
    pub fn traj_dist(&self) -> Result<crate::gaussian::TrajDist> {
        let base = crate::gaussian::GaussianDist::new(self.mean_x.clone(), self.cov_x.clone())?;
        crate::gaussian::TrajDist::new(base, self.nx, self.horizon)
    }

    /// Per-dimension marginal standard deviations at step `t`.
    pub fn marginal_std(&self, t: usize) -> DVector<f64> {
        let nx = self.nx;
        DVector::from_fn(nx, |i, _| self.cov_x[(t * nx + i, t * nx + i)].max(0.0).sqrt())
    }
}

/// Per-step dynamics and cost derivatives along a trajectory; `stage[T]` is
/// the terminal quadratization.
struct DerivativeBundle {
    a_seq: Vec<DMatrix<f64>>,
    b_seq: Vec<DMatrix<f64>>,
    stage: Vec<StageCostDerivatives>,
}

fn derive_bundle<C: Cost + ?Sized>(
    model: &SystemModel,
    cost: &C,
    traj: &Trajectory,
) -> Result<DerivativeBundle> {
    let horizon = traj.horizon();
    let mut a_seq = Vec::with_capacity(horizon);
    let mut b_seq = Vec::with_capacity(horizon);
    let mut stage = Vec::with_capacity(horizon + 1);
    for t in 0..horizon {
        let jac = model.linearize(&traj.states[t], &traj.controls[t])?;
        a_seq.push(jac.a);
        b_seq.push(jac.b);
        stage.push(cost.quadratize(model, t, horizon, &traj.states[t], Some(&traj.controls[t]))?);
    }
    stage.push(cost.quadratize(model, horizon, horizon, &traj.states[horizon], None)?);
    Ok(DerivativeBundle { a_seq, b_seq, stage })
}

/// Backward pass at regularization `reg`; fails when some control Hessian
/// block is not positive definite even with `reg·I` added.
fn backward_pass(bundle: &DerivativeBundle, reg: f64) -> std::result::Result<FeedbackPolicy, usize> {
    let horizon = bundle.a_seq.len();
    let nu = bundle.b_seq[0].ncols();
    let nx = bundle.a_seq[0].nrows();

    let mut value_hess = bundle.stage[horizon].cxx.clone();
    let mut value_grad = bundle.stage[horizon].cx.clone();
    let mut gains = vec![DMatrix::zeros(nu, nx); horizon];
    let mut feedforward = vec![DVector::zeros(nu); horizon];

    for t in (0..horizon).rev() {
        let a = &bundle.a_seq[t];
        let b = &bundle.b_seq[t];
        let d = &bundle.stage[t];

        let bt_p = b.transpose() * &value_hess;
        let mut huu = &bt_p * b + &d.cuu;
        if reg > 0.0 {
            for i in 0..nu {
                huu[(i, i)] += reg;
            }
        }
        linalg::symmetrize(&mut huu);
        let hux = &bt_p * a;
        let hu = &d.cu + b.transpose() * &value_grad;

        let chol = match nalgebra::Cholesky::new(huu.clone()) {
            Some(c) => c,
            None => return Err(t),
        };
        let k_gain = -chol.solve(&hux);
        let k_ff = -DVector::from_column_slice(
            chol.solve(&DMatrix::from_column_slice(hu.len(), 1, hu.as_slice())).as_slice(),
        );

        let at_p = a.transpose() * &value_hess;
        let mut next_hess = &d.cxx
            + &at_p * a
            + k_gain.transpose() * &huu * &k_gain
            + k_gain.transpose() * &hux
            + hux.transpose() * &k_gain;
        linalg::symmetrize(&mut next_hess);
        let next_grad = &d.cx
            + a.transpose() * &value_grad
            + k_gain.transpose() * (&huu * &k_ff)
            + k_gain.transpose() * &hu
            + hux.transpose() * &k_ff;

        gains[t] = k_gain;
        feedforward[t] = k_ff;
        value_hess = next_hess;
        value_grad = next_grad;
    }
    Ok(FeedbackPolicy { gains, feedforward })
}

/// Max-norm of the subproblem step `δu*` obtained by rolling the policy
/// through the linearized dynamics from `δx = 0`.
fn subproblem_step_norm(bundle: &DerivativeBundle, policy: &FeedbackPolicy) -> f64 {
    let horizon = bundle.a_seq.len();
    let nx = bundle.a_seq[0].nrows();
    let mut dx = DVector::zeros(nx);
    let mut norm = 0.0_f64;
    for t in 0..horizon {
        let du = &policy.feedforward[t] + &policy.gains[t] * &dx;
        norm = norm.max(du.amax());
        dx = &bundle.a_seq[t] * dx + &bundle.b_seq[t] * du;
    }
    norm
}

/// Forward pass at step length `alpha` with feedback correction; `None` when
/// the rollout leaves the finite domain.
fn forward_pass<C: Cost + ?Sized>(
    model: &SystemModel,
    cost: &C,
    traj: &Trajectory,
    policy: &FeedbackPolicy,
    alpha: f64,
) -> Option<(Trajectory, f64)> {
    let horizon = traj.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(traj.states[0].clone());
    for t in 0..horizon {
        let x = states.last().unwrap();
        let u = &traj.controls[t]
            + &policy.feedforward[t] * alpha
            + &policy.gains[t] * (x - &traj.states[t]);
        let next = model.step(x, &u).ok()?;
        if !linalg::vec_finite(&next) {
            return None;
        }
        controls.push(u);
        states.push(next);
    }
    let candidate = Trajectory::new(states, controls).ok()?;
    let value = cost.value(model, &candidate).ok()?;
    if !value.is_finite() {
        return None;
    }
    Some((candidate, value))
}

/// Solves the optimal control problem by iterative LQR.
///
/// Each accepted iterate strictly decreases the true nonlinear cost; the
/// returned policy and subproblem step norm always correspond to the final
/// trajectory.
pub fn ilqr_solve<C: Cost + ?Sized>(
    model: &SystemModel,
    cost: &C,
    x0: &DVector<f64>,
    u_init: &[DVector<f64>],
    settings: &ILQRSettings,
) -> Result<ILQRSolution> {
    settings.validate()?;
    if u_init.is_empty() {
        return Err(Error::Contract("iLQR requires a non-empty initial control sequence".into()));
    }
    let mut traj = model.rollout(x0, u_init)?;
    let mut cost_val = cost.value(model, &traj)?;
    if !cost_val.is_finite() {
        return Err(Error::non_finite("initial cost"));
    }

    let mut reg = 0.0_f64;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut finishing = false;
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut last_alpha: Option<f64> = None;

    let escalate = |reg: f64| -> f64 {
        if reg == 0.0 {
            settings.reg_init
        } else {
            reg * settings.reg_scale
        }
    };

    let (policy, grad_inf) = 'outer: loop {
        let bundle = derive_bundle(model, cost, &traj)?;
        'retry: loop {
            let policy = match backward_pass(&bundle, reg) {
                Ok(p) => p,
                Err(step) => {
                    reg = escalate(reg);
                    if reg > settings.reg_max {
                        return Err(Error::SolverFailure(format!(
                            "backward pass failed at step {step} with regularization exhausted"
                        )));
                    }
                    continue 'retry;
                }
            };
            let grad_inf = subproblem_step_norm(&bundle, &policy);
            trace.push(IterationRecord {
                iteration: iterations,
                cost: cost_val,
                alpha: last_alpha,
                reg,
                grad_inf,
            });
            log::debug!(
                target: "ilqr",
                "iter={iterations} cost={cost_val:.9e} alpha={last_alpha:?} reg={reg:.1e} grad_inf={grad_inf:.3e}"
            );
            if grad_inf < settings.grad_tol {
                converged = true;
                break 'outer (policy, grad_inf);
            }
            if finishing || iterations >= settings.max_iterations {
                break 'outer (policy, grad_inf);
            }

            let mut accepted = None;
            for &alpha in &settings.line_search_alphas {
                if let Some((candidate, value)) = forward_pass(model, cost, &traj, &policy, alpha) {
                    if value < cost_val {
                        accepted = Some((candidate, value, alpha));
                        break;
                    }
                }
            }
            match accepted {
                Some((candidate, value, alpha)) => {
                    let rel = (cost_val - value) / cost_val.abs().max(1e-300);
                    traj = candidate;
                    cost_val = value;
                    iterations += 1;
                    last_alpha = Some(alpha);
                    reg /= settings.reg_scale;
                    if reg < settings.reg_min {
                        reg = 0.0;
                    }
                    if rel < settings.cost_tol_rel {
                        finishing = true;
                    }
                    continue 'outer;
                }
                None => {
                    if reg >= settings.reg_max {
                        break 'outer (policy, grad_inf);
                    }
                    reg = escalate(reg);
                    continue 'retry;
                }
            }
        }
    };

    Ok(ILQRSolution {
        trajectory: traj,
        policy,
        iterations,
        final_cost: cost_val,
        converged,
        grad_inf,
        trace,
    })
}

/// Spectral radius of the ordered product of the dynamics Jacobians.
fn jacobian_product_spectral_radius(a_seq: &[DMatrix<f64>]) -> f64 {
    let nx = a_seq[0].nrows();
    let mut prod = DMatrix::identity(nx, nx);
    for a in a_seq {
        prod = a * prod;
    }
    prod.complex_eigenvalues().iter().fold(0.0_f64, |acc, l| acc.max(l.norm()))
}

/// Re-derives dynamics and cost along the optimum and assembles the Gaussian
/// trajectory distribution: `Σ_u = (SuᵀQsSu + Rs)⁻¹`, `Σ_x = Su Σ_u Suᵀ`,
/// centered on `(x*, u*)`.
pub fn extract_distribution<C: Cost + ?Sized>(
    solution: &ILQRSolution,
    model: &SystemModel,
    cost: &C,
) -> Result<ILQRDistribution> {
    if !solution.converged {
        log::warn!(
            target: "ilqr",
            "extracting a distribution from a non-converged solution (grad_inf={:.3e})",
            solution.grad_inf
        );
    }
    let traj = &solution.trajectory;
    let horizon = traj.horizon();
    let nx = traj.nx();
    let nu = traj.nu();

    let bundle = derive_bundle(model, cost, traj)?;
    let radius = jacobian_product_spectral_radius(&bundle.a_seq);
    if radius > SPECTRAL_RADIUS_LIMIT {
        return Err(Error::Distribution(format!(
            "spectral radius of the Jacobian product is {radius:.3e}; \
             the lifted covariance would be numerically meaningless"
        )));
    }

    let prob = LQRProblem {
        a_seq: bundle.a_seq,
        b_seq: bundle.b_seq,
        q_blocks: bundle.stage.iter().map(|d| d.cxx.clone()).collect(),
        r_blocks: bundle.stage[..horizon].iter().map(|d| d.cuu.clone()).collect(),
        x0: DVector::zeros(nx),
        q_lin: None,
        r_lin: None,
    };
    let ctrl = solve_batch(&prob).map_err(|e| match e {
        Error::SolverFailure(msg) => Error::Distribution(msg),
        other => other,
    })?;
    let (_, cov_x) = state_distribution(&prob, &ctrl)?;

    Ok(ILQRDistribution {
        mean_x: traj.stacked_states(),
        cov_x,
        mean_u: traj.stacked_controls(),
        cov_u: ctrl.cov,
        nx,
        nu,
        horizon,
    })
}

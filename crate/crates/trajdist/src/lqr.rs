//! Time-varying finite-horizon LQR in two forms: the batch least-squares
//! solution carrying the Gaussian solution distribution, and the Riccati
//! backward recursion producing time-varying feedback gains.
//!
//! Costs follow the crate-wide convention `1/2·xᵀQx + qᵀx + 1/2·uᵀRu + rᵀu`,
//! so the control-space Hessian is exactly `SuᵀQsSu + Rs` and the solution
//! covariance is its inverse.

use nalgebra::{DMatrix, DVector};

use crate::batch::{build_batch_matrices, BatchMatrices};
use crate::error::{Error, Result};
use crate::linalg::{jittered_cholesky, symmetrized};

/// A time-varying LQR problem; `q_lin`/`r_lin` carry the linear cost terms
/// that arise in iLQR subproblems.
#[derive(Clone, Debug)]
pub struct LQRProblem {
    pub a_seq: Vec<DMatrix<f64>>,
    pub b_seq: Vec<DMatrix<f64>>,
    /// State weight blocks, length `T + 1` (PSD).
    pub q_blocks: Vec<DMatrix<f64>>,
    /// Control weight blocks, length `T` (PD).
    pub r_blocks: Vec<DMatrix<f64>>,
    pub x0: DVector<f64>,
    /// Linear state cost terms, length `T + 1` when present.
    pub q_lin: Option<Vec<DVector<f64>>>,
    /// Linear control cost terms, length `T` when present.
    pub r_lin: Option<Vec<DVector<f64>>>,
}

/// Gaussian over the stacked control trajectory.
#[derive(Clone, Debug)]
pub struct ControlDistribution {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Time-varying affine state-feedback policy `u_t = K_t x_t + k_t`.
#[derive(Clone, Debug)]
pub struct FeedbackPolicy {
    pub gains: Vec<DMatrix<f64>>,
    pub feedforward: Vec<DVector<f64>>,
}

impl LQRProblem {
    pub fn horizon(&self) -> usize {
        self.a_seq.len()
    }

    pub fn nx(&self) -> usize {
        self.x0.len()
    }

    pub fn nu(&self) -> usize {
        self.b_seq.first().map_or(0, |b| b.ncols())
    }

    fn validate(&self) -> Result<()> {
        let horizon = self.horizon();
        if horizon == 0 {
            return Err(Error::Contract("LQR problem needs at least one step".into()));
        }
        if self.b_seq.len() != horizon
            || self.q_blocks.len() != horizon + 1
            || self.r_blocks.len() != horizon
        {
            return Err(Error::dimension(
                "LQRProblem",
                format!("B:{horizon} Q:{} R:{horizon}", horizon + 1),
                format!(
                    "B:{} Q:{} R:{}",
                    self.b_seq.len(),
                    self.q_blocks.len(),
                    self.r_blocks.len()
                ),
            ));
        }
        if let Some(q_lin) = &self.q_lin {
            if q_lin.len() != horizon + 1 {
                return Err(Error::dimension(
                    "LQRProblem::q_lin",
                    format!("{}", horizon + 1),
                    format!("{}", q_lin.len()),
                ));
            }
        }
        if let Some(r_lin) = &self.r_lin {
            if r_lin.len() != horizon {
                return Err(Error::dimension(
                    "LQRProblem::r_lin",
                    format!("{horizon}"),
                    format!("{}", r_lin.len()),
                ));
            }
        }
        Ok(())
    }

    fn batch(&self) -> Result<BatchMatrices> {
        build_batch_matrices(&self.a_seq, &self.b_seq)
    }

    fn stacked_q(&self) -> (DMatrix<f64>, DVector<f64>) {
        let nx = self.nx();
        let n = nx * (self.horizon() + 1);
        let mut qs = DMatrix::zeros(n, n);
        let mut q_lin = DVector::zeros(n);
        for (t, block) in self.q_blocks.iter().enumerate() {
            qs.view_mut((t * nx, t * nx), (nx, nx)).copy_from(block);
        }
        if let Some(lin) = &self.q_lin {
            for (t, v) in lin.iter().enumerate() {
                q_lin.rows_mut(t * nx, nx).copy_from(v);
            }
        }
        (qs, q_lin)
    }

    fn stacked_r(&self) -> (DMatrix<f64>, DVector<f64>) {
        let nu = self.nu();
        let n = nu * self.horizon();
        let mut rs = DMatrix::zeros(n, n);
        let mut r_lin = DVector::zeros(n);
        for (t, block) in self.r_blocks.iter().enumerate() {
            rs.view_mut((t * nu, t * nu), (nu, nu)).copy_from(block);
        }
        if let Some(lin) = &self.r_lin {
            for (t, v) in lin.iter().enumerate() {
                r_lin.rows_mut(t * nu, nu).copy_from(v);
            }
        }
        (rs, r_lin)
    }

    /// Total cost of a stacked control vector under the reduced objective
    /// `u ↦ C(Sx·x0 + Su·u, u)` (used by tests and the optimality checks).
    pub fn reduced_cost(&self, u_stacked: &DVector<f64>) -> Result<f64> {
        let batch = self.batch()?;
        let x = batch.predict(&self.x0, u_stacked)?;
        let (qs, q_lin) = self.stacked_q();
        let (rs, r_lin) = self.stacked_r();
        Ok(0.5 * x.dot(&(&qs * &x))
            + q_lin.dot(&x)
            + 0.5 * u_stacked.dot(&(&rs * u_stacked))
            + r_lin.dot(u_stacked))
    }
}

/// Batch least-squares solution: mean and covariance of the control
/// trajectory distribution.
pub fn solve_batch(prob: &LQRProblem) -> Result<ControlDistribution> {
    prob.validate()?;
    let batch = prob.batch()?;
    let (qs, q_lin) = prob.stacked_q();
    let (rs, r_lin) = prob.stacked_r();

    let su_t_qs = batch.su.transpose() * &qs;
    let mut hessian = &su_t_qs * &batch.su + &rs;
    crate::linalg::symmetrize(&mut hessian);
    let rhs = &su_t_qs * (&batch.sx * &prob.x0) + batch.su.transpose() * &q_lin + &r_lin;

    let (chol, _) = jittered_cholesky(&hessian).map_err(|e| match e {
        Error::SolverFailure(msg) => Error::SolverFailure(format!("LQR Hessian not PD: {msg}")),
        other => other,
    })?;
    let mean = -chol.solve(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()));
    let cov = symmetrized(&chol.inverse());
    Ok(ControlDistribution {
        mean: DVector::from_column_slice(mean.as_slice()),
        cov,
    })
}

/// Mean and covariance of the stacked state trajectory implied by a control
/// distribution: `mean = Sx·x0 + Su·μ_u`, `cov = Su·Σ_u·Suᵀ`.
pub fn state_distribution(prob: &LQRProblem, ctrl: &ControlDistribution) -> Result<(DVector<f64>, DMatrix<f64>)> {
    prob.validate()?;
    let batch = prob.batch()?;
    if ctrl.mean.len() != batch.nu * batch.horizon {
        return Err(Error::dimension(
            "state_distribution",
            format!("control mean of length {}", batch.nu * batch.horizon),
            format!("{}", ctrl.mean.len()),
        ));
    }
    let mean = batch.predict(&prob.x0, &ctrl.mean)?;
    let cov = symmetrized(&(&batch.su * &ctrl.cov * batch.su.transpose()));
    Ok((mean, cov))
}

/// Backward Riccati recursion producing the affine policy `u_t = K_t x_t + k_t`.
pub fn solve_riccati(prob: &LQRProblem) -> Result<FeedbackPolicy> {
    prob.validate()?;
    let horizon = prob.horizon();
    let nx = prob.nx();
    let nu = prob.nu();
    let zero_q = DVector::zeros(nx);
    let zero_r = DVector::zeros(nu);

    let mut value_hess = prob.q_blocks[horizon].clone();
    let mut value_grad = prob
        .q_lin
        .as_ref()
        .map(|l| l[horizon].clone())
        .unwrap_or_else(|| zero_q.clone());

    let mut gains = vec![DMatrix::zeros(nu, nx); horizon];
    let mut feedforward = vec![DVector::zeros(nu); horizon];

    for t in (0..horizon).rev() {
        let a = &prob.a_seq[t];
        let b = &prob.b_seq[t];
        let q_t = &prob.q_blocks[t];
        let r_t = &prob.r_blocks[t];
        let q_lin_t = prob.q_lin.as_ref().map(|l| &l[t]).unwrap_or(&zero_q);
        let r_lin_t = prob.r_lin.as_ref().map(|l| &l[t]).unwrap_or(&zero_r);

        let bt_p = b.transpose() * &value_hess;
        let mut huu = &bt_p * b + r_t;
        crate::linalg::symmetrize(&mut huu);
        let hux = &bt_p * a;
        let hu = r_lin_t + b.transpose() * &value_grad;

        let (chol, _) = jittered_cholesky(&huu).map_err(|e| match e {
            Error::SolverFailure(msg) => {
                Error::SolverFailure(format!("Riccati control Hessian at step {t}: {msg}"))
            }
            other => other,
        })?;
        let k_gain = -chol.solve(&hux);
        let k_ff = -chol.solve(&DMatrix::from_column_slice(hu.len(), 1, hu.as_slice()));
        let k_ff = DVector::from_column_slice(k_ff.as_slice());

        // Value update in the symmetric-safe form.
        let at_p = a.transpose() * &value_hess;
        let mut next_hess = q_t + &at_p * a
            + k_gain.transpose() * &huu * &k_gain
            + k_gain.transpose() * &hux
            + hux.transpose() * &k_gain;
        crate::linalg::symmetrize(&mut next_hess);
        let next_grad = q_lin_t
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

impl FeedbackPolicy {
    /// Open-loop rollout of the policy through the problem's linear dynamics;
    /// equals the batch mean on pure LQR problems.
    pub fn rollout(&self, prob: &LQRProblem) -> Result<DVector<f64>> {
        let horizon = prob.horizon();
        let nu = prob.nu();
        if self.gains.len() != horizon {
            return Err(Error::dimension(
                "FeedbackPolicy::rollout",
                format!("{horizon} gains"),
                format!("{}", self.gains.len()),
            ));
        }
        let mut x = prob.x0.clone();
        let mut stacked = DVector::zeros(nu * horizon);
        for t in 0..horizon {
            let u = &self.gains[t] * &x + &self.feedforward[t];
            stacked.rows_mut(t * nu, nu).copy_from(&u);
            x = &prob.a_seq[t] * &x + &prob.b_seq[t] * &u;
        }
        Ok(stacked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn scalar_problem() -> LQRProblem {
        // T=1, A=1, B=1, Q_0=0, Q_T=1, R=1, x0=1.
        LQRProblem {
            a_seq: vec![DMatrix::from_element(1, 1, 1.0)],
            b_seq: vec![DMatrix::from_element(1, 1, 1.0)],
            q_blocks: vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)],
            r_blocks: vec![DMatrix::from_element(1, 1, 1.0)],
            x0: DVector::from_vec(vec![1.0]),
            q_lin: None,
            r_lin: None,
        }
    }

    fn random_problem(rng: &mut impl Rng, nx: usize, nu: usize, horizon: usize, with_linear: bool) -> LQRProblem {
        let spd = |n: usize, rng: &mut dyn rand::RngCore, scale: f64, ridge: f64| {
            let m = DMatrix::from_fn(n, n, |_, _| {
                let mut bytes = [0u8; 8];
                rng.fill_bytes(&mut bytes);
                (u64::from_le_bytes(bytes) as f64 / u64::MAX as f64) * 2.0 - 1.0
            });
            &m * m.transpose() * scale + DMatrix::identity(n, n) * ridge
        };
        let a_seq: Vec<_> = (0..horizon)
            .map(|_| DMatrix::from_fn(nx, nx, |_, _| rng.random_range(-0.8..0.8)))
            .collect();
        let b_seq: Vec<_> = (0..horizon)
            .map(|_| DMatrix::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let q_blocks: Vec<_> = (0..=horizon).map(|_| spd(nx, rng, 0.5, 0.0)).collect();
        let r_blocks: Vec<_> = (0..horizon).map(|_| spd(nu, rng, 0.3, 0.2)).collect();
        let x0 = DVector::from_fn(nx, |_, _| rng.random_range(-1.0..1.0));
        let (q_lin, r_lin) = if with_linear {
            (
                Some((0..=horizon).map(|_| DVector::from_fn(nx, |_, _| rng.random_range(-0.5..0.5))).collect()),
                Some((0..horizon).map(|_| DVector::from_fn(nu, |_, _| rng.random_range(-0.5..0.5))).collect()),
            )
        } else {
            (None, None)
        };
        LQRProblem { a_seq, b_seq, q_blocks, r_blocks, x0, q_lin, r_lin }
    }

    #[test]
    fn scalar_hand_solution() {
        let prob = scalar_problem();
        let ctrl = solve_batch(&prob).unwrap();
        assert!((ctrl.mean[0] + 0.5).abs() < 1e-14, "mean {}", ctrl.mean[0]);
        assert!((ctrl.cov[(0, 0)] - 0.5).abs() < 1e-14, "cov {}", ctrl.cov[(0, 0)]);
    }

    #[test]
    fn unforced_problem_has_zero_mean() {
        let mut prob = scalar_problem();
        prob.x0 = DVector::zeros(1);
        let ctrl = solve_batch(&prob).unwrap();
        assert_eq!(ctrl.mean[0], 0.0);
    }

    #[test]
    fn covariance_matches_finite_difference_hessian() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..5 {
            let prob = random_problem(&mut rng, 3, 2, 6, true);
            let ctrl = solve_batch(&prob).unwrap();
            let n = ctrl.mean.len();
            let h = 1e-3;
            let mut hess_fd = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut upp = ctrl.mean.clone();
                    let mut upm = ctrl.mean.clone();
                    let mut ump = ctrl.mean.clone();
                    let mut umm = ctrl.mean.clone();
                    upp[i] += h;
                    upp[j] += h;
                    upm[i] += h;
                    upm[j] -= h;
                    ump[i] -= h;
                    ump[j] += h;
                    umm[i] -= h;
                    umm[j] -= h;
                    hess_fd[(i, j)] = (prob.reduced_cost(&upp).unwrap()
                        - prob.reduced_cost(&upm).unwrap()
                        - prob.reduced_cost(&ump).unwrap()
                        + prob.reduced_cost(&umm).unwrap())
                        / (4.0 * h * h);
                }
            }
            let precision = crate::linalg::invert_spd(&ctrl.cov).unwrap();
            let rel = (&precision - &hess_fd).norm() / hess_fd.norm();
            assert!(rel < 1e-4, "relative Hessian error {rel}");
        }
    }

    #[test]
    fn state_distribution_scalar_example() {
        let prob = scalar_problem();
        let ctrl = solve_batch(&prob).unwrap();
        let (mean, cov) = state_distribution(&prob, &ctrl).unwrap();
        // Terminal mean x0 + mu_u = 0.5; the initial block of the covariance
        // is exactly zero.
        assert!((mean[1] - 0.5).abs() < 1e-14);
        assert_eq!(cov[(0, 0)], 0.0);
    }

    #[test]
    fn state_covariance_first_block_exactly_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let prob = random_problem(&mut rng, 3, 2, 5, false);
        let ctrl = solve_batch(&prob).unwrap();
        let (_, cov) = state_distribution(&prob, &ctrl).unwrap();
        for i in 0..3 {
            for j in 0..cov.ncols() {
                assert_eq!(cov[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn state_covariance_matches_monte_carlo() {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let prob = random_problem(&mut rng, 2, 1, 4, false);
        let ctrl = solve_batch(&prob).unwrap();
        let (mean, cov) = state_distribution(&prob, &ctrl).unwrap();

        // Sample controls from N(mu, Sigma), roll out linearly, compare the
        // empirical state covariance.
        let chol = nalgebra::Cholesky::new(
            &ctrl.cov + DMatrix::identity(ctrl.cov.nrows(), ctrl.cov.ncols()) * 1e-12,
        )
        .unwrap();
        let n_samples = 100_000;
        let dim = mean.len();
        let mut acc_mean = DVector::zeros(dim);
        let mut acc_outer = DMatrix::zeros(dim, dim);
        let batch = build_batch_matrices(&prob.a_seq, &prob.b_seq).unwrap();
        for _ in 0..n_samples {
            let z = DVector::from_fn(ctrl.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let u = &ctrl.mean + chol.l() * z;
            let x = batch.predict(&prob.x0, &u).unwrap();
            acc_mean += &x;
            acc_outer += &x * x.transpose();
        }
        acc_mean /= n_samples as f64;
        let emp_cov = acc_outer / n_samples as f64 - &acc_mean * acc_mean.transpose();
        let rel = (&emp_cov - &cov).norm() / cov.norm();
        assert!(rel < 0.05, "Monte-Carlo covariance error {rel}");
    }

    #[test]
    fn riccati_scalar_gains() {
        let prob = scalar_problem();
        let policy = solve_riccati(&prob).unwrap();
        assert!((policy.gains[0][(0, 0)] + 0.5).abs() < 1e-14);
        assert!(policy.feedforward[0][0].abs() < 1e-14);
    }

    #[test]
    fn riccati_zero_cost_gives_zero_controls() {
        let mut prob = scalar_problem();
        prob.q_blocks = vec![DMatrix::zeros(1, 1); 2];
        let policy = solve_riccati(&prob).unwrap();
        let rollout = policy.rollout(&prob).unwrap();
        assert!(rollout.norm() < 1e-14);
        assert!(policy.gains[0].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn riccati_rollout_matches_batch_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for trial in 0..20 {
            let with_linear = trial % 2 == 0;
            let prob = random_problem(&mut rng, 4, 2, 12, with_linear);
            let ctrl = solve_batch(&prob).unwrap();
            let policy = solve_riccati(&prob).unwrap();
            let rollout = policy.rollout(&prob).unwrap();
            let err = (&rollout - &ctrl.mean).amax();
            assert!(err < 1e-8, "trial {trial}: batch/Riccati gap {err}");
        }
    }

    #[test]
    fn perturbations_never_decrease_the_cost() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let prob = random_problem(&mut rng, 3, 2, 8, true);
        let ctrl = solve_batch(&prob).unwrap();
        let base = prob.reduced_cost(&ctrl.mean).unwrap();
        for _ in 0..20 {
            let mut delta = DVector::from_fn(ctrl.mean.len(), |_, _| rng.random_range(-1.0..1.0));
            delta *= 1e-3 / delta.norm();
            let perturbed = prob.reduced_cost(&(&ctrl.mean + delta)).unwrap();
            assert!(perturbed >= base - 1e-15, "perturbation decreased cost");
        }
    }

    #[test]
    fn sigma_u_is_symmetric_pd() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let prob = random_problem(&mut rng, 3, 1, 7, false);
        let ctrl = solve_batch(&prob).unwrap();
        assert!(crate::linalg::is_symmetric(&ctrl.cov, 1e-9));
        let (min_eig, _) = crate::linalg::eigenvalue_range(&ctrl.cov);
        assert!(min_eig > 0.0);
    }
}

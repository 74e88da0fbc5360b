//! Algebra over Gaussian (trajectory) distributions: product, marginals,
//! conditioning, and sampling.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    self, is_symmetric, psd_sqrt, symmetric_solve, symmetrized, vec_finite, SYMMETRY_REL_TOL,
};

/// Multivariate Gaussian with an explicitly stored (symmetrized, PSD-checked)
/// covariance.
#[derive(Clone, Debug)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dimension(
                "GaussianDist",
                format!("{n}x{n} covariance", n = mean.len()),
                format!("{}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        if !vec_finite(&mean) || !linalg::all_finite(&cov) {
            return Err(Error::non_finite("GaussianDist parameters"));
        }
        if !is_symmetric(&cov, SYMMETRY_REL_TOL) {
            return Err(Error::InvalidCovariance("covariance is not symmetric".into()));
        }
        let cov = symmetrized(&cov);
        let (min_eig, _) = linalg::eigenvalue_range(&cov);
        let scale = linalg::max_abs(&cov).max(1.0);
        if min_eig < -1e-9 * scale {
            return Err(Error::InvalidCovariance(format!(
                "covariance has eigenvalue {min_eig} below tolerance"
            )));
        }
        Ok(GaussianDist { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Deterministic sampling via a PSD square root of the covariance; rank
    /// deficiency is tolerated (degenerate directions collapse to the mean).
    pub fn sample(&self, count: usize, rng_seed: u64) -> Result<Vec<DVector<f64>>> {
        if count == 0 {
            return Err(Error::Contract("sample count must be at least 1".into()));
        }
        let sqrt = psd_sqrt(&self.cov, 1e-6)?;
        let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
        let dim = self.dim();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let z = DVector::from_fn(dim, |_, _| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            });
            out.push(&self.mean + &sqrt * z);
        }
        Ok(out)
    }
}

/// Product of Gaussians: fused precision `Ŵ = ΣW_k` and mean
/// `μ̂ = Ŵ⁻¹ ΣW_k μ_k`.
pub fn product(dists: &[GaussianDist]) -> Result<GaussianDist> {
    let first = dists
        .first()
        .ok_or_else(|| Error::Contract("product of an empty set of Gaussians".into()))?;
    if dists.len() == 1 {
        return Ok(first.clone());
    }
    let dim = first.dim();
    let mut fused_precision = DMatrix::zeros(dim, dim);
    let mut weighted_mean = DVector::zeros(dim);
    for (k, dist) in dists.iter().enumerate() {
        if dist.dim() != dim {
            return Err(Error::dimension(
                "gaussian::product",
                format!("dimension {dim}"),
                format!("{} at operand {k}", dist.dim()),
            ));
        }
        let precision = linalg::invert_spd(&dist.cov)?;
        weighted_mean += &precision * &dist.mean;
        fused_precision += precision;
    }
    let mean = crate::linalg::symmetric_solve_vec(&fused_precision, &weighted_mean)?;
    let cov = linalg::invert_spd(&fused_precision)?;
    GaussianDist::new(mean, cov)
}

/// Joint Gaussian over a stacked state trajectory with per-step block
/// structure.
#[derive(Clone, Debug)]
pub struct TrajDist {
    base: GaussianDist,
    nx: usize,
    horizon: usize,
}

impl TrajDist {
    pub fn new(base: GaussianDist, nx: usize, horizon: usize) -> Result<Self> {
        if base.dim() != nx * (horizon + 1) {
            return Err(Error::dimension(
                "TrajDist",
                format!("{}", nx * (horizon + 1)),
                format!("{}", base.dim()),
            ));
        }
        Ok(TrajDist { base, nx, horizon })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn base(&self) -> &GaussianDist {
        &self.base
    }

    /// Per-step marginal `N(μ_t, Σ_tt)`.
    pub fn marginal(&self, t: usize) -> Result<GaussianDist> {
        if t > self.horizon {
            return Err(Error::Contract(format!(
                "marginal index {t} out of range 0..={}",
                self.horizon
            )));
        }
        let nx = self.nx;
        let mean = self.base.mean.rows(t * nx, nx).clone_owned();
        let cov = self.base.cov.view((t * nx, t * nx), (nx, nx)).clone_owned();
        GaussianDist::new(mean, symmetrized(&cov))
    }

    /// Conditions the window `[tau, min(tau+horizon, T)]` on `x_tau` and
    /// returns the per-step conditionals for `t = tau+1 ..= window end`.
    ///
    /// Standard Gaussian conditioning: `μ_c = μ₂ + Σ₂₁ Σ₁₁⁻¹ (x_τ − μ₁)`,
    /// `Σ_c = Σ₂₂ − Σ₂₁ Σ₁₁⁻¹ Σ₁₂`, with `Σ₁₁` inverted through the jittered
    /// symmetric solve.
    pub fn condition(&self, tau: usize, x_tau: &DVector<f64>, horizon: usize) -> Result<Vec<GaussianDist>> {
        if tau >= self.horizon {
            return Err(Error::Contract(format!(
                "conditioning step {tau} must be below the horizon {}",
                self.horizon
            )));
        }
        if horizon == 0 {
            return Err(Error::Contract("conditioning window is empty".into()));
        }
        if x_tau.len() != self.nx {
            return Err(Error::dimension(
                "TrajDist::condition",
                format!("{}", self.nx),
                format!("{}", x_tau.len()),
            ));
        }
        if !vec_finite(x_tau) {
            return Err(Error::non_finite("conditioning state"));
        }
        let nx = self.nx;
        let end = (tau + horizon).min(self.horizon);
        let steps = end - tau;
        if steps == 0 {
            return Err(Error::Contract("conditioning window is empty".into()));
        }

        let mu1 = self.base.mean.rows(tau * nx, nx).clone_owned();
        let mu2 = self.base.mean.rows((tau + 1) * nx, steps * nx).clone_owned();
        let sigma11 = symmetrized(
            &self.base.cov.view((tau * nx, tau * nx), (nx, nx)).clone_owned(),
        );
        let sigma21 = self
            .base
            .cov
            .view(((tau + 1) * nx, tau * nx), (steps * nx, nx))
            .clone_owned();

        // Σ₁₁⁻¹(x−μ₁) and Σ₁₁⁻¹Σ₁₂ through one jittered factorization.
        let mut rhs = DMatrix::zeros(nx, 1 + steps * nx);
        rhs.view_mut((0, 0), (nx, 1))
            .copy_from(&DMatrix::from_column_slice(nx, 1, (x_tau - &mu1).as_slice()));
        rhs.view_mut((0, 1), (nx, steps * nx)).copy_from(&sigma21.transpose());
        let solved = symmetric_solve(&sigma11, &rhs)?;
        let alpha = DVector::from_iterator(nx, solved.view((0, 0), (nx, 1)).iter().copied());
        let sigma11_inv_sigma12 = solved.view((0, 1), (nx, steps * nx)).clone_owned();

        let mu_c = &mu2 + &sigma21 * alpha;
        let sigma22 = self
            .base
            .cov
            .view(((tau + 1) * nx, (tau + 1) * nx), (steps * nx, steps * nx))
            .clone_owned();
        let sigma_c = symmetrized(&(&sigma22 - &sigma21 * sigma11_inv_sigma12));

        let mut out = Vec::with_capacity(steps);
        for j in 0..steps {
            let mean = mu_c.rows(j * nx, nx).clone_owned();
            let mut cov = sigma_c.view((j * nx, j * nx), (nx, nx)).clone_owned();
            // Conditioning can leave eigenvalues at numerical noise below
            // zero; clamp within the constructor tolerance.
            let scale = linalg::max_abs(&cov).max(1.0);
            cov = symmetrized(&cov);
            let (min_eig, _) = linalg::eigenvalue_range(&cov);
            if min_eig < 0.0 && min_eig >= -1e-9 * scale {
                for i in 0..nx {
                    cov[(i, i)] -= min_eig;
                }
            }
            out.push(GaussianDist::new(mean, cov)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(mean: &[f64], cov_rows: &[&[f64]]) -> GaussianDist {
        let n = mean.len();
        let mut cov = DMatrix::zeros(n, n);
        for (i, row) in cov_rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                cov[(i, j)] = *v;
            }
        }
        GaussianDist::new(DVector::from_column_slice(mean), cov).unwrap()
    }

    #[test]
    fn product_of_single_input_is_identity() {
        let g = gauss(&[1.0, 2.0], &[&[2.0, 0.3], &[0.3, 1.0]]);
        let p = product(&[g.clone()]).unwrap();
        assert_eq!(p.mean(), g.mean());
        assert_eq!(p.cov(), g.cov());
    }

    #[test]
    fn product_of_equal_precision_scalars() {
        let a = gauss(&[0.0], &[&[1.0]]);
        let b = gauss(&[2.0], &[&[1.0]]);
        let p = product(&[a, b]).unwrap();
        assert!((p.mean()[0] - 1.0).abs() < 1e-12);
        assert!((p.cov()[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn product_mean_matches_quadratic_argmin() {
        // Independent oracle: conjugate gradient on the summed quadratic
        // forms f(x) = Σ (x−μk)ᵀWk(x−μk), using only gradient evaluations.
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let dists: Vec<_> = (0..3)
            .map(|_| {
                let m = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
                let cov = &m * m.transpose() + DMatrix::identity(2, 2) * 0.3;
                GaussianDist::new(DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0)), cov).unwrap()
            })
            .collect();
        let precisions: Vec<_> = dists.iter().map(|d| linalg::invert_spd(d.cov()).unwrap()).collect();
        let grad = |x: &DVector<f64>| -> DVector<f64> {
            let mut g = DVector::zeros(2);
            for (d, w) in dists.iter().zip(&precisions) {
                g += w * (x - d.mean()) * 2.0;
            }
            g
        };
        // Conjugate gradient with exact line search on the quadratic.
        let mut x = DVector::zeros(2);
        let mut g = grad(&x);
        let mut dir = -&g;
        for _ in 0..10 {
            if g.norm() < 1e-10 {
                break;
            }
            let denom = {
                let gd = grad(&(&x + &dir * 1e-6)) - &g;
                dir.dot(&(gd / 1e-6))
            };
            if !denom.is_finite() || denom <= 0.0 {
                break;
            }
            let alpha = -g.dot(&dir) / denom;
            x += &dir * alpha;
            let g_new = grad(&x);
            let beta = g_new.norm_squared() / g.norm_squared();
            dir = -&g_new + &dir * beta;
            g = g_new;
        }
        let p = product(&dists).unwrap();
        assert!((p.mean() - &x).norm() < 1e-8, "argmin mismatch: {} vs {}", p.mean(), x);
    }

    #[test]
    fn product_dimension_mismatch() {
        let a = gauss(&[0.0], &[&[1.0]]);
        let b = gauss(&[0.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(product(&[a, b]).is_err());
    }

    fn three_block_toy() -> TrajDist {
        // 1-state, 2-step trajectory joint with explicit correlations.
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let cov = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.8, 0.3, 0.8, 1.5, 0.6, 0.3, 0.6, 1.2],
        );
        TrajDist::new(GaussianDist::new(mean, cov).unwrap(), 1, 2).unwrap()
    }

    #[test]
    fn marginal_extracts_blocks() {
        let dist = three_block_toy();
        let m1 = dist.marginal(1).unwrap();
        assert_eq!(m1.mean()[0], 2.0);
        assert_eq!(m1.cov()[(0, 0)], 1.5);
        assert!(dist.marginal(3).is_err());
        // Marginal means over all t reassemble the joint mean.
        let mut reassembled = Vec::new();
        for t in 0..=2 {
            reassembled.push(dist.marginal(t).unwrap().mean()[0]);
        }
        assert_eq!(reassembled, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn marginal_matches_monte_carlo() {
        let dist = three_block_toy();
        let samples = dist.base().sample(100_000, 42).unwrap();
        let t = 1;
        let vals: Vec<f64> = samples.iter().map(|s| s[t]).collect();
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let marg = dist.marginal(t).unwrap();
        assert!((mean - marg.mean()[0]).abs() < 0.05);
        assert!((var - marg.cov()[(0, 0)]).abs() / marg.cov()[(0, 0)] < 0.05);
    }

    #[test]
    fn conditioning_two_block_hand_example() {
        // Joint N((0,0), [[1, .5],[.5, 1]]), observe first coordinate = 1:
        // conditional N(0.5, 0.75).
        let mean = DVector::zeros(2);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let dist = TrajDist::new(GaussianDist::new(mean, cov).unwrap(), 1, 1).unwrap();
        let conds = dist.condition(0, &DVector::from_vec(vec![1.0]), 1).unwrap();
        assert_eq!(conds.len(), 1);
        assert!((conds[0].mean()[0] - 0.5).abs() < 1e-12);
        assert!((conds[0].cov()[(0, 0)] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn conditioning_with_independent_blocks_returns_marginals() {
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let dist = TrajDist::new(GaussianDist::new(mean, cov).unwrap(), 1, 1).unwrap();
        for observed in [-5.0, 0.0, 7.0] {
            let conds = dist.condition(0, &DVector::from_vec(vec![observed]), 1).unwrap();
            assert!((conds[0].mean()[0] - 2.0).abs() < 1e-12);
            assert!((conds[0].cov()[(0, 0)] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conditioning_at_the_mean_keeps_means_and_shrinks_covariance() {
        let dist = three_block_toy();
        let x_tau = DVector::from_vec(vec![1.0]);
        let conds = dist.condition(0, &x_tau, 2).unwrap();
        for (j, cond) in conds.iter().enumerate() {
            let marg = dist.marginal(j + 1).unwrap();
            assert!((cond.mean() - marg.mean()).norm() < 1e-12);
            let diff = marg.cov() - cond.cov();
            let (min_eig, _) = linalg::eigenvalue_range(&diff);
            assert!(min_eig > -1e-9, "conditioning increased covariance");
        }
    }

    #[test]
    fn conditional_window_is_clipped() {
        let dist = three_block_toy();
        let conds = dist.condition(1, &DVector::from_vec(vec![2.0]), 10).unwrap();
        assert_eq!(conds.len(), 1);
    }

    #[test]
    fn marginalized_conditionals_recover_the_marginal() {
        // Law of total expectation/variance by quadrature over x_tau.
        let dist = three_block_toy();
        let marg0 = dist.marginal(0).unwrap();
        let (mu0, var0) = (marg0.mean()[0], marg0.cov()[(0, 0)]);
        let std0 = var0.sqrt();
        let n_grid = 801;
        let half_width = 6.0  * std0;
        let dx = 2.0 * half_width / (n_grid - 1) as f64;
        let mut weight_sum = 0.0;
        let mut mean_acc = 0.0;
        let mut second_acc = 0.0;
        for i in 0..n_grid {
            let x = mu0 - half_width + i as f64 * dx;
            let w = (-(x - mu0).powi(2) / (2.0 * var0)).exp();
            let conds = dist.condition(0, &DVector::from_vec(vec![x]), 1).unwrap();
            let (m, v) = (conds[0].mean()[0], conds[0].cov()[(0, 0)]);
            weight_sum += w;
            mean_acc += w * m;
            second_acc += w * (v + m * m);
        }
        let mean = mean_acc / weight_sum;
        let var = second_acc / weight_sum - mean * mean;
        let marg1 = dist.marginal(1).unwrap();
        assert!((mean - marg1.mean()[0]).abs() / marg1.mean()[0].abs() < 0.01);
        assert!((var - marg1.cov()[(0, 0)]).abs() / marg1.cov()[(0, 0)] < 0.01);
    }

    #[test]
    fn sampling_zero_covariance_returns_the_mean() {
        let g = GaussianDist::new(DVector::from_vec(vec![3.0, -1.0]), DMatrix::zeros(2, 2)).unwrap();
        for s in g.sample(10, 0).unwrap() {
            assert_eq!(s.as_slice(), &[3.0, -1.0]);
        }
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let g = gauss(&[0.0, 0.0], &[&[1.0, 0.2], &[0.2, 2.0]]);
        let a = g.sample(100, 7).unwrap();
        let b = g.sample(100, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_standard_normal_statistics() {
        let g = gauss(&[0.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let samples = g.sample(100_000, 3).unwrap();
        let mut mean = DVector::zeros(2);
        for s in &samples {
            mean += s;
        }
        mean /= samples.len() as f64;
        assert!(mean.amax() < 0.02, "mean {mean}");
        let mut cov = DMatrix::zeros(2, 2);
        for s in &samples {
            let d = s - &mean;
            cov += &d * d.transpose();
        }
        cov /= samples.len() as f64;
        assert!((cov[(0, 0)] - 1.0).abs() < 0.03);
        assert!((cov[(1, 1)] - 1.0).abs() < 0.03);
        assert!(cov[(0, 1)].abs() < 0.03);
    }

    #[test]
    fn invalid_covariance_is_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(GaussianDist::new(DVector::zeros(2), cov).is_err());
    }
}

//! Shared dense linear-algebra utilities: jittered symmetric solves,
//! positive-(semi)definiteness checks, and PSD square roots.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a matrix counts as symmetric.
pub const SYMMETRY_REL_TOL: f64 = 1e-9;

/// Tikhonov jitter ladder: starts at `JITTER_EPS_INIT * trace(M)/n` and
/// escalates by x10 up to `JITTER_EPS_MAX` before giving up.
pub const JITTER_EPS_INIT: f64 = 1e-8;
pub const JITTER_EPS_MAX: f64 = 1e-2;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn vec_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `true` when `‖M − Mᵀ‖_max ≤ rel_tol · max(‖M‖_max, 1)`.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    let mut asym = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    asym <= rel_tol * scale
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let mt = m.transpose();
    *m += mt;
    *m *= 0.5;
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    symmetrize(&mut out);
    out
}

/// Cholesky factorization with a trace-scaled Tikhonov jitter ladder.
///
/// Returns the factorization together with the jitter that was added
/// (0 when the matrix was already positive definite).
pub fn jittered_cholesky(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if !all_finite(m) {
        return Err(Error::non_finite("jittered_cholesky input"));
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok((chol, 0.0));
    }
    let n = m.nrows();
    let mut scale = m.trace().abs() / n as f64;
    if scale == 0.0 {
        scale = 1.0;
    }
    let mut eps = JITTER_EPS_INIT;
    while eps <= JITTER_EPS_MAX * (1.0 + 1e-12) {
        let jitter = eps * scale;
        let mut jittered = m.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok((chol, jitter));
        }
        eps *= 10.0;
    }
    Err(Error::SolverFailure(format!(
        "matrix of size {n} not positive definite after jitter escalation to {JITTER_EPS_MAX}"
    )))
}

/// Solves `M X = rhs` for symmetric `M`, applying the jitter ladder when `M`
/// is not positive definite.
pub fn symmetric_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !all_finite(m) || !all_finite(rhs) {
        return Err(Error::non_finite("symmetric_solve input"));
    }
    if m.nrows() != rhs.nrows() {
        return Err(Error::dimension(
            "symmetric_solve",
            format!("rhs with {} rows", m.nrows()),
            format!("{} rows", rhs.nrows()),
        ));
    }
    if !is_symmetric(m, SYMMETRY_REL_TOL) {
        return Err(Error::Contract(
            "symmetric_solve called with an asymmetric matrix".into(),
        ));
    }
    let (chol, _) = jittered_cholesky(m)?;
    Ok(chol.solve(rhs))
}

/// Vector convenience wrapper around [`symmetric_solve`].
pub fn symmetric_solve_vec(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let sol = symmetric_solve(m, &cols)?;
    Ok(DVector::from_column_slice(sol.as_slice()))
}

/// Inverse of a symmetric positive-(semi)definite matrix via the jittered
/// Cholesky factorization; the result is symmetrized.
pub fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(m, SYMMETRY_REL_TOL) {
        return Err(Error::Contract(
            "invert_spd called with an asymmetric matrix".into(),
        ));
    }
    let (chol, _) = jittered_cholesky(m)?;
    Ok(symmetrized(&chol.inverse()))
}

pub fn eigenvalue_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = symmetrized(m);
    let eig = sym.symmetric_eigen();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in eig.eigenvalues.iter() {
        min = min.min(*v);
        max = max.max(*v);
    }
    (min, max)
}

/// `true` when all eigenvalues are at least `-tol · max(‖M‖_max, 1)`.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let (min, _) = eigenvalue_range(m);
    min >= -rel_tol * max_abs(m).max(1.0)
}

/// Symmetric PSD square root; negative eigenvalues below `-neg_tol·‖M‖` are
/// rejected, small negatives are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>, neg_tol: f64) -> Result<DMatrix<f64>> {
    let sym = symmetrized(m);
    let scale = max_abs(&sym).max(1.0);
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -neg_tol * scale {
            return Err(Error::InvalidCovariance(format!(
                "eigenvalue {v} below tolerance -{}",
                neg_tol * scale
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = eig.eigenvectors;
    Ok(&q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Inverse of a covariance block with eigenvalues floored at
/// `floor_rel · trace(M)/n`, used to turn (possibly near-singular) covariance
/// blocks into bounded tracking weights.
///
/// `max_precision` additionally bounds the largest eigenvalue of the result:
/// conditioning can make some directions exactly deterministic (one-step
/// positions under integrator dynamics), and inverting those through the
/// relative floor alone would produce weights orders of magnitude stiffer
/// than any useful gain.
pub fn floored_precision(cov: &DMatrix<f64>, floor_rel: f64, max_precision: f64) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let sym = symmetrized(cov);
    let scale = (sym.trace() / n as f64).max(1e-12);
    let eig = sym.symmetric_eigen();
    let floor = (floor_rel * scale).max(1.0 / max_precision);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        *v = 1.0 / v.max(floor);
    }
    let q = eig.eigenvectors;
    Ok(symmetrized(&(&q * DMatrix::from_diagonal(&vals) * q.transpose())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let m = DMatrix::identity(3, 3);
        let rhs = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let x = symmetric_solve_vec(&m, &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn solve_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let rhs = DVector::from_vec(vec![2.0, 4.0]);
        let x = symmetric_solve_vec(&m, &rhs).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn solve_random_spd_residual() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let m = random_spd(5, &mut rng);
        let rhs = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let x = symmetric_solve(&m, &rhs).unwrap();
        let resid = (&m * &x - &rhs).norm() / rhs.norm();
        assert!(resid < 1e-10, "residual {resid}");
    }

    #[test]
    fn asymmetric_input_is_a_contract_error() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.5;
        let rhs = DVector::zeros(2);
        match symmetric_solve_vec(&m, &rhs) {
            Err(Error::Contract(_)) => {}
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 0)] = f64::NAN;
        match symmetric_solve(&m, &DMatrix::identity(2, 2)) {
            Err(Error::NonFinite { .. }) => {}
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        // Rank-1 PSD matrix: plain Cholesky fails, the ladder must rescue it.
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let m = &v * v.transpose();
        let (_, jitter) = jittered_cholesky(&m).unwrap();
        assert!(jitter > 0.0);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let m = random_spd(4, &mut rng);
        let s = psd_sqrt(&m, 1e-9).unwrap();
        assert!((&s * &s - &m).norm() < 1e-9 * m.norm().max(1.0));
    }

    #[test]
    fn floored_precision_bounds_weights() {
        // One tiny eigenvalue: the floor keeps the inverse bounded.
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-15]));
        let q = floored_precision(&cov, 1e-6, f64::INFINITY).unwrap();
        let (_, max) = eigenvalue_range(&q);
        assert!(max <= 1.0 / (1e-6 * 0.5) + 1.0);
    }

    #[test]
    fn floored_precision_caps_at_max_precision() {
        // A block with an exactly deterministic direction: the precision cap
        // bounds the stiff eigenvalue, the soft one stays untouched.
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let q = floored_precision(&cov, 1e-6, 5e3).unwrap();
        let (_, max) = eigenvalue_range(&q);
        assert!(max <= 5e3 + 1e-9, "max eigenvalue {max}");
        assert!((q[(0, 0)] - 1.0).abs() < 1e-9);
    }
}

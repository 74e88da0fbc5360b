//! Lifted (batch) dynamics matrices: stacking the linear rollout
//! `x_{t+1} = A_t x_t + B_t u_t` into `x = Sx·x0 + Su·u`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Batch stacking matrices for a time-varying linear system.
///
/// `sx` maps the initial state to the stacked state trajectory and `su` maps
/// the stacked controls; the top block of `sx` is the identity and `su` is
/// strictly block lower-triangular.
#[derive(Clone, Debug)]
pub struct BatchMatrices {
    pub sx: DMatrix<f64>,
    pub su: DMatrix<f64>,
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
}

impl BatchMatrices {
    /// Stacked prediction `Sx·x0 + Su·u`.
    pub fn predict(&self, x0: &DVector<f64>, u_stacked: &DVector<f64>) -> Result<DVector<f64>> {
        if x0.len() != self.nx {
            return Err(Error::dimension(
                "BatchMatrices::predict",
                format!("x0 of length {}", self.nx),
                format!("{}", x0.len()),
            ));
        }
        if u_stacked.len() != self.nu * self.horizon {
            return Err(Error::dimension(
                "BatchMatrices::predict",
                format!("u of length {}", self.nu * self.horizon),
                format!("{}", u_stacked.len()),
            ));
        }
        Ok(&self.sx * x0 + &self.su * u_stacked)
    }
}

/// Builds the stacking matrices from per-step Jacobian sequences.
pub fn build_batch_matrices(a_seq: &[DMatrix<f64>], b_seq: &[DMatrix<f64>]) -> Result<BatchMatrices> {
    if a_seq.is_empty() || a_seq.len() != b_seq.len() {
        return Err(Error::dimension(
            "build_batch_matrices",
            "equal, non-zero A/B sequence lengths",
            format!("{} A, {} B", a_seq.len(), b_seq.len()),
        ));
    }
    let horizon = a_seq.len();
    let nx = a_seq[0].nrows();
    let nu = b_seq[0].ncols();
    for (t, a) in a_seq.iter().enumerate() {
        if a.nrows() != nx || a.ncols() != nx {
            return Err(Error::dimension(
                "build_batch_matrices",
                format!("A_{t} of shape {nx}x{nx}"),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
    }
    for (t, b) in b_seq.iter().enumerate() {
        if b.nrows() != nx || b.ncols() != nu {
            return Err(Error::dimension(
                "build_batch_matrices",
                format!("B_{t} of shape {nx}x{nu}"),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
    }

    let mut sx = DMatrix::zeros(nx * (horizon + 1), nx);
    let mut su = DMatrix::zeros(nx * (horizon + 1), nu * horizon);
    sx.view_mut((0, 0), (nx, nx)).copy_from(&DMatrix::identity(nx, nx));

    // Block row t+1 applies A_t to block row t and adds B_t in column t.
    for t in 0..horizon {
        let prev_sx = sx.view((t * nx, 0), (nx, nx)).clone_owned();
        sx.view_mut(((t + 1) * nx, 0), (nx, nx)).copy_from(&(&a_seq[t] * prev_sx));

        for j in 0..t {
            let prev = su.view((t * nx, j * nu), (nx, nu)).clone_owned();
            su.view_mut(((t + 1) * nx, j * nu), (nx, nu)).copy_from(&(&a_seq[t] * prev));
        }
        su.view_mut(((t + 1) * nx, t * nu), (nx, nu)).copy_from(&b_seq[t]);
    }

    Ok(BatchMatrices { sx, su, nx, nu, horizon })
}

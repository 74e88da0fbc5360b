//! Trajectory optimization toolkit: long-horizon iLQR planning, extraction of
//! the Gaussian distribution of the optimal trajectory, and short-horizon MPC
//! controllers that track that distribution under disturbances.
//!
//! The crate is organized around the planning/tracking pipeline:
//!
//! - [`trajectory`], [`batch`], [`linalg`]: trajectory containers, lifted
//!   (batch) dynamics matrices, and shared numerical utilities.
//! - [`systems`]: the plant catalog (point mass, pendulum, unicycle, bicopter,
//!   quadcopter, planar arm) with analytic Jacobians.
//! - [`costs`]: goal-reaching and reference-tracking costs with derivatives.
//! - [`lqr`]: time-varying finite-horizon LQR, batch and Riccati forms, with
//!   the Gaussian solution distribution.
//! - [`ilqr`]: the iterative LQR solver and trajectory-distribution extraction.
//! - [`gaussian`]: product, marginalization, conditioning, and sampling of
//!   Gaussian trajectory distributions.
//! - [`tracking`]: the four tracking controllers and the closed-loop simulator.
//! - [`harness`]: disturbance synthesis, benchmark orchestration, result
//!   export, and the command-line interface.

pub mod batch;
pub mod costs;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod ilqr;
pub mod linalg;
pub mod lqr;
pub mod systems;
pub mod tracking;
pub mod trajectory;

pub use error::{Error, Result};

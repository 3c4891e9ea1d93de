//! Nonlinear renewal theory for perturbed random walks.
//!
//! A walk `S_n = X_1 + … + X_n` with positive drift is perturbed by a
//! stationary term `ξ_n` and a slowly changing term `ζ_n ≈ T_nᵀ Q T_n / n`.
//! This crate simulates `Z_n = S_n + ξ_n + ζ_n`, its first passage time over
//! a level, the limiting laws of the excess and perturbations, the
//! second-order expansion of the expected passage time, and the
//! staggered-entry exponential survival model that motivates the setting.
//!
//! Deterministic kernels (linear algebra, quadrature, mixture distribution,
//! perturbation terms, exact trial decompositions) are generic over
//! [`Scalar`]; Monte Carlo drivers run in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod mixture;
pub mod passage;
pub mod perturbation;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod trial;
pub mod verification;
pub mod walk;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::Scalar;

/// `f64` mixture law.
pub type Mixture = mixture::ChiSquareMixture<f64>;
/// `f64` symmetric matrix.
pub type Matrix = linalg::SymMatrix<f64>;
/// `f64` quadratic weight.
pub type Quadratic = perturbation::QuadraticSpec<f64>;
/// `f64` covariance estimate.
pub type Covariance = mixture::CovarianceEstimate<f64>;
/// `f64` trial snapshot.
pub type Trial = trial::TrialState<f64>;
/// `f64` trial statistic.
pub type Statistic = trial::GStatistic<f64>;

//! Nonlinear least squares with Gaussian-mixture factors.
//!
//! A mixture likelihood `-log sum_k w_k N(eta(x); mu_k, R_k)` is not a sum of
//! squares, so it has to be reshaped before a Gauss-Newton or
//! Levenberg-Marquardt solver can use it. Four reshapings are provided
//! ([`Method`]): max-mixture, sum-mixture, max-sum-mixture and the
//! Hessian-sum-mixture, which supplies its own Hessian to the solver.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod error;
pub mod factor;
pub mod lie;
pub mod mixture;
pub mod numdiff;
pub mod selftest;
pub mod solver;

pub use error::{Error, Result};
pub use factor::{Factor, GaussianFactor, MixtureFactor};
pub use lie::{ManifoldElement, ManifoldKind, Retract, Tangent};
pub use mixture::{
    ComponentError, ComponentEval, FactorLinearization, FormulationOptions, GaussianComponent,
    GaussianMixture, IdentityError, Method,
};
pub use solver::{
    laplace_covariance, solve, OptimizationResult, Problem, SolverConfig, SolverMode,
};

//! Dense Gauss-Newton / Levenberg-Marquardt over manifold-valued variables.
//!
//! Each factor supplies an error and Jacobian, and optionally an explicit
//! Hessian approximation. With `use_custom_hessian` the solver substitutes that
//! Hessian into the Newton step; otherwise it always forms `J^T J`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::lie::{ManifoldElement, Retract, Tangent};

/// Eigenvalue ratio below which a Hessian is treated as singular.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMode {
    GaussNewton,
    LevenbergMarquardt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Use `FactorLinearization::hessian` when a factor provides one.
    pub use_custom_hessian: bool,
    /// Stop once the step norm falls below this.
    pub step_tol: f64,
    pub max_iters: usize,
    /// Initial damping is `lm_tau * max diag(H)`.
    pub lm_tau: f64,
    /// Gauss-Newton step size; LM always takes full steps.
    pub step_size: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::LevenbergMarquardt,
            use_custom_hessian: false,
            step_tol: 1e-8,
            max_iters: 200,
            lm_tau: 1e-3,
            step_size: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_tol > 0.0) {
            return Err(Error::InvalidParameter("step_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.lm_tau > 0.0) {
            return Err(Error::InvalidParameter("lm_tau must be positive".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidParameter("step_size must be positive".into()));
        }
        Ok(())
    }
}

/// Variables plus factors. Variable `i` occupies tangent columns
/// `offsets[i]..offsets[i] + dim_i` of the assembled system.
pub struct Problem {
    variables: Vec<ManifoldElement>,
    offsets: Vec<usize>,
    total_dim: usize,
    factors: Vec<Box<dyn Factor>>,
}

impl Problem {
    /// `variables` fixes the slot layout and serves as the default initial guess.
    pub fn new(variables: Vec<ManifoldElement>) -> Self {
        let mut offsets = Vec::with_capacity(variables.len());
        let mut total_dim = 0;
        for v in &variables {
            offsets.push(total_dim);
            total_dim += v.tangent_dim();
        }
        Self {
            variables,
            offsets,
            total_dim,
            factors: Vec::new(),
        }
    }

    pub fn add_factor(&mut self, factor: Box<dyn Factor>) -> Result<()> {
        if factor.keys().is_empty() {
            return Err(Error::InvalidParameter(
                "factor references no variables".into(),
            ));
        }
        if let Some(bad) = factor.keys().iter().find(|k| **k >= self.variables.len()) {
            return Err(Error::InvalidParameter(format!(
                "factor references variable {bad} but the problem has {}",
                self.variables.len()
            )));
        }
        self.factors.push(factor);
        Ok(())
    }

    pub fn variables(&self) -> &[ManifoldElement] {
        &self.variables
    }

    pub fn factors(&self) -> &[Box<dyn Factor>] {
        &self.factors
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    fn check_state(&self, state: &[ManifoldElement]) -> Result<()> {
        if state.len() != self.variables.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variables.len(),
                found: state.len(),
            });
        }
        for (s, v) in state.iter().zip(&self.variables) {
            if s.kind() != v.kind() {
                return Err(Error::KindMismatch(
                    s.kind().to_string(),
                    v.kind().to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Total cost `sum_i 1/2 |e_i|^2` without forming derivatives.
    pub fn cost(&self, state: &[ManifoldElement]) -> Result<f64> {
        Ok(assemble(self, state, false)?.cost)
    }
}

/// Gradient, Hessian approximation and cost at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub cost: f64,
    pub clamped: usize,
}

pub fn assemble(
    problem: &Problem,
    state: &[ManifoldElement],
    use_custom_hessian: bool,
) -> Result<Assembled> {
    problem.check_state(state)?;
    let n = problem.total_dim;
    let mut gradient = DVector::zeros(n);
    let mut hessian = DMatrix::zeros(n, n);
    let mut cost = 0.0;
    let mut clamped = 0;

    for (index, factor) in problem.factors.iter().enumerate() {
        let keys = factor.keys();
        let local: Vec<ManifoldElement> = keys.iter().map(|k| state[*k].clone()).collect();
        let lin = factor.linearize(&local)?;

        let local_dim: usize = local.iter().map(|v| v.tangent_dim()).sum();
        if lin.jacobian.ncols() != local_dim || lin.jacobian.nrows() != lin.error.len() {
            return Err(Error::DimensionMismatch {
                expected: local_dim,
                found: lin.jacobian.ncols(),
            });
        }
        if !lin.loss.is_finite() || lin.error.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                factor: index,
                what: "error",
            });
        }
        if lin.jacobian.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                factor: index,
                what: "jacobian",
            });
        }

        let local_grad = lin.gradient();
        let local_hess = match (&lin.hessian, use_custom_hessian) {
            (Some(h), true) => {
                if h.nrows() != local_dim || h.ncols() != local_dim {
                    return Err(Error::DimensionMismatch {
                        expected: local_dim,
                        found: h.nrows(),
                    });
                }
                if h.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        factor: index,
                        what: "hessian",
                    });
                }
                h.clone()
            }
            _ => lin.jacobian.transpose() * &lin.jacobian,
        };

        // scatter the local blocks into the global system
        let mut local_offset_i = 0;
        for ki in keys {
            let di = state[*ki].tangent_dim();
            let gi = problem.offsets[*ki];
            let mut g = gradient.rows_mut(gi, di);
            g += local_grad.rows(local_offset_i, di);
            let mut local_offset_j = 0;
            for kj in keys {
                let dj = state[*kj].tangent_dim();
                let gj = problem.offsets[*kj];
                let mut block = hessian.view_mut((gi, gj), (di, dj));
                block += local_hess.view((local_offset_i, local_offset_j), (di, dj));
                local_offset_j += dj;
            }
            local_offset_i += di;
        }

        cost += lin.loss;
        clamped += usize::from(lin.clamped);
    }

    Ok(Assembled {
        gradient,
        hessian,
        cost,
        clamped,
    })
}

/// Solve `H dx = -g`, refusing numerically singular or indefinite `H`.
pub fn newton_step(gradient: &DVector<f64>, hessian: &DMatrix<f64>) -> Result<Tangent> {
    let n = gradient.len();
    if hessian.nrows() != n || hessian.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: hessian.nrows(),
        });
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let sym = (hessian + hessian.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if !(max_eig > 0.0) || min_eig <= RANK_TOL * max_eig {
        return Err(Error::RankDeficient { min_eig, max_eig });
    }
    let chol = sym
        .cholesky()
        .ok_or(Error::RankDeficient { min_eig, max_eig })?;
    Ok(-chol.solve(gradient))
}

/// Levenberg-Marquardt step `(H + lambda I) dx = -g`.
pub fn lm_step(gradient: &DVector<f64>, hessian: &DMatrix<f64>, lambda: f64) -> Result<Tangent> {
    let n = gradient.len();
    newton_step(gradient, &(hessian + DMatrix::identity(n, n) * lambda))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub estimate: Vec<ManifoldElement>,
    /// Linearize-and-solve attempts, rejected LM steps included.
    pub iterations: usize,
    /// The step norm fell below `step_tol` before `max_iters`.
    pub converged: bool,
    pub final_cost: f64,
    /// Assembled Hessian at `estimate`, without damping.
    pub information: DMatrix<f64>,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// Factor evaluations whose square-root argument was clamped.
    pub clamped_evaluations: usize,
}

pub fn solve(
    problem: &Problem,
    initial: &[ManifoldElement],
    config: &SolverConfig,
) -> Result<OptimizationResult> {
    match config.mode {
        SolverMode::GaussNewton => gauss_newton_solve(problem, initial, config),
        SolverMode::LevenbergMarquardt => lm_solve(problem, initial, config),
    }
}

pub fn gauss_newton_solve(
    problem: &Problem,
    initial: &[ManifoldElement],
    config: &SolverConfig,
) -> Result<OptimizationResult> {
    config.validate()?;
    let mut state = initial.to_vec();
    let mut lin = assemble(problem, &state, config.use_custom_hessian)?;
    if !lin.cost.is_finite() {
        return Err(Error::NonFiniteCost { iteration: 0 });
    }
    let mut history = vec![lin.cost];
    let mut clamped = lin.clamped;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iters {
        iterations += 1;
        let step = newton_step(&lin.gradient, &lin.hessian)? * config.step_size;
        let small = step.norm() < config.step_tol;
        state = state.retract(&step)?;
        lin = assemble(problem, &state, config.use_custom_hessian)?;
        if !lin.cost.is_finite() {
            return Err(Error::NonFiniteCost {
                iteration: iterations,
            });
        }
        clamped += lin.clamped;
        history.push(lin.cost);
        if small {
            converged = true;
            break;
        }
    }

    Ok(OptimizationResult {
        estimate: state,
        iterations,
        converged,
        final_cost: lin.cost,
        information: lin.hessian,
        cost_history: history,
        clamped_evaluations: clamped,
    })
}

/// Levenberg-Marquardt with the gain-ratio damping update of Madsen, Nielsen
/// and Tingleff: accepted steps scale `lambda` by `max(1/3, 1 - (2 rho - 1)^3)`,
/// rejected steps multiply it by a doubling factor `nu`.
pub fn lm_solve(
    problem: &Problem,
    initial: &[ManifoldElement],
    config: &SolverConfig,
) -> Result<OptimizationResult> {
    config.validate()?;
    let mut state = initial.to_vec();
    let mut lin = assemble(problem, &state, config.use_custom_hessian)?;
    if !lin.cost.is_finite() {
        return Err(Error::NonFiniteCost { iteration: 0 });
    }
    let mut history = vec![lin.cost];
    let mut clamped = lin.clamped;

    let max_diag = lin.hessian.diagonal().max();
    let mut lambda = if max_diag > 0.0 {
        config.lm_tau * max_diag
    } else {
        config.lm_tau
    };
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iters {
        iterations += 1;
        let step = match lm_step(&lin.gradient, &lin.hessian, lambda) {
            Ok(step) => step,
            Err(Error::RankDeficient { .. }) => {
                lambda *= nu;
                nu *= 2.0;
                continue;
            }
            Err(e) => return Err(e),
        };
        if step.norm() < config.step_tol {
            converged = true;
            break;
        }

        let candidate = state.retract(&step)?;
        let trial = assemble(problem, &candidate, config.use_custom_hessian)?;
        if !trial.cost.is_finite() {
            return Err(Error::NonFiniteCost {
                iteration: iterations,
            });
        }
        clamped += trial.clamped;

        let predicted = -(lin.gradient.dot(&step) + 0.5 * step.dot(&(&lin.hessian * &step)));
        let actual = lin.cost - trial.cost;
        let rho = actual / predicted;
        if predicted > 0.0 && rho > 0.0 {
            state = candidate;
            lin = trial;
            history.push(lin.cost);
            lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
        } else {
            lambda *= nu;
            nu *= 2.0;
        }
        if !lambda.is_finite() {
            // damping overflowed: no productive step exists from here
            break;
        }
    }

    Ok(OptimizationResult {
        estimate: state,
        iterations,
        converged,
        final_cost: lin.cost,
        information: lin.hessian,
        cost_history: history,
        clamped_evaluations: clamped,
    })
}

/// Laplace-approximation covariance: the symmetrized inverse of the information.
pub fn laplace_covariance(result: &OptimizationResult) -> Result<DMatrix<f64>> {
    covariance_from_information(&result.information)
}

pub fn covariance_from_information(information: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (information + information.transpose()) * 0.5;
    let chol = sym.cholesky().ok_or(Error::SingularInformation)?;
    let cov = chol.inverse();
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation);
    }
    Ok((&cov + cov.transpose()) * 0.5)
}

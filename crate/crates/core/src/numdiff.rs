//! Finite-difference and brute-force oracles.
//!
//! Nothing here calls into the mixture formulations or the solver, so the
//! oracles stay independent of the code they check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::{Retract, Tangent};

/// Central-difference settings. Perturbations are applied with
/// [`Retract::retract`], i.e. on the left for Lie-group states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffConfig {
    pub step: f64,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self { step: 1e-6 }
    }
}

impl DiffConfig {
    /// Step suited to second differences, where round-off grows like `eps / h^2`.
    pub fn hessian() -> Self {
        Self { step: 1e-4 }
    }

    fn check(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "finite-difference step must be positive, got {}",
                self.step
            )));
        }
        Ok(())
    }
}

fn axis(n: usize, i: usize, scale: f64) -> Tangent {
    let mut v = DVector::zeros(n);
    v[i] = scale;
    v
}

fn finite_scalar(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(
            "non-finite sample in finite difference".into(),
        ))
    }
}

/// Central-difference Jacobian of `f` along each tangent axis of `x`.
pub fn fd_jacobian<S, F>(f: F, x: &S, cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    S: Retract,
    F: Fn(&S) -> Result<DVector<f64>>,
{
    cfg.check()?;
    let n = x.tangent_dim();
    let h = cfg.step;
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let plus = f(&x.retract(&axis(n, i, h))?)?;
        let minus = f(&x.retract(&axis(n, i, -h))?)?;
        if plus.len() != minus.len() {
            return Err(Error::DimensionMismatch {
                expected: plus.len(),
                found: minus.len(),
            });
        }
        let col = (plus - minus) / (2.0 * h);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite sample in finite difference".into(),
            ));
        }
        columns.push(col);
    }
    let rows = columns.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, n, |r, c| columns[c][r]))
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<S, F>(f: F, x: &S, cfg: &DiffConfig) -> Result<DVector<f64>>
where
    S: Retract,
    F: Fn(&S) -> Result<f64>,
{
    let jac = fd_jacobian(|s: &S| Ok(DVector::from_element(1, f(s)?)), x, cfg)?;
    Ok(jac.row(0).transpose())
}

/// Central second differences, symmetrized.
pub fn fd_hessian<S, F>(f: F, x: &S, cfg: &DiffConfig) -> Result<DMatrix<f64>>
where
    S: Retract,
    F: Fn(&S) -> Result<f64>,
{
    cfg.check()?;
    let n = x.tangent_dim();
    let h = cfg.step;
    let eval = |d: Tangent| -> Result<f64> { finite_scalar(f(&x.retract(&d)?)?) };
    let mut hess = DMatrix::zeros(n, n);
    let center = eval(DVector::zeros(n))?;
    for i in 0..n {
        let ei = axis(n, i, h);
        hess[(i, i)] = (eval(ei.clone())? - 2.0 * center + eval(-ei.clone())?) / (h * h);
        for j in (i + 1)..n {
            let ej = axis(n, j, h);
            let v = (eval(&ei + &ej)? - eval(&ei - &ej)? - eval(-&ei + &ej)? + eval(-&ei - &ej)?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Result of [`grid_global_optimum`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub argmin: DVector<f64>,
    pub cost: f64,
    /// Best cost seen on the grid before refinement.
    pub grid_cost: f64,
}

/// Exhaustive grid search on a box followed by a damped Newton refinement
/// driven by finite-difference derivatives.
pub fn grid_global_optimum<F>(
    cost: F,
    bounds: &[(f64, f64)],
    resolution: usize,
    refine: bool,
) -> Result<GridOptimum>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if bounds.is_empty() {
        return Err(Error::InvalidParameter(
            "grid needs at least one axis".into(),
        ));
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(
            "grid resolution must be at least 2".into(),
        ));
    }
    if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidParameter(
            "grid bounds must satisfy lo < hi".into(),
        ));
    }
    let d = bounds.len();
    let coord = |axis: usize, i: usize| {
        let (lo, hi) = bounds[axis];
        lo + (hi - lo) * i as f64 / (resolution - 1) as f64
    };
    let total = resolution
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidParameter("grid too large".into()))?;

    let mut point = DVector::zeros(d);
    let mut best = DVector::zeros(d);
    let mut best_cost = f64::INFINITY;
    for flat in 0..total {
        let mut rem = flat;
        for axis in 0..d {
            point[axis] = coord(axis, rem % resolution);
            rem /= resolution;
        }
        let c = cost(&point);
        if c < best_cost {
            best_cost = c;
            best.copy_from(&point);
        }
    }
    if !best_cost.is_finite() {
        return Err(Error::InvalidParameter(
            "cost is non-finite on the whole grid".into(),
        ));
    }

    let grid_cost = best_cost;
    if refine {
        let (x, c) = refine_minimum(&cost, best, best_cost)?;
        best = x;
        best_cost = c;
    }
    Ok(GridOptimum {
        argmin: best,
        cost: best_cost,
        grid_cost,
    })
}

/// Levenberg-style damped Newton on finite-difference derivatives. Only
/// strictly improving steps are taken, so the result never costs more than
/// the starting point.
fn refine_minimum<F>(cost: &F, mut x: DVector<f64>, mut fx: f64) -> Result<(DVector<f64>, f64)>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x.len();
    let grad_cfg = DiffConfig::default();
    let hess_cfg = DiffConfig::hessian();
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let g = fd_gradient(|s: &DVector<f64>| Ok(cost(s)), &x, &grad_cfg)?;
        let h = fd_hessian(|s: &DVector<f64>| Ok(cost(s)), &x, &hess_cfg)?;
        let scale = h.diagonal().amax().max(1e-12);
        let damped = &h + DMatrix::identity(n, n) * (lambda * scale);
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
            continue;
        };
        let step = -chol.solve(&g);
        if step.norm() < 1e-12 {
            break;
        }
        let candidate = &x + &step;
        let fc = cost(&candidate);
        if fc < fx {
            x = candidate;
            fx = fc;
            lambda = (lambda / 3.0).max(1e-12);
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    Ok((x, fx))
}

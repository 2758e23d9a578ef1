//! Gaussian and Gaussian-mixture factors.
//!
//! A mixture term contributes the negative log-likelihood
//!
//! ```text
//! J_GMM(x) = -log sum_k alpha_k exp(-f_k(x)),   f_k = 1/2 e_k^T e_k,
//! alpha_k  = w_k det(R_k)^(-1/2),               e_k = L_k (eta_k(x) - mu_k),
//! ```
//!
//! which is not a sum of squares. Each [`Method`] turns it into an error vector
//! and Jacobian a least-squares solver can consume:
//!
//! * **Max-Mixture** keeps only the dominant component.
//! * **Sum-Mixture** wraps the whole NLL into one scalar `sqrt` error.
//! * **Max-Sum-Mixture** keeps the dominant component as a Gaussian error and
//!   treats the remainder Sum-Mixture style.
//! * **Hessian-Sum-Mixture** stacks `sqrt(w_k) e_k` so the Gauss-Newton product
//!   becomes `sum_k w_k J_k^T J_k` with softmin weights `w_k`, plus one scalar
//!   row that restores the loss value.
//!
//! All exponent arithmetic happens in the log domain with the largest term
//! subtracted first, and the covariance-normalised weights are rescaled so that
//! `max_k alpha_k = 1` before any constant is formed.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::ManifoldElement;

/// Negative arguments of a square root down to this value are treated as rounding.
pub const SQRT_CLAMP_TOL: f64 = 1e-12;

/// Relative asymmetry tolerated in a user-supplied covariance.
const SYMMETRY_TOL: f64 = 1e-9;

/// The four ways of feeding a Gaussian mixture to a least-squares solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "mm")]
    MaxMixture,
    #[serde(rename = "sm")]
    SumMixture,
    #[serde(rename = "msm")]
    MaxSumMixture,
    #[serde(rename = "hsm")]
    HessianSumMixture,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::MaxMixture,
        Method::SumMixture,
        Method::MaxSumMixture,
        Method::HessianSumMixture,
    ];

    /// Short lowercase name used on the command line and in output files.
    pub fn short_name(self) -> &'static str {
        match self {
            Method::MaxMixture => "mm",
            Method::SumMixture => "sm",
            Method::MaxSumMixture => "msm",
            Method::HessianSumMixture => "hsm",
        }
    }

    /// Name used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::MaxMixture => "MM",
            Method::SumMixture => "SM",
            Method::MaxSumMixture => "MSM",
            Method::HessianSumMixture => "HSM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mm" => Ok(Method::MaxMixture),
            "sm" => Ok(Method::SumMixture),
            "msm" => Ok(Method::MaxSumMixture),
            "hsm" => Ok(Method::HessianSumMixture),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected one of mm, sm, msm, hsm)"
            ))),
        }
    }
}

/// Tunables shared by the formulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulationOptions {
    /// Damping constant added to the Max-Sum-Mixture normalisation.
    pub msm_delta: f64,
}

impl Default for FormulationOptions {
    fn default() -> Self {
        Self { msm_delta: 1.0 }
    }
}

/// What a factor hands to the solver for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorLinearization {
    /// `1/2 |error|^2`.
    pub loss: f64,
    pub error: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Explicit Hessian approximation; when absent the solver uses `J^T J`.
    pub hessian: Option<DMatrix<f64>>,
    pub dominant_index: Option<usize>,
    /// `loss` minus the reference NLL at this state. The reference is the exact
    /// mixture NLL for SM, MSM and HSM, and the max-mixture NLL for MM.
    pub offset: f64,
    /// A square-root argument in `[-SQRT_CLAMP_TOL, 0)` was clamped to zero.
    pub clamped: bool,
}

impl FactorLinearization {
    /// A plain Gaussian (or any sum-of-squares) factor.
    pub fn gaussian(error: DVector<f64>, jacobian: DMatrix<f64>) -> Self {
        Self {
            loss: 0.5 * error.norm_squared(),
            error,
            jacobian,
            hessian: None,
            dominant_index: None,
            offset: 0.0,
            clamped: false,
        }
    }

    /// The Hessian the solver will use: the explicit one if present, else `J^T J`.
    pub fn implied_hessian(&self) -> DMatrix<f64> {
        match &self.hessian {
            Some(h) => h.clone(),
            None => self.jacobian.transpose() * &self.jacobian,
        }
    }

    /// `J^T e`, the gradient of `loss` seen by a Gauss-Newton solver.
    pub fn gradient(&self) -> DVector<f64> {
        self.jacobian.transpose() * &self.error
    }
}

/// Component error function `eta_k(x)` together with its left-perturbation
/// Jacobian. The Jacobian has one column per tangent coordinate of the
/// stacked state it receives.
pub trait ComponentError: Send + Sync {
    fn evaluate(&self, state: &[ManifoldElement]) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

impl<F> ComponentError for F
where
    F: Fn(&[ManifoldElement]) -> Result<(DVector<f64>, DMatrix<f64>)> + Send + Sync,
{
    fn evaluate(&self, state: &[ManifoldElement]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self(state)
    }
}

/// `eta(x) = x` for a single `R^n` variable.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityError;

impl ComponentError for IdentityError {
    fn evaluate(&self, state: &[ManifoldElement]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let [ManifoldElement::RealVector(x)] = state else {
            return Err(Error::InvalidParameter(
                "identity error expects exactly one R^n variable".into(),
            ));
        };
        Ok((x.clone(), DMatrix::identity(x.len(), x.len())))
    }
}

/// One weighted Gaussian component of a mixture likelihood.
#[derive(Clone)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub error: Arc<dyn ComponentError>,
}

impl fmt::Debug for GaussianComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianComponent")
            .field("weight", &self.weight)
            .field("mean", &self.mean)
            .field("covariance", &self.covariance)
            .finish_non_exhaustive()
    }
}

impl GaussianComponent {
    pub fn new(
        weight: f64,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        error: Arc<dyn ComponentError>,
    ) -> Self {
        Self {
            weight,
            mean,
            covariance,
            error,
        }
    }
}

/// A component after the change of variables `e = L (eta - mu)`, `L^T L = R^-1`.
#[derive(Clone)]
pub struct NormalizedComponent {
    /// `w det(R)^(-1/2)`
    pub alpha: f64,
    pub log_alpha: f64,
    pub sqrt_info: DMatrix<f64>,
    pub mean: DVector<f64>,
    error: Arc<dyn ComponentError>,
}

impl fmt::Debug for NormalizedComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalizedComponent")
            .field("alpha", &self.alpha)
            .field("sqrt_info", &self.sqrt_info)
            .field("mean", &self.mean)
            .finish_non_exhaustive()
    }
}

/// Square-root information matrix and `log det R` of an SPD covariance.
pub fn sqrt_information(covariance: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = covariance.nrows();
    if n == 0 || covariance.ncols() != n {
        return Err(Error::NotPositiveDefinite(format!(
            "covariance must be square and non-empty, got {}x{}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite entry".into()));
    }
    let asym = (covariance - covariance.transpose()).amax();
    if asym > SYMMETRY_TOL * covariance.amax().max(1.0) {
        return Err(Error::NotPositiveDefinite(format!("asymmetry {asym:e}")));
    }
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let lower = chol.l();
    let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    // R = L L^T  =>  R^-1 = L^-T L^-1, so L^-1 is a valid square-root information.
    let sqrt_info = lower
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    Ok((sqrt_info, log_det))
}

/// Change of variables for one component: `alpha_k` and the square-root information.
pub fn normalize_component(component: &GaussianComponent) -> Result<NormalizedComponent> {
    if !(component.weight > 0.0 && component.weight.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "component weight must be positive, got {}",
            component.weight
        )));
    }
    if component.mean.len() != component.covariance.nrows() {
        return Err(Error::DimensionMismatch {
            expected: component.covariance.nrows(),
            found: component.mean.len(),
        });
    }
    let (sqrt_info, log_det) = sqrt_information(&component.covariance)?;
    let log_alpha = component.weight.ln() - 0.5 * log_det;
    Ok(NormalizedComponent {
        alpha: log_alpha.exp(),
        log_alpha,
        sqrt_info,
        mean: component.mean.clone(),
        error: component.error.clone(),
    })
}

impl NormalizedComponent {
    pub fn evaluate(&self, state: &[ManifoldElement]) -> Result<ComponentEval> {
        let (eta, eta_jac) = self.error.evaluate(state)?;
        if eta.len() != self.mean.len() || eta_jac.nrows() != eta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: eta.len(),
            });
        }
        Ok(ComponentEval {
            log_alpha: self.log_alpha,
            error: &self.sqrt_info * (eta - &self.mean),
            jacobian: &self.sqrt_info * eta_jac,
        })
    }
}

/// A normalized component evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEval {
    pub log_alpha: f64,
    /// `e_k`
    pub error: DVector<f64>,
    /// `de_k/dx`
    pub jacobian: DMatrix<f64>,
}

impl ComponentEval {
    /// `f_k = 1/2 e_k^T e_k`
    pub fn half_norm(&self) -> f64 {
        0.5 * self.error.norm_squared()
    }
}

/// `log sum_i exp(v_i)` with the maximum subtracted first.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `exp(v_i) / sum_j exp(v_j)`.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-evaluation quantities shared by all formulations.
struct Prepared {
    /// `log alpha_k - max_j log alpha_j`
    scaled_log_alpha: Vec<f64>,
    max_log_alpha: f64,
    half_norms: Vec<f64>,
    /// `log alpha_k - f_k` on the rescaled weights.
    exponents: Vec<f64>,
}

fn prepare(components: &[ComponentEval]) -> Result<Prepared> {
    let Some(first) = components.first() else {
        return Err(Error::EmptyMixture);
    };
    let ncols = first.jacobian.ncols();
    for c in components {
        if c.jacobian.ncols() != ncols {
            return Err(Error::DimensionMismatch {
                expected: ncols,
                found: c.jacobian.ncols(),
            });
        }
        if c.jacobian.nrows() != c.error.len() {
            return Err(Error::DimensionMismatch {
                expected: c.error.len(),
                found: c.jacobian.nrows(),
            });
        }
    }
    let max_log_alpha = components
        .iter()
        .map(|c| c.log_alpha)
        .fold(f64::NEG_INFINITY, f64::max);
    let scaled_log_alpha: Vec<f64> = components
        .iter()
        .map(|c| c.log_alpha - max_log_alpha)
        .collect();
    let half_norms: Vec<f64> = components.iter().map(ComponentEval::half_norm).collect();
    let exponents = scaled_log_alpha
        .iter()
        .zip(&half_norms)
        .map(|(a, f)| a - f)
        .collect();
    Ok(Prepared {
        scaled_log_alpha,
        max_log_alpha,
        half_norms,
        exponents,
    })
}

/// First index of the maximum; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Square root of a quantity that is non-negative up to rounding.
fn checked_sqrt(value: f64, context: &'static str) -> Result<(f64, bool)> {
    if value >= 0.0 {
        Ok((value.sqrt(), false))
    } else if value >= -SQRT_CLAMP_TOL {
        log::warn!("clamping square-root argument {value:e} to zero in {context}");
        Ok((0.0, true))
    } else {
        Err(Error::NegativeSqrtArgument { value, context })
    }
}

/// `sum_k w_k e_k^T J_k` as a row vector.
fn weighted_gradient_row(components: &[ComponentEval], weights: &[f64]) -> DMatrix<f64> {
    let ncols = components[0].jacobian.ncols();
    let mut row = DMatrix::zeros(1, ncols);
    for (c, w) in components.iter().zip(weights) {
        row += (c.error.transpose() * &c.jacobian) * *w;
    }
    row
}

/// Exact mixture NLL, `-log sum_k alpha_k exp(-f_k)`.
pub fn gmm_nll(components: &[ComponentEval]) -> Result<f64> {
    let p = prepare(components)?;
    Ok(-log_sum_exp(&p.exponents) - p.max_log_alpha)
}

/// Max-mixture NLL, `-log max_k alpha_k exp(-f_k)`.
pub fn max_mixture_nll(components: &[ComponentEval]) -> Result<f64> {
    let p = prepare(components)?;
    let k = argmax(&p.exponents);
    Ok(-p.exponents[k] - p.max_log_alpha)
}

/// `argmax_k log alpha_k - f_k`, lowest index on ties.
pub fn dominant_index(components: &[ComponentEval]) -> Result<usize> {
    Ok(argmax(&prepare(components)?.exponents))
}

pub fn evaluate_max_mixture(components: &[ComponentEval]) -> Result<FactorLinearization> {
    let p = prepare(components)?;
    let k = argmax(&p.exponents);
    // c = max_k alpha_k, which is 1 after rescaling.
    let (head, clamped) = checked_sqrt(-2.0 * p.scaled_log_alpha[k], "max-mixture")?;
    let dominant = &components[k];
    let n = dominant.error.len();
    let ncols = dominant.jacobian.ncols();

    let mut error = DVector::zeros(n + 1);
    error[0] = head;
    error.rows_mut(1, n).copy_from(&dominant.error);
    let mut jacobian = DMatrix::zeros(n + 1, ncols);
    jacobian.rows_mut(1, n).copy_from(&dominant.jacobian);

    Ok(FactorLinearization {
        loss: 0.5 * error.norm_squared(),
        error,
        jacobian,
        hessian: None,
        dominant_index: Some(k),
        offset: p.max_log_alpha,
        clamped,
    })
}

pub fn evaluate_sum_mixture(components: &[ComponentEval]) -> Result<FactorLinearization> {
    let p = prepare(components)?;
    // c = sum_k alpha_k
    let log_c = log_sum_exp(&p.scaled_log_alpha);
    let arg = 2.0 * (log_c - log_sum_exp(&p.exponents));
    let (e_sm, clamped) = checked_sqrt(arg, "sum-mixture")?;
    let weights = softmax(&p.exponents);
    let grad = weighted_gradient_row(components, &weights);
    let jacobian = if e_sm > 0.0 {
        grad / e_sm
    } else {
        DMatrix::zeros(1, grad.ncols())
    };
    let error = DVector::from_element(1, e_sm);
    Ok(FactorLinearization {
        loss: 0.5 * e_sm * e_sm,
        error,
        jacobian,
        hessian: None,
        dominant_index: None,
        offset: log_c + p.max_log_alpha,
        clamped,
    })
}

pub fn evaluate_max_sum_mixture(
    components: &[ComponentEval],
    delta: f64,
) -> Result<FactorLinearization> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "max-sum-mixture damping must be positive, got {delta}"
        )));
    }
    let p = prepare(components)?;
    let k = argmax(&p.exponents);
    let n_k = components.len() as f64;
    let a_star = p.scaled_log_alpha[k];
    let f_star = p.half_norms[k];

    // c = n_k max_j (alpha_j / alpha_k*) + delta; the max over j is alpha = 1 after rescaling.
    let log_c = (n_k * (-a_star).exp() + delta).ln();
    let shifted: Vec<f64> = p.exponents.iter().map(|e| e - a_star + f_star).collect();
    let arg = 2.0 * (log_c - log_sum_exp(&shifted));
    let (e_nl, clamped) = checked_sqrt(arg, "max-sum-mixture")?;

    let weights = softmax(&p.exponents);
    let dominant = &components[k];
    let dominant_row = dominant.error.transpose() * &dominant.jacobian;
    let mut nl_row = weighted_gradient_row(components, &weights);
    if e_nl > 0.0 {
        nl_row -= &dominant_row;
        nl_row /= e_nl;
    } else {
        nl_row.fill(0.0);
    }

    let n = dominant.error.len();
    let mut error = DVector::zeros(n + 1);
    error.rows_mut(0, n).copy_from(&dominant.error);
    error[n] = e_nl;
    let mut jacobian = DMatrix::zeros(n + 1, dominant.jacobian.ncols());
    jacobian.rows_mut(0, n).copy_from(&dominant.jacobian);
    jacobian.row_mut(n).copy_from(&nl_row);

    Ok(FactorLinearization {
        loss: 0.5 * error.norm_squared(),
        error,
        jacobian,
        hessian: None,
        dominant_index: Some(k),
        offset: log_c + a_star + p.max_log_alpha,
        clamped,
    })
}

/// Softmin weights `d rho / d f_k = alpha_k e^-f_k / sum_i alpha_i e^-f_i`.
pub fn hsm_weights(components: &[ComponentEval]) -> Result<Vec<f64>> {
    Ok(softmax(&prepare(components)?.exponents))
}

/// `sum_k w_k J_k^T J_k`.
pub fn hsm_hessian(components: &[ComponentEval]) -> Result<DMatrix<f64>> {
    let weights = hsm_weights(components)?;
    Ok(weighted_gauss_newton(components, &weights))
}

fn weighted_gauss_newton(components: &[ComponentEval], weights: &[f64]) -> DMatrix<f64> {
    let n = components[0].jacobian.ncols();
    let mut h = DMatrix::zeros(n, n);
    for (c, w) in components.iter().zip(weights) {
        h += (c.jacobian.transpose() * &c.jacobian) * *w;
    }
    h
}

/// Log of the Hessian-Sum-Mixture normalisation constant for the given `log alpha_k`:
/// `log sum_k alpha_k exp(sum_j alpha_j / alpha_k)`.
pub fn hsm_normalization_constant_log_alpha(log_alphas: &[f64]) -> Result<f64> {
    if log_alphas.is_empty() {
        return Err(Error::EmptyMixture);
    }
    if log_alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidParameter(
            "alpha must be positive and finite".into(),
        ));
    }
    let terms: Vec<f64> = log_alphas
        .iter()
        .map(|ak| ak + log_alphas.iter().map(|aj| (aj - ak).exp()).sum::<f64>())
        .collect();
    Ok(log_sum_exp(&terms))
}

/// `c_HSM = log sum_k alpha_k exp(sum_j alpha_j / alpha_k)`, the negated lower
/// bound of `Delta J`.
pub fn hsm_normalization_constant(alphas: &[f64]) -> Result<f64> {
    if alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    let logs: Vec<f64> = alphas.iter().map(|a| a.ln()).collect();
    hsm_normalization_constant_log_alpha(&logs)
}

/// `Delta J = J_GMM - 1/2 |e_solver,1|^2`, on the caller's (unscaled) weights.
pub fn hsm_delta_j(components: &[ComponentEval]) -> Result<f64> {
    let p = prepare(components)?;
    let weights = softmax(&p.exponents);
    let weighted: f64 = weights.iter().zip(&p.half_norms).map(|(w, f)| w * f).sum();
    Ok(-log_sum_exp(&p.exponents) - p.max_log_alpha - weighted)
}

pub fn evaluate_hsm(components: &[ComponentEval]) -> Result<FactorLinearization> {
    let p = prepare(components)?;
    let weights = softmax(&p.exponents);
    let ncols = components[0].jacobian.ncols();
    let rows: usize = components.iter().map(|c| c.error.len()).sum();

    let mut error = DVector::zeros(rows + 1);
    let mut jacobian = DMatrix::zeros(rows + 1, ncols);
    let mut offset = 0;
    for (c, w) in components.iter().zip(&weights) {
        let s = w.sqrt();
        let n = c.error.len();
        error.rows_mut(offset, n).copy_from(&(&c.error * s));
        jacobian.rows_mut(offset, n).copy_from(&(&c.jacobian * s));
        offset += n;
    }

    let weighted: f64 = weights.iter().zip(&p.half_norms).map(|(w, f)| w * f).sum();
    let delta_j = -log_sum_exp(&p.exponents) - weighted;
    let c_hsm = hsm_normalization_constant_log_alpha(&p.scaled_log_alpha)?;
    let (tail, clamped) = checked_sqrt(2.0 * (c_hsm + delta_j), "hessian-sum-mixture")?;
    error[rows] = tail;

    Ok(FactorLinearization {
        loss: 0.5 * error.norm_squared(),
        error,
        jacobian,
        hessian: Some(weighted_gauss_newton(components, &weights)),
        dominant_index: Some(argmax(&p.exponents)),
        offset: c_hsm + p.max_log_alpha,
        clamped,
    })
}

/// Dispatch to the formulation selected by `method`.
pub fn evaluate(
    method: Method,
    options: &FormulationOptions,
    components: &[ComponentEval],
) -> Result<FactorLinearization> {
    match method {
        Method::MaxMixture => evaluate_max_mixture(components),
        Method::SumMixture => evaluate_sum_mixture(components),
        Method::MaxSumMixture => evaluate_max_sum_mixture(components, options.msm_delta),
        Method::HessianSumMixture => evaluate_hsm(components),
    }
}

/// A validated Gaussian mixture likelihood over some stacked state.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<NormalizedComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyMixture);
        }
        let components = components
            .iter()
            .map(normalize_component)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }

    /// Mixture over a single `R^n` variable with `eta(x) = x`.
    pub fn euclidean(
        weights: &[f64],
        means: &[DVector<f64>],
        covariances: &[DMatrix<f64>],
    ) -> Result<Self> {
        if weights.len() != means.len() || weights.len() != covariances.len() {
            return Err(Error::InvalidParameter(
                "weights, means and covariances must have equal length".into(),
            ));
        }
        let error: Arc<dyn ComponentError> = Arc::new(IdentityError);
        Self::new(
            weights
                .iter()
                .zip(means)
                .zip(covariances)
                .map(|((w, m), r)| GaussianComponent::new(*w, m.clone(), r.clone(), error.clone()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[NormalizedComponent] {
        &self.components
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.alpha).collect()
    }

    pub fn evaluate_components(&self, state: &[ManifoldElement]) -> Result<Vec<ComponentEval>> {
        self.components.iter().map(|c| c.evaluate(state)).collect()
    }

    pub fn nll(&self, state: &[ManifoldElement]) -> Result<f64> {
        gmm_nll(&self.evaluate_components(state)?)
    }

    pub fn dominant_index(&self, state: &[ManifoldElement]) -> Result<usize> {
        dominant_index(&self.evaluate_components(state)?)
    }

    pub fn linearize(
        &self,
        method: Method,
        options: &FormulationOptions,
        state: &[ManifoldElement],
    ) -> Result<FactorLinearization> {
        evaluate(method, options, &self.evaluate_components(state)?)
    }
}

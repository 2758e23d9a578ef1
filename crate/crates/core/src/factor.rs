use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::ManifoldElement;
use crate::mixture::{
    sqrt_information, ComponentError, FactorLinearization, FormulationOptions, GaussianMixture,
    Method,
};

/// A term of the least-squares objective.
///
/// `linearize` receives the variables listed by `keys`, in that order, and
/// returns a Jacobian whose columns follow the same stacked tangent layout.
pub trait Factor: Send + Sync {
    fn keys(&self) -> &[usize];
    fn linearize(&self, state: &[ManifoldElement]) -> Result<FactorLinearization>;
}

/// Unimodal Gaussian factor `e = L (eta(x) - mu)`.
#[derive(Clone)]
pub struct GaussianFactor {
    keys: Vec<usize>,
    mean: DVector<f64>,
    sqrt_info: DMatrix<f64>,
    error: Arc<dyn ComponentError>,
}

impl fmt::Debug for GaussianFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianFactor")
            .field("keys", &self.keys)
            .field("mean", &self.mean)
            .finish_non_exhaustive()
    }
}

impl GaussianFactor {
    pub fn new(
        keys: Vec<usize>,
        mean: DVector<f64>,
        covariance: &DMatrix<f64>,
        error: Arc<dyn ComponentError>,
    ) -> Result<Self> {
        if mean.len() != covariance.nrows() {
            return Err(Error::DimensionMismatch {
                expected: covariance.nrows(),
                found: mean.len(),
            });
        }
        let (sqrt_info, _) = sqrt_information(covariance)?;
        Ok(Self {
            keys,
            mean,
            sqrt_info,
            error,
        })
    }
}

impl Factor for GaussianFactor {
    fn keys(&self) -> &[usize] {
        &self.keys
    }

    fn linearize(&self, state: &[ManifoldElement]) -> Result<FactorLinearization> {
        let (eta, jac) = self.error.evaluate(state)?;
        if eta.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: eta.len(),
            });
        }
        Ok(FactorLinearization::gaussian(
            &self.sqrt_info * (eta - &self.mean),
            &self.sqrt_info * jac,
        ))
    }
}

/// A Gaussian-mixture likelihood linearized with one of the four formulations.
#[derive(Debug, Clone)]
pub struct MixtureFactor {
    keys: Vec<usize>,
    mixture: GaussianMixture,
    method: Method,
    options: FormulationOptions,
}

impl MixtureFactor {
    pub fn new(
        keys: Vec<usize>,
        mixture: GaussianMixture,
        method: Method,
        options: FormulationOptions,
    ) -> Self {
        Self {
            keys,
            mixture,
            method,
            options,
        }
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.mixture
    }

    pub fn method(&self) -> Method {
        self.method
    }
}

impl Factor for MixtureFactor {
    fn keys(&self) -> &[usize] {
        &self.keys
    }

    fn linearize(&self, state: &[ManifoldElement]) -> Result<FactorLinearization> {
        self.mixture.linearize(self.method, &self.options, state)
    }
}

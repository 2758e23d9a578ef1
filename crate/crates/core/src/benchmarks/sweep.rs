//! Hessian accuracy of each formulation along a 1D mixture.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::ManifoldElement;
use crate::mixture::{FormulationOptions, GaussianMixture, Method};
use crate::numdiff::{fd_hessian, DiffConfig};

/// Scalar Gaussian mixture `sum_k w_k N(x; mu_k, var_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture1d {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Mixture1d {
    /// Two zero-mean components with standard deviations 1 and 3 and equal weights.
    pub fn two_scale() -> Self {
        Self {
            weights: vec![0.5, 0.5],
            means: vec![0.0, 0.0],
            variances: vec![1.0, 9.0],
        }
    }

    /// `-log p(x)` straight from the densities.
    pub fn exact_nll(&self, x: f64) -> f64 {
        let p: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| {
                w * (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
            })
            .sum();
        -p.ln()
    }

    pub fn to_mixture(&self) -> Result<GaussianMixture> {
        if self.weights.len() != self.means.len() || self.weights.len() != self.variances.len() {
            return Err(Error::InvalidParameter(
                "mixture vectors differ in length".into(),
            ));
        }
        let means: Vec<DVector<f64>> = self.means.iter().map(|m| dvector![*m]).collect();
        let covs: Vec<DMatrix<f64>> = self.variances.iter().map(|v| dmatrix![*v]).collect();
        GaussianMixture::euclidean(&self.weights, &means, &covs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub h_exact: f64,
    pub h_mm: f64,
    pub h_sm: f64,
    pub h_msm: f64,
    pub h_hsm: f64,
}

impl SweepRow {
    pub fn method(&self, method: Method) -> f64 {
        match method {
            Method::MaxMixture => self.h_mm,
            Method::SumMixture => self.h_sm,
            Method::MaxSumMixture => self.h_msm,
            Method::HessianSumMixture => self.h_hsm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianSweep {
    pub rows: Vec<SweepRow>,
    /// Trapezoid-rule integral of `|H_method - H_exact|` over the sweep, in `Method::ALL` order.
    pub deviation: Vec<(Method, f64)>,
}

impl HessianSweep {
    pub fn deviation(&self, method: Method) -> f64 {
        self.deviation
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, d)| *d)
            .expect("all methods are swept")
    }
}

/// The Hessian each formulation hands to the solver at `x`.
pub fn method_hessian(
    mixture: &GaussianMixture,
    method: Method,
    options: &FormulationOptions,
    x: f64,
) -> Result<f64> {
    let lin = mixture.linearize(method, options, &[ManifoldElement::real(&[x])])?;
    Ok(lin.implied_hessian()[(0, 0)])
}

/// Sample `n_samples` evenly spaced points of `range` and compare every
/// formulation's Hessian against a finite-difference Hessian of the exact NLL.
pub fn hessian_sweep_1d(
    mixture: &Mixture1d,
    range: (f64, f64),
    n_samples: usize,
    options: &FormulationOptions,
) -> Result<HessianSweep> {
    if n_samples < 2 || !(range.0 < range.1) {
        return Err(Error::InvalidParameter(
            "sweep needs at least two samples over a non-empty range".into(),
        ));
    }
    let gmm = mixture.to_mixture()?;
    let step = (range.1 - range.0) / (n_samples - 1) as f64;
    let cfg = DiffConfig::hessian();
    let rows = (0..n_samples)
        .map(|i| {
            let x = range.0 + step * i as f64;
            let h_exact = fd_hessian(
                |s: &DVector<f64>| Ok(mixture.exact_nll(s[0])),
                &dvector![x],
                &cfg,
            )?[(0, 0)];
            let h = |m| method_hessian(&gmm, m, options, x);
            Ok(SweepRow {
                x,
                h_exact,
                h_mm: h(Method::MaxMixture)?,
                h_sm: h(Method::SumMixture)?,
                h_msm: h(Method::MaxSumMixture)?,
                h_hsm: h(Method::HessianSumMixture)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let deviation = Method::ALL
        .iter()
        .map(|m| {
            let d: f64 = rows
                .windows(2)
                .map(|w| {
                    let a = (w[0].method(*m) - w[0].h_exact).abs();
                    let b = (w[1].method(*m) - w[1].h_exact).abs();
                    0.5 * (a + b) * (w[1].x - w[0].x)
                })
                .sum();
            (*m, d)
        })
        .collect();
    Ok(HessianSweep { rows, deviation })
}

//! Reference computations shared by the integration tests. Nothing here goes
//! through the formulation code under test.
#![allow(dead_code)]

use gmm_nls::benchmarks::stream_rng;
use gmm_nls::GaussianMixture;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Plain description of a Euclidean mixture.
#[derive(Debug, Clone)]
pub struct RawMixture {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl RawMixture {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn build(&self) -> GaussianMixture {
        GaussianMixture::euclidean(&self.weights, &self.means, &self.covs).unwrap()
    }

    /// `log(w_k det(R_k)^-1/2) - 1/2 (x - mu)^T R^-1 (x - mu)` for each component.
    pub fn log_terms(&self, x: &DVector<f64>) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.covs)
            .map(|((w, m), r)| {
                let d = x - m;
                let inv = r.clone().try_inverse().unwrap();
                w.ln() - 0.5 * r.determinant().ln() - 0.5 * d.dot(&(inv * &d))
            })
            .collect()
    }

    /// `-log sum_k w_k det(R_k)^-1/2 exp(-1/2 |x - mu_k|^2_R)`; the `2 pi` factor is dropped.
    pub fn nll(&self, x: &DVector<f64>) -> f64 {
        let t = self.log_terms(x);
        let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        -(max + t.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
    }

    /// Negative log of the largest weighted component.
    pub fn max_nll(&self, x: &DVector<f64>) -> f64 {
        -self
            .log_terms(x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest weighted component, lowest index on ties.
    pub fn dominant(&self, x: &DVector<f64>) -> usize {
        let t = self.log_terms(x);
        let mut best = 0;
        for i in 1..t.len() {
            if t[i] > t[best] {
                best = i;
            }
        }
        best
    }

    /// `log alpha_k` with `alpha_k = w_k det(R_k)^-1/2`.
    pub fn log_alphas(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.covs)
            .map(|(w, r)| w.ln() - 0.5 * r.determinant().ln())
            .collect()
    }
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * rng.random_range(0.1..1.0)
}

pub fn random_mixture(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> RawMixture {
    let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    RawMixture {
        weights,
        means: (0..k)
            .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0)))
            .collect(),
        covs: (0..k).map(|_| random_spd(rng, dim)).collect(),
    }
}

pub fn random_point(rng: &mut ChaCha8Rng, dim: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.random_range(-half_width..half_width))
}

pub fn rng(stream: u64) -> ChaCha8Rng {
    stream_rng(0x5eed, stream)
}

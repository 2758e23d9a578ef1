//! Fast invariant checks that can be run from the command line on any build.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::stream_rng;
use crate::error::Result;
use crate::lie::{ManifoldElement, ManifoldKind};
use crate::mixture::{
    evaluate, gmm_nll, hsm_delta_j, hsm_normalization_constant_log_alpha, max_mixture_nll,
    ComponentEval, FormulationOptions, Method,
};
use crate::numdiff::{fd_gradient, DiffConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest violation seen.
    pub worst: f64,
    pub tolerance: f64,
}

fn random_components<R: Rng>(
    rng: &mut R,
    k: usize,
    dim: usize,
    x: &DVector<f64>,
) -> Vec<ComponentEval> {
    (0..k)
        .map(|_| {
            let mean = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
            let l = DMatrix::from_fn(dim, dim, |i, j| {
                if i == j {
                    rng.random_range(0.5..2.0)
                } else if i > j {
                    rng.random_range(-0.3..0.3)
                } else {
                    0.0
                }
            });
            ComponentEval {
                log_alpha: rng.random_range(-3.0..1.0),
                error: &l * (x - mean),
                jacobian: l,
            }
        })
        .collect()
}

fn check(name: &str, worst: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: worst <= tolerance,
        worst,
        tolerance,
    }
}

/// Run every check with `samples` random draws each.
pub fn run_selftest(seed: u64, samples: usize) -> Result<Vec<CheckResult>> {
    let mut rng = stream_rng(seed, 0);
    let opts = FormulationOptions::default();
    let mut results = Vec::new();

    let mut worst_roundtrip: f64 = 0.0;
    for kind in [
        ManifoldKind::SO2,
        ManifoldKind::SE2,
        ManifoldKind::SO3,
        ManifoldKind::SE3,
    ] {
        let n_rot = kind.rotation_dim();
        for _ in 0..samples {
            let xi = DVector::from_fn(kind.tangent_dim(), |i, _| {
                if i < n_rot {
                    rng.random_range(-3.0..3.0) / (n_rot as f64).sqrt()
                } else {
                    rng.random_range(-5.0..5.0)
                }
            });
            let back = ManifoldElement::exp(kind, &xi)?.log()?;
            worst_roundtrip = worst_roundtrip.max((back - &xi).amax());
        }
    }
    results.push(check("lie log(exp(xi)) = xi", worst_roundtrip, 1e-9));

    let mut worst_offset: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    let mut min_tail = f64::INFINITY;
    for _ in 0..samples {
        let k = rng.random_range(1..5);
        let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let comps = random_components(&mut rng, k, 2, &x);
        let exact = gmm_nll(&comps)?;
        for method in Method::ALL {
            let lin = evaluate(method, &opts, &comps)?;
            let reference = if method == Method::MaxMixture {
                max_mixture_nll(&comps)?
            } else {
                exact
            };
            worst_offset = worst_offset.max((lin.loss - lin.offset - reference).abs());
        }

        let seeds: Vec<(f64, DVector<f64>, DMatrix<f64>)> = comps
            .iter()
            .map(|c| {
                let mean = &x - c.jacobian.clone().try_inverse().expect("triangular") * &c.error;
                (c.log_alpha, mean, c.jacobian.clone())
            })
            .collect();
        let at = |y: &DVector<f64>| -> Vec<ComponentEval> {
            seeds
                .iter()
                .map(|(a, m, l)| ComponentEval {
                    log_alpha: *a,
                    error: l * (y - m),
                    jacobian: l.clone(),
                })
                .collect()
        };
        let hsm = evaluate(Method::HessianSumMixture, &opts, &comps)?;
        let fd = fd_gradient(
            |y: &DVector<f64>| gmm_nll(&at(y)),
            &x,
            &DiffConfig::default(),
        )?;
        worst_grad = worst_grad.max((hsm.gradient() - fd).amax());

        let logs: Vec<f64> = comps.iter().map(|c| c.log_alpha).collect();
        min_tail =
            min_tail.min(hsm_delta_j(&comps)? + hsm_normalization_constant_log_alpha(&logs)?);
    }
    results.push(check("loss - offset = mixture NLL", worst_offset, 1e-9));
    results.push(check("HSM J^T e = NLL gradient", worst_grad, 1e-6));
    results.push(check("Delta J + c >= 0", (-min_tail).max(0.0), 0.0));
    Ok(results)
}

mod common;

use common::{random_mixture, random_point, rng, RawMixture};
use gmm_nls::lie::ManifoldElement;
use gmm_nls::mixture::{hsm_weights, ComponentEval};
use gmm_nls::numdiff::{fd_gradient, fd_hessian, fd_jacobian, DiffConfig};
use gmm_nls::solver::newton_step;
use gmm_nls::{FormulationOptions, GaussianMixture, Method};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn state(x: &DVector<f64>) -> Vec<ManifoldElement> {
    vec![ManifoldElement::RealVector(x.clone())]
}

fn lin(g: &GaussianMixture, m: Method, x: &DVector<f64>) -> gmm_nls::FactorLinearization {
    g.linearize(m, &FormulationOptions::default(), &state(x))
        .unwrap()
}

fn case(seed: u64, k: usize, dim: usize) -> (RawMixture, DVector<f64>) {
    let mut r = rng(seed);
    let mix = random_mixture(&mut r, k, dim);
    let x = random_point(&mut r, dim, 4.0);
    (mix, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn loss_is_half_squared_error(seed in any::<u64>(), k in 1usize..5, dim in 1usize..4) {
        let (mix, x) = case(seed, k, dim);
        let g = mix.build();
        for m in Method::ALL {
            let l = lin(&g, m, &x);
            prop_assert!((l.loss - 0.5 * l.error.norm_squared()).abs() <= 1e-9 * l.loss.abs().max(1.0));
        }
    }

    #[test]
    fn losses_track_the_exact_nll_up_to_a_constant(seed in any::<u64>(), k in 1usize..5, dim in 1usize..4) {
        let (mix, x) = case(seed, k, dim);
        let g = mix.build();
        let mut r = rng(seed ^ 1);
        let y = &x + random_point(&mut r, dim, 0.5);
        let exact = mix.nll(&y) - mix.nll(&x);
        for m in [Method::SumMixture, Method::MaxSumMixture, Method::HessianSumMixture] {
            let (a, b) = (lin(&g, m, &x), lin(&g, m, &y));
            let d = (b.loss - b.offset) - (a.loss - a.offset);
            prop_assert!((d - exact).abs() < 1e-9 * exact.abs().max(1.0), "{m}: {d} vs {exact}");
        }
        if mix.dominant(&x) == mix.dominant(&y) {
            let (a, b) = (lin(&g, Method::MaxMixture, &x), lin(&g, Method::MaxMixture, &y));
            let expected = mix.max_nll(&y) - mix.max_nll(&x);
            prop_assert!(((b.loss - a.loss) - expected).abs() < 1e-9 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn hsm_weights_are_scale_invariant(seed in any::<u64>(), k in 1usize..6, log_s in -20.0f64..20.0) {
        let (mix, x) = case(seed, k, 2);
        let comps = mix.build().evaluate_components(&state(&x)).unwrap();
        let scaled: Vec<ComponentEval> = comps
            .iter()
            .map(|c| ComponentEval { log_alpha: c.log_alpha + log_s, ..c.clone() })
            .collect();
        let w = hsm_weights(&comps).unwrap();
        let ws = hsm_weights(&scaled).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let step = |c: &[ComponentEval]| {
            let l = gmm_nls::mixture::evaluate_hsm(c).unwrap();
            newton_step(&l.gradient(), l.hessian.as_ref().unwrap()).unwrap()
        };
        prop_assert!((step(&comps) - step(&scaled)).amax() < 1e-9);
    }

    #[test]
    fn jacobians_match_finite_differences(seed in any::<u64>(), k in 1usize..5, dim in 1usize..4) {
        let (mix, x) = case(seed, k, dim);
        let g = mix.build();
        let cfg = DiffConfig::default();
        for m in [Method::MaxMixture, Method::SumMixture, Method::MaxSumMixture] {
            let l = lin(&g, m, &x);
            // The error vector is only smooth while its square roots stay away from zero.
            if l.error.iter().any(|e| e.abs() < 1e-3) && m != Method::MaxMixture {
                continue;
            }
            let k0 = l.dominant_index;
            let fd = fd_jacobian(
                |s: &DVector<f64>| {
                    let ls = lin(&g, m, s);
                    if ls.dominant_index != k0 {
                        return Err(gmm_nls::Error::InvalidParameter("dominant switched".into()));
                    }
                    Ok(ls.error)
                },
                &x,
                &cfg,
            );
            if let Ok(fd) = fd {
                let scale = l.jacobian.amax().max(1.0);
                prop_assert!((fd - &l.jacobian).amax() < 1e-6 * scale, "{m}");
            }
        }
        // HSM's Jacobian is engineered; only J^T e is meaningful.
        let h = lin(&g, Method::HessianSumMixture, &x);
        let grad = fd_gradient(|s: &DVector<f64>| Ok(mix.nll(s)), &x, &cfg).unwrap();
        prop_assert!((h.gradient() - &grad).amax() < 1e-6 * grad.amax().max(1.0));
    }

    #[test]
    fn sum_mixture_hessian_is_rank_one(seed in any::<u64>(), k in 1usize..5, dim in 2usize..5) {
        let (mix, x) = case(seed, k, dim);
        let h = lin(&mix.build(), Method::SumMixture, &x).implied_hessian();
        let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert!(sv[1] <= 1e-10 * sv[0].max(f64::MIN_POSITIVE));
    }

    #[test]
    fn single_component_hsm_step_is_gauss_newton(seed in any::<u64>(), dim in 1usize..5) {
        let (mix, x) = case(seed, 1, dim);
        let g = mix.build();
        let comps = g.evaluate_components(&state(&x)).unwrap();
        let (e, j) = (&comps[0].error, &comps[0].jacobian);
        let gn = newton_step(&(j.transpose() * e), &(j.transpose() * j)).unwrap();
        let l = lin(&g, Method::HessianSumMixture, &x);
        let hsm = newton_step(&l.gradient(), l.hessian.as_ref().unwrap()).unwrap();
        prop_assert!((hsm - &gn).amax() < 1e-12 * gn.amax().max(1.0));
    }
}

/// Exact NLL Hessian from the two-term chain rule, in 1D:
/// `J'' = sum_k p_k (J_k^2 - (J_k e_k)^2) + (sum_k p_k J_k e_k)^2` for `e_k = (x - mu_k)/sigma_k`.
fn analytic_hessian_1d(mix: &RawMixture, x: f64) -> f64 {
    let xv = DVector::from_element(1, x);
    let t = mix.log_terms(&xv);
    let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let p: Vec<f64> = t.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = p.iter().sum();
    let mut first = 0.0;
    let mut second = 0.0;
    for ((pk, m), r) in p.iter().zip(&mix.means).zip(&mix.covs) {
        let w = pk / total;
        let jk = 1.0 / r[(0, 0)].sqrt();
        let g = jk * (x - m[0]) * jk;
        first += w * g;
        second += w * (jk * jk - g * g);
    }
    second + first * first
}

#[test]
fn finite_difference_hessian_matches_the_chain_rule() {
    for seed in 0..50 {
        let (mix, x) = case(seed, 3, 1);
        let fd = fd_hessian(
            |s: &DVector<f64>| Ok(mix.nll(s)),
            &x,
            &DiffConfig::hessian(),
        )
        .unwrap();
        let exact = analytic_hessian_1d(&mix, x[0]);
        assert!(
            (fd[(0, 0)] - exact).abs() < 1e-4 * exact.abs().max(1.0),
            "{seed}: {} vs {exact}",
            fd[(0, 0)]
        );
    }
}

#[test]
fn hsm_gn_product_equals_weighted_component_hessians() {
    for seed in 0..100 {
        let (mix, x) = case(seed, 4, 3);
        let g = mix.build();
        let comps = g.evaluate_components(&state(&x)).unwrap();
        let w = hsm_weights(&comps).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        for (c, wk) in comps.iter().zip(&w) {
            expected += c.jacobian.transpose() * &c.jacobian * *wk;
        }
        let l = lin(&g, Method::HessianSumMixture, &x);
        let jtj = l.jacobian.transpose() * &l.jacobian;
        assert!((jtj - &expected).amax() < 1e-12 * expected.amax().max(1.0));
    }
}

#[test]
fn far_from_the_means_every_hessian_is_the_dominant_one() {
    let mix = RawMixture {
        weights: vec![0.5, 0.5],
        means: vec![DVector::from_element(1, 0.0), DVector::from_element(1, 0.0)],
        covs: vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 9.0),
        ],
    };
    let g = mix.build();
    let x = DVector::from_element(1, 100.0);
    let dominant = 1.0 / 9.0;
    for m in [
        Method::MaxMixture,
        Method::MaxSumMixture,
        Method::HessianSumMixture,
    ] {
        let h = lin(&g, m, &x).implied_hessian()[(0, 0)];
        assert!(((h - dominant) / dominant).abs() < 1e-6, "{m}: {h}");
    }
}

use gmm_nls::benchmarks::{
    gen_psr_instance, nees_term, run_toy_mc, stream_rng, PsrInstance, PsrSpace, PsrSpec, ToySpec,
};
use gmm_nls::lie::ManifoldElement;
use gmm_nls::numdiff::{fd_hessian, DiffConfig};
use gmm_nls::solver::covariance_from_information;
use gmm_nls::{laplace_covariance, solve, FormulationOptions, Method, SolverConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn anees_of_consistent_errors_is_one() {
    let mut rng = stream_rng(9, 0);
    let p = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
    let l = p.clone().cholesky().unwrap().l();
    let n = 10_000;
    let mean: f64 = (0..n)
        .map(|_| {
            let z = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            nees_term(&(&l * z), &p).unwrap()
        })
        .sum::<f64>()
        / n as f64;
    assert!((0.95..=1.05).contains(&mean), "{mean}");
}

/// Per source point, the log-weighted association terms over all reference points.
fn association_terms(inst: &PsrInstance, pose: &ManifoldElement) -> Vec<Vec<f64>> {
    let ManifoldElement::SE2 {
        rotation,
        translation,
    } = pose
    else {
        panic!("planar pose expected")
    };
    let c = DMatrix::from_column_slice(2, 2, rotation.as_slice());
    let r = DVector::from_column_slice(translation.as_slice());
    let cov = &c * &inst.sigma_m * c.transpose() + &inst.sigma_f;
    let inv = cov.clone().try_inverse().unwrap();
    let log_norm = -(inst.reference.len() as f64).ln() - 0.5 * cov.determinant().ln();
    inst.source
        .iter()
        .map(|m| {
            let y = &c * m + &r;
            inst.reference
                .iter()
                .map(|p| {
                    let e = p - &y;
                    log_norm - 0.5 * e.dot(&(&inv * &e))
                })
                .collect::<Vec<f64>>()
        })
        .collect()
}

/// Exact registration NLL computed straight from the clouds.
fn psr_nll(inst: &PsrInstance, pose: &ManifoldElement) -> f64 {
    association_terms(inst, pose)
        .iter()
        .map(|terms| {
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            -(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
        })
        .sum()
}

/// Smallest over source points of the largest association probability.
fn weakest_association(inst: &PsrInstance, pose: &ManifoldElement) -> f64 {
    association_terms(inst, pose)
        .iter()
        .map(|terms| {
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            1.0 / terms.iter().map(|t| (t - max).exp()).sum::<f64>()
        })
        .fold(1.0, f64::min)
}

#[test]
fn hsm_covariance_matches_the_exact_curvature_when_associations_are_clear() {
    // Small noise keeps every point associated with a single reference point.
    let spec = PsrSpec {
        cov_eig_range: (0.001, 0.006),
        dup_fraction: 0.0,
        ..PsrSpec::desk(PsrSpace::SE2, 21)
    };
    let mut checked = 0;
    for s in 0..5 {
        let inst = gen_psr_instance(&spec, &mut stream_rng(21, s)).unwrap();
        let problem = inst
            .problem(Method::HessianSumMixture, FormulationOptions::default())
            .unwrap();
        let result = solve(&problem, problem.variables(), &SolverConfig::default()).unwrap();
        if weakest_association(&inst, &result.estimate[0]) < 0.99 {
            continue;
        }
        let cov = laplace_covariance(&result).unwrap();
        let h = fd_hessian(
            |x: &ManifoldElement| Ok(psr_nll(&inst, x)),
            &result.estimate[0],
            &DiffConfig::hessian(),
        )
        .unwrap();
        let exact = covariance_from_information(&h).unwrap();
        let rel = (&cov - &exact).norm() / exact.norm();
        assert!(rel < 0.05, "pair {s}: relative covariance error {rel}");
        checked += 1;
    }
    assert!(checked >= 3, "only {checked} pairs had clear associations");
}

#[test]
fn toy_1d_orderings_hold_on_a_small_run() {
    let spec = ToySpec {
        n_param_draws: 30,
        ..ToySpec::desk(1, 77)
    };
    let report = run_toy_mc(
        &spec,
        &Method::ALL,
        FormulationOptions::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    let a = |m| report.aggregate(m).unwrap();
    assert!(a(Method::HessianSumMixture).success_rate.unwrap() >= 0.95);
    assert!(a(Method::MaxMixture).success_rate.unwrap() < 0.5);
    assert!(a(Method::HessianSumMixture).avg_iterations < a(Method::MaxSumMixture).avg_iterations);
    for agg in &report.aggregates {
        assert!(agg.avg_iterations <= 200.0);
        assert_eq!(agg.trials, 30 * 100);
    }
}

#[test]
fn toy_study_is_reproducible() {
    let spec = ToySpec {
        n_param_draws: 4,
        ..ToySpec::desk(1, 5)
    };
    let run = || {
        run_toy_mc(
            &spec,
            &Method::ALL,
            FormulationOptions::default(),
            &SolverConfig::default(),
        )
        .unwrap()
        .records
        .into_iter()
        .map(|r| (r.trial_id, r.method, r.iterations, r.rmse.map(f64::to_bits)))
        .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

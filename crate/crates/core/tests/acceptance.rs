//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use common::{random_mixture, random_point, rng, RawMixture};
use gmm_nls::benchmarks::{
    hessian_sweep_1d, run_psr_mc, run_toy_mc, Mixture1d, PsrSpace, PsrSpec, StudyReport, ToySpec,
};
use gmm_nls::lie::{ManifoldElement, ManifoldKind};
use gmm_nls::mixture::{
    hsm_delta_j, hsm_normalization_constant_log_alpha, ComponentError, ComponentEval,
};
use gmm_nls::solver::{lm_solve, newton_step};
use gmm_nls::{FormulationOptions, GaussianFactor, Method, Problem, SolverConfig};
use nalgebra::{dmatrix, dvector, DVector};
use rand::Rng;

const SEED: u64 = 2024;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn st(x: &DVector<f64>) -> Vec<ManifoldElement> {
    vec![ManifoldElement::RealVector(x.clone())]
}

fn toy_orderings(report: &StudyReport, hsm_ratio: f64) -> Outcome {
    let a = |m| report.aggregate(m).unwrap();
    let succ = |m| a(m).success_rate.unwrap();
    let it = |m| a(m).avg_iterations;
    let (sm, msm, hsm, mm) = (
        Method::SumMixture,
        Method::MaxSumMixture,
        Method::HessianSumMixture,
        Method::MaxMixture,
    );
    let rates = [succ(sm), succ(msm), succ(hsm)];
    let spread = rates.iter().cloned().fold(f64::MIN, f64::max)
        - rates.iter().cloned().fold(f64::MAX, f64::min);
    let passed = spread <= 0.04
        && rates.iter().all(|r| *r >= 0.93)
        && succ(mm) <= 0.60
        && it(hsm) < it(msm)
        && it(msm) < it(sm)
        && it(hsm) <= hsm_ratio * it(msm);
    outcome(
        passed,
        format!(
            "success MM {:.1}% SM {:.1}% MSM {:.1}% HSM {:.1}%; iterations SM {:.2} MSM {:.2} HSM {:.2} (HSM/MSM {:.3}, limit {hsm_ratio})",
            100.0 * succ(mm),
            100.0 * rates[0],
            100.0 * rates[1],
            100.0 * rates[2],
            it(sm),
            it(msm),
            it(hsm),
            it(hsm) / it(msm)
        ),
    )
}

fn toy(dim: usize, hsm_ratio: f64) -> Outcome {
    let spec = ToySpec::desk(dim, SEED);
    let report = run_toy_mc(
        &spec,
        &Method::ALL,
        FormulationOptions::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    toy_orderings(&report, hsm_ratio)
}

fn psr() -> Outcome {
    let spec = PsrSpec::desk(PsrSpace::SE2, SEED);
    let report = run_psr_mc(
        &spec,
        &Method::ALL,
        FormulationOptions::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    let a = |m| report.aggregate(m).unwrap();
    let trans: Vec<f64> = [
        Method::SumMixture,
        Method::MaxSumMixture,
        Method::HessianSumMixture,
    ]
    .iter()
    .map(|m| a(*m).rmse_trans_m.unwrap())
    .collect();
    let lo = trans.iter().cloned().fold(f64::MAX, f64::min);
    let hi = trans.iter().cloned().fold(f64::MIN, f64::max);
    let anees = |m| a(m).anees.unwrap_or(f64::NAN);
    let (sm, msm, hsm) = (
        anees(Method::SumMixture),
        anees(Method::MaxSumMixture),
        anees(Method::HessianSumMixture),
    );
    let passed = hi <= 1.10 * lo && sm < 0.2 && (hsm - 1.0).abs() <= (msm - 1.0).abs();
    outcome(
        passed,
        format!(
            "trans RMSE SM {:.4} MSM {:.4} HSM {:.4} m (spread {:.1}%); ANEES SM {sm:.3} MSM {msm:.3} HSM {hsm:.3}",
            trans[0],
            trans[1],
            trans[2],
            100.0 * (hi / lo - 1.0)
        ),
    )
}

fn hessian_sweep() -> Outcome {
    let sweep = hessian_sweep_1d(
        &Mixture1d::two_scale(),
        (-5.0, 5.0),
        1001,
        &FormulationOptions::default(),
    )
    .unwrap();
    let d = |m| sweep.deviation(m);
    let (mm, sm, msm, hsm) = (
        d(Method::MaxMixture),
        d(Method::SumMixture),
        d(Method::MaxSumMixture),
        d(Method::HessianSumMixture),
    );
    outcome(
        hsm < msm && hsm < mm,
        format!("integrated |H - H_exact|: MM {mm:.4} SM {sm:.4} MSM {msm:.4} HSM {hsm:.4}"),
    )
}

fn exactness() -> Outcome {
    let opts = FormulationOptions::default();
    let mut r = rng(500);

    // (a) loss - offset against the exact NLL
    let mut worst_a: f64 = 0.0;
    for _ in 0..1000 {
        let k = r.random_range(1..6);
        let dim = r.random_range(1..4);
        let mix = random_mixture(&mut r, k, dim);
        let x = random_point(&mut r, dim, 5.0);
        let g = mix.build();
        for m in Method::ALL {
            let l = g.linearize(m, &opts, &st(&x)).unwrap();
            // Max-mixture follows the dominant component, so its reference is
            // the NLL of that component alone.
            let reference = if m == Method::MaxMixture {
                mix.max_nll(&x)
            } else {
                mix.nll(&x)
            };
            worst_a = worst_a.max((l.loss - l.offset - reference).abs() / reference.abs().max(1.0));
        }
    }

    // (b), (c), (e) on the HSM linearization
    let mut worst_b: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    for _ in 0..1000 {
        let k = r.random_range(1..6);
        let dim = r.random_range(1..4);
        let mix = random_mixture(&mut r, k, dim);
        let x = random_point(&mut r, dim, 5.0);
        let l = mix
            .build()
            .linearize(Method::HessianSumMixture, &opts, &st(&x))
            .unwrap();
        let fd = gmm_nls::numdiff::fd_gradient(
            |s: &DVector<f64>| Ok(mix.nll(s)),
            &x,
            &gmm_nls::numdiff::DiffConfig::default(),
        )
        .unwrap();
        worst_b = worst_b.max((l.gradient() - &fd).amax() / fd.amax().max(1.0));
        let h = l.hessian.clone().unwrap();
        let jtj = l.jacobian.transpose() * &l.jacobian;
        worst_c = worst_c.max((jtj - &h).amax() / h.amax().max(1.0));
        let c_hsm = hsm_normalization_constant_log_alpha(&mix.log_alphas()).unwrap();
        let target = mix.nll(&x) + c_hsm;
        worst_e =
            worst_e.max((0.5 * l.error.norm_squared() - target).abs() / target.abs().max(1.0));
    }

    // (d) Delta J + c_HSM >= 0, with Delta J also rebuilt from its softmin form
    let mut min_tail = f64::INFINITY;
    let mut worst_form: f64 = 0.0;
    for _ in 0..10_000 {
        let k = r.random_range(1..8);
        let dim = r.random_range(1..4);
        let scale = r.random_range(0.01..10.0);
        let comps: Vec<ComponentEval> = (0..k)
            .map(|_| ComponentEval {
                log_alpha: r.random_range(-10.0..5.0),
                error: random_point(&mut r, dim, scale),
                jacobian: nalgebra::DMatrix::identity(dim, dim),
            })
            .collect();
        let logs: Vec<f64> = comps.iter().map(|c| c.log_alpha).collect();
        let dj = hsm_delta_j(&comps).unwrap();
        min_tail = min_tail.min(dj + hsm_normalization_constant_log_alpha(&logs).unwrap());

        let f: Vec<f64> = comps.iter().map(|c| 0.5 * c.error.norm_squared()).collect();
        let ex: Vec<f64> = logs.iter().zip(&f).map(|(a, fk)| a - fk).collect();
        let mx = ex.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = ex.iter().map(|e| (e - mx).exp()).sum();
        let w: Vec<f64> = ex.iter().map(|e| (e - mx).exp() / total).collect();
        let s: Vec<f64> = f
            .iter()
            .map(|fk| w.iter().zip(&f).map(|(wj, fj)| wj * (fj - fk)).sum::<f64>())
            .collect();
        let terms: Vec<f64> = logs.iter().zip(&s).map(|(a, sk)| a + sk).collect();
        let tm = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dj_form = -(tm + terms.iter().map(|t| (t - tm).exp()).sum::<f64>().ln());
        worst_form = worst_form.max((dj - dj_form).abs() / dj.abs().max(1.0));
    }

    let passed = worst_a <= 1e-9
        && worst_b <= 1e-6
        && worst_c <= 1e-12
        && min_tail >= 0.0
        && worst_e <= 1e-9
        && worst_form <= 1e-9;
    outcome(
        passed,
        format!(
            "(a) {worst_a:.1e} (b) {worst_b:.1e} (c) {worst_c:.1e} (d) min {min_tail:.3e}, form {worst_form:.1e} (e) {worst_e:.1e}"
        ),
    )
}

fn degeneracy() -> Outcome {
    let opts = FormulationOptions::default();
    let mut r = rng(600);
    let mut worst_step: f64 = 0.0;
    let mut worst_rank: f64 = 0.0;
    for _ in 0..1000 {
        let dim = r.random_range(1..5);
        let single: RawMixture = random_mixture(&mut r, 1, dim);
        let x = random_point(&mut r, dim, 4.0);
        let g = single.build();
        let comps = g.evaluate_components(&st(&x)).unwrap();
        let (e, j) = (&comps[0].error, &comps[0].jacobian);
        let gn = newton_step(&(j.transpose() * e), &(j.transpose() * j)).unwrap();
        let l = g
            .linearize(Method::HessianSumMixture, &opts, &st(&x))
            .unwrap();
        let hsm = newton_step(&l.gradient(), l.hessian.as_ref().unwrap()).unwrap();
        worst_step = worst_step.max((hsm - &gn).amax() / gn.amax().max(1.0));

        let k = r.random_range(1..5);
        let mix = random_mixture(&mut r, k, 2);
        let y = random_point(&mut r, 2, 4.0);
        let h = mix
            .build()
            .linearize(Method::SumMixture, &opts, &st(&y))
            .unwrap()
            .implied_hessian();
        let sv = h.singular_values();
        let (big, small) = (sv.max(), sv.min());
        if big > 0.0 {
            worst_rank = worst_rank.max(small / big);
        }
    }

    let square: Arc<dyn ComponentError> = Arc::new(|s: &[ManifoldElement]| {
        let x = s[0].as_vector().unwrap()[0];
        Ok((dvector![x * x], dmatrix![2.0 * x]))
    });
    let mut p = Problem::new(vec![ManifoldElement::real(&[0.0])]);
    p.add_factor(Box::new(
        GaussianFactor::new(vec![0], dvector![0.0], &dmatrix![1.0], square).unwrap(),
    ))
    .unwrap();
    let init = [ManifoldElement::real(&[1.0])];
    let by_tol = lm_solve(&p, &init, &SolverConfig::default()).unwrap();
    let capped = lm_solve(
        &p,
        &init,
        &SolverConfig {
            step_tol: 1e-300,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let short = lm_solve(
        &p,
        &init,
        &SolverConfig {
            max_iters: 17,
            step_tol: 1e-300,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let lm_ok = by_tol.converged
        && by_tol.iterations < 200
        && !capped.converged
        && capped.iterations == 200
        && short.iterations == 17;

    outcome(
        worst_step <= 1e-12 && worst_rank < 1e-10 && lm_ok,
        format!(
            "K=1 step {worst_step:.1e}; SM sigma2/sigma1 {worst_rank:.1e}; LM stops at tol after {} iters, at cap after {} (cap 200) and {} (cap 17)",
            by_tol.iterations, capped.iterations, short.iterations
        ),
    )
}

fn lie() -> Outcome {
    let mut r = rng(700);
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for kind in [
        ManifoldKind::SO2,
        ManifoldKind::SE2,
        ManifoldKind::SO3,
        ManifoldKind::SE3,
    ] {
        let n_rot = kind.rotation_dim();
        let sample = |r: &mut rand_chacha::ChaCha8Rng| {
            let mut phi = random_point(r, n_rot, 1.0);
            let norm = phi.norm();
            let angle = r.random_range(0.0..3.0);
            if norm > 0.0 {
                phi *= angle / norm;
            }
            let rho = random_point(r, kind.tangent_dim() - n_rot, 10.0);
            DVector::from_iterator(
                kind.tangent_dim(),
                phi.iter().copied().chain(rho.iter().copied()),
            )
        };
        let mut group_worst: f64 = 0.0;
        for _ in 0..10_000 {
            let a = sample(&mut r);
            let b = sample(&mut r);
            let x = ManifoldElement::exp(kind, &a).unwrap();
            let y = ManifoldElement::exp(kind, &b).unwrap();
            group_worst = group_worst.max((x.log().unwrap() - &a).amax());
            group_worst = group_worst.max(
                ManifoldElement::exp(kind, &x.log().unwrap())
                    .unwrap()
                    .ominus(&x)
                    .unwrap()
                    .amax(),
            );
            if let Ok(d) = y.ominus(&x) {
                group_worst = group_worst.max(x.oplus(&d).unwrap().ominus(&y).unwrap().amax());
            }
            let (o1, d1) = x.compose(&y).unwrap().orthonormality_error();
            let (o2, d2) = y.inverse().orthonormality_error();
            group_worst = group_worst.max(o1).max(d1).max(o2).max(d2);
        }
        details.push(format!("{kind} {group_worst:.1e}"));
        worst = worst.max(group_worst);
    }
    outcome(
        worst <= 1e-9,
        format!("worst deviation per group: {}", details.join(", ")),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("toy 1D desk-scale orderings", || toy(1, 0.75)),
        ("toy 2D desk-scale orderings", || toy(2, 0.85)),
        ("PSR 2D desk-scale RMSE and ANEES", psr),
        ("Hessian sweep accuracy", hessian_sweep),
        ("exactness suite", exactness),
        ("degeneracy suite", degeneracy),
        ("Lie group suite", lie),
    ];
    let mut failures = 0;
    let mut out = std::io::stdout();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        failures += usize::from(!o.passed);
        writeln!(
            out,
            "criterion {} [{name}]: {tag} ({:.1} s) {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        )
        .unwrap();
        out.flush().unwrap();
    }
    writeln!(
        out,
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    )
    .unwrap();
    if failures > 0 {
        std::process::exit(1);
    }
}

//! Point-set registration study: align a noisy source cloud to a noisy
//! reference cloud with unknown point correspondences. Each source point
//! contributes one mixture factor over every reference point.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{nees_term, StudyReport, TrialRecord};
use super::stream_rng;
use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::lie::{hat3, ManifoldElement, ManifoldKind};
use crate::mixture::{
    evaluate, sqrt_information, ComponentEval, FactorLinearization, FormulationOptions, Method,
};
use crate::solver::{laplace_covariance, solve, Problem, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsrSpace {
    SE2,
    SE3,
}

impl PsrSpace {
    pub fn point_dim(self) -> usize {
        match self {
            PsrSpace::SE2 => 2,
            PsrSpace::SE3 => 3,
        }
    }

    pub fn kind(self) -> ManifoldKind {
        match self {
            PsrSpace::SE2 => ManifoldKind::SE2,
            PsrSpace::SE3 => ManifoldKind::SE3,
        }
    }

    fn rotation_kind(self) -> ManifoldKind {
        match self {
            PsrSpace::SE2 => ManifoldKind::SO2,
            PsrSpace::SE3 => ManifoldKind::SO3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrSpec {
    pub space: PsrSpace,
    pub n_landmarks: usize,
    pub landmark_box: (f64, f64),
    pub dup_fraction: f64,
    pub dup_count: usize,
    /// Isotropic variance of the duplicates around their original.
    pub dup_spread_var: f64,
    pub n_configs: usize,
    pub n_pairs: usize,
    /// Half-width of the uniform draw of each rotation coordinate (rad).
    pub rot_half_width: f64,
    /// Half-width of the uniform draw of each translation coordinate (m).
    pub trans_half_width: f64,
    /// Range of the eigenvalues of the point covariances.
    pub cov_eig_range: (f64, f64),
    /// Replace the random point covariances by `eps * I`.
    pub fixed_noise_var: Option<f64>,
    pub rng_seed: u64,
}

impl PsrSpec {
    /// 100 configurations x 100 cloud pairs.
    pub fn full(space: PsrSpace, rng_seed: u64) -> Self {
        Self {
            space,
            n_landmarks: match space {
                PsrSpace::SE2 => 15,
                PsrSpace::SE3 => 20,
            },
            landmark_box: (-5.0, 5.0),
            dup_fraction: 0.3,
            dup_count: 4,
            dup_spread_var: 0.1,
            n_configs: 100,
            n_pairs: 100,
            rot_half_width: 15.0 / 180.0,
            trans_half_width: 0.5,
            cov_eig_range: (0.1, 0.6),
            fixed_noise_var: None,
            rng_seed,
        }
    }

    /// 10 configurations x 10 cloud pairs.
    pub fn desk(space: PsrSpace, rng_seed: u64) -> Self {
        Self {
            n_configs: 10,
            n_pairs: 10,
            ..Self::full(space, rng_seed)
        }
    }

    pub fn n_duplicated(&self) -> usize {
        (self.dup_fraction * self.n_landmarks as f64).round() as usize
    }

    /// Points per cloud, duplicates included.
    pub fn n_points(&self) -> usize {
        self.n_landmarks + self.n_duplicated() * self.dup_count
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.n_landmarks == 0 {
            return bad("need at least one landmark");
        }
        if !(0.0..=1.0).contains(&self.dup_fraction) {
            return bad("duplicate fraction must lie in [0, 1]");
        }
        if !(self.landmark_box.0 < self.landmark_box.1) {
            return bad("empty landmark box");
        }
        if !(self.dup_spread_var >= 0.0)
            || !(self.rot_half_width >= 0.0)
            || !(self.trans_half_width >= 0.0)
        {
            return bad("spreads must be non-negative");
        }
        if !(self.cov_eig_range.0 > 0.0 && self.cov_eig_range.0 < self.cov_eig_range.1) {
            return bad("covariance eigenvalue range must be positive and non-empty");
        }
        if let Some(eps) = self.fixed_noise_var {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad("fixed noise variance must be positive");
            }
        }
        if self.n_configs == 0 || self.n_pairs == 0 {
            return bad("need at least one configuration and one pair");
        }
        Ok(())
    }
}

/// Landmark positions of one configuration, duplicates appended after the
/// originals.
pub fn gen_psr_config<R: Rng>(spec: &PsrSpec, rng: &mut R) -> Result<Vec<DVector<f64>>> {
    spec.validate()?;
    let n = spec.space.point_dim();
    let (lo, hi) = spec.landmark_box;
    let mut points: Vec<DVector<f64>> = (0..spec.n_landmarks)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(lo..hi)))
        .collect();
    let spread = spec.dup_spread_var.sqrt();
    for i in 0..spec.n_duplicated() {
        for _ in 0..spec.dup_count {
            let offset = DVector::from_fn(n, |_, _| spread * rng.sample::<f64, _>(StandardNormal));
            points.push(&points[i] + offset);
        }
    }
    Ok(points)
}

/// One registration problem: clouds, noise covariances and the true transform.
#[derive(Debug, Clone, PartialEq)]
pub struct PsrInstance {
    pub space: PsrSpace,
    /// `T_ts`, mapping source coordinates into the reference frame.
    pub ground_truth: ManifoldElement,
    pub source: Vec<DVector<f64>>,
    pub reference: Vec<DVector<f64>>,
    pub sigma_m: DMatrix<f64>,
    pub sigma_f: DMatrix<f64>,
}

fn random_rotation<R: Rng>(space: PsrSpace, rng: &mut R, half_width: f64) -> Result<DMatrix<f64>> {
    let kind = space.rotation_kind();
    let xi = DVector::from_fn(kind.tangent_dim(), |_, _| {
        if half_width > 0.0 {
            rng.random_range(-half_width..half_width)
        } else {
            0.0
        }
    });
    Ok(rotation_matrix(&ManifoldElement::exp(kind, &xi)?))
}

fn random_covariance<R: Rng>(spec: &PsrSpec, rng: &mut R) -> Result<DMatrix<f64>> {
    let n = spec.space.point_dim();
    if let Some(eps) = spec.fixed_noise_var {
        return Ok(DMatrix::identity(n, n) * eps);
    }
    let c = random_rotation(spec.space, rng, std::f64::consts::PI)?;
    let (lo, hi) = spec.cov_eig_range;
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(lo..hi)));
    let sigma = &c * d * c.transpose();
    Ok((&sigma + sigma.transpose()) * 0.5)
}

fn gaussian_sample<R: Rng>(covariance: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("noise covariance".into()))?;
    let z = DVector::from_fn(covariance.nrows(), |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    Ok(chol.l() * z)
}

fn rotation_matrix(x: &ManifoldElement) -> DMatrix<f64> {
    match x {
        ManifoldElement::SO2(c) | ManifoldElement::SE2 { rotation: c, .. } => {
            DMatrix::from_column_slice(2, 2, c.as_slice())
        }
        ManifoldElement::SO3(c) | ManifoldElement::SE3 { rotation: c, .. } => {
            DMatrix::from_column_slice(3, 3, c.as_slice())
        }
        ManifoldElement::RealVector(_) => unreachable!("not a rotation"),
    }
}

/// Rotation and translation of an SE(2) or SE(3) element.
fn pose_parts(x: &ManifoldElement) -> Result<(DMatrix<f64>, DVector<f64>)> {
    match x {
        ManifoldElement::SE2 {
            rotation,
            translation,
        } => Ok((
            DMatrix::from_column_slice(2, 2, rotation.as_slice()),
            DVector::from_column_slice(translation.as_slice()),
        )),
        ManifoldElement::SE3 {
            rotation,
            translation,
        } => Ok((
            DMatrix::from_column_slice(3, 3, rotation.as_slice()),
            DVector::from_column_slice(translation.as_slice()),
        )),
        other => Err(Error::KindMismatch(
            "SE2 or SE3".into(),
            other.kind().to_string(),
        )),
    }
}

/// Sample the true transform and a noisy cloud pair for the given landmarks.
pub fn gen_psr_pair<R: Rng>(
    spec: &PsrSpec,
    landmarks: &[DVector<f64>],
    rng: &mut R,
) -> Result<PsrInstance> {
    spec.validate()?;
    let kind = spec.space.kind();
    let n_rot = kind.rotation_dim();
    let xi = DVector::from_fn(kind.tangent_dim(), |i, _| {
        let w = if i < n_rot {
            spec.rot_half_width
        } else {
            spec.trans_half_width
        };
        if w > 0.0 {
            rng.random_range(-w..w)
        } else {
            0.0
        }
    });
    let ground_truth = ManifoldElement::exp(kind, &xi)?;
    let (c, r) = pose_parts(&ground_truth)?;
    let sigma_m = random_covariance(spec, rng)?;
    let sigma_f = random_covariance(spec, rng)?;
    let mut source = Vec::with_capacity(landmarks.len());
    let mut reference = Vec::with_capacity(landmarks.len());
    for l in landmarks {
        // the true source point satisfies l = C m + r
        let m = c.transpose() * (l - &r);
        source.push(m + gaussian_sample(&sigma_m, rng)?);
        reference.push(l + gaussian_sample(&sigma_f, rng)?);
    }
    Ok(PsrInstance {
        space: spec.space,
        ground_truth,
        source,
        reference,
        sigma_m,
        sigma_f,
    })
}

/// A configuration and a cloud pair drawn from the same generator.
pub fn gen_psr_instance<R: Rng>(spec: &PsrSpec, rng: &mut R) -> Result<PsrInstance> {
    let landmarks = gen_psr_config(spec, rng)?;
    gen_psr_pair(spec, &landmarks, rng)
}

impl PsrInstance {
    /// One mixture factor per source point over the single pose variable,
    /// starting from the identity transform.
    pub fn problem(&self, method: Method, options: FormulationOptions) -> Result<Problem> {
        let mut problem = Problem::new(vec![ManifoldElement::identity(self.space.kind())]);
        let log_weight = -(self.reference.len() as f64).ln();
        for m in &self.source {
            problem.add_factor(Box::new(PointRegistrationFactor {
                keys: [0],
                source: m.clone(),
                reference: self.reference.clone(),
                sigma_m: self.sigma_m.clone(),
                sigma_f: self.sigma_f.clone(),
                log_weight,
                method,
                options,
            }))?;
        }
        Ok(problem)
    }
}

/// Mixture over `e_j = p_j - C m - r` with `R = C Sigma_m C^T + Sigma_f`.
/// The covariance is rebuilt from the rotation at every linearization and
/// treated as constant while differentiating.
#[derive(Debug, Clone)]
pub struct PointRegistrationFactor {
    keys: [usize; 1],
    source: DVector<f64>,
    reference: Vec<DVector<f64>>,
    sigma_m: DMatrix<f64>,
    sigma_f: DMatrix<f64>,
    log_weight: f64,
    method: Method,
    options: FormulationOptions,
}

impl PointRegistrationFactor {
    pub fn components(&self, state: &[ManifoldElement]) -> Result<Vec<ComponentEval>> {
        let pose = state.first().ok_or(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        })?;
        let (c, r) = pose_parts(pose)?;
        let cov = &c * &self.sigma_m * c.transpose() + &self.sigma_f;
        let (sqrt_info, log_det) = sqrt_information(&((&cov + cov.transpose()) * 0.5))?;
        let log_alpha = self.log_weight - 0.5 * log_det;

        let y = &c * &self.source + &r;
        let n = y.len();
        let mut jac = DMatrix::zeros(n, pose.tangent_dim());
        if n == 2 {
            jac[(0, 0)] = y[1];
            jac[(1, 0)] = -y[0];
            jac.view_mut((0, 1), (2, 2))
                .copy_from(&(-Matrix2::identity()));
        } else {
            jac.view_mut((0, 0), (3, 3))
                .copy_from(&hat3(&Vector3::new(y[0], y[1], y[2])));
            jac.view_mut((0, 3), (3, 3))
                .copy_from(&(-Matrix3::identity()));
        }
        let jac = &sqrt_info * jac;
        Ok(self
            .reference
            .iter()
            .map(|p| ComponentEval {
                log_alpha,
                error: &sqrt_info * (p - &y),
                jacobian: jac.clone(),
            })
            .collect())
    }
}

impl Factor for PointRegistrationFactor {
    fn keys(&self) -> &[usize] {
        &self.keys
    }

    fn linearize(&self, state: &[ManifoldElement]) -> Result<FactorLinearization> {
        evaluate(self.method, &self.options, &self.components(state)?)
    }
}

fn solve_psr_trial(
    instance: &PsrInstance,
    trial_id: usize,
    method: Method,
    options: FormulationOptions,
    config: &SolverConfig,
) -> Result<TrialRecord> {
    let problem = instance.problem(method, options)?;
    let start = Instant::now();
    let outcome = solve(&problem, problem.variables(), config);
    let wall_time_s = start.elapsed().as_secs_f64();
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            log::debug!("psr trial {trial_id} ({method}) failed: {e}");
            return Ok(TrialRecord {
                trial_id,
                method,
                converged: false,
                success: None,
                iterations: 0,
                rmse: None,
                rmse_rot_deg: None,
                rmse_trans_m: None,
                anees_term: None,
                wall_time_s,
            });
        }
    };
    let err = result.estimate[0].ominus(&instance.ground_truth)?;
    let n_rot = instance.space.kind().rotation_dim();
    let rot = err.rows(0, n_rot).norm().to_degrees();
    let trans = err.rows(n_rot, err.len() - n_rot).norm();
    let anees_term = match laplace_covariance(&result).and_then(|p| nees_term(&err, &p)) {
        Ok(v) => Some(v),
        Err(Error::SingularInformation) => None,
        Err(e) => return Err(e),
    };
    Ok(TrialRecord {
        trial_id,
        method,
        converged: result.converged,
        success: None,
        iterations: result.iterations,
        rmse: Some(err.norm()),
        rmse_rot_deg: Some(rot),
        rmse_trans_m: Some(trans),
        anees_term,
        wall_time_s,
    })
}

/// RNG stream of configuration `c`; pair `p` of it uses stream `(c << 32) | (p + 1)`.
fn config_stream(config: usize) -> u64 {
    (config as u64) << 32
}

/// Monte-Carlo registration study, every method solving the same clouds.
pub fn run_psr_mc(
    spec: &PsrSpec,
    methods: &[Method],
    options: FormulationOptions,
    config: &SolverConfig,
) -> Result<StudyReport> {
    spec.validate()?;
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods selected".into()));
    }
    let landmarks = (0..spec.n_configs)
        .map(|c| gen_psr_config(spec, &mut stream_rng(spec.rng_seed, config_stream(c))))
        .collect::<Result<Vec<_>>>()?;
    let per_trial: Vec<Vec<TrialRecord>> = (0..spec.n_configs * spec.n_pairs)
        .into_par_iter()
        .map(|trial_id| {
            let (c, p) = (trial_id / spec.n_pairs, trial_id % spec.n_pairs);
            let mut rng = stream_rng(spec.rng_seed, config_stream(c) | (p as u64 + 1));
            let instance = gen_psr_pair(spec, &landmarks[c], &mut rng)?;
            methods
                .iter()
                .map(|m| solve_psr_trial(&instance, trial_id, *m, options, config))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(StudyReport::from_records(
        methods,
        per_trial.into_iter().flatten().collect(),
    ))
}

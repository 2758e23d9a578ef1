use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::Method;

/// Outcome of one solve of one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub method: Method,
    pub converged: bool,
    /// Toy study only: landed within the success radius of the global optimum.
    pub success: Option<bool>,
    pub iterations: usize,
    /// `|x_hat (-) x_true|` over the full tangent vector; `None` if the solver errored.
    pub rmse: Option<f64>,
    pub rmse_rot_deg: Option<f64>,
    pub rmse_trans_m: Option<f64>,
    /// `e^T P^-1 e / dim`; `None` when not defined for this trial.
    pub anees_term: Option<f64>,
    pub wall_time_s: f64,
}

/// Monte-Carlo summary for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub method: Method,
    pub trials: usize,
    pub rmse: Option<f64>,
    pub rmse_rot_deg: Option<f64>,
    pub rmse_trans_m: Option<f64>,
    pub anees: Option<f64>,
    /// Trials left out of the ANEES because the information matrix was singular.
    pub anees_excluded: usize,
    pub success_rate: Option<f64>,
    pub avg_iterations: f64,
    /// Total solver wall time over all trials.
    pub wall_time_s: f64,
    /// Trials where the solver returned an error.
    pub solver_failures: usize,
}

/// `sqrt(1/N sum_i |e_i|^2)`.
pub fn rmse<'a, I>(errors: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let (sum, n) = errors
        .into_iter()
        .fold((0.0, 0usize), |(s, n), e| (s + e.norm_squared(), n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Normalized estimation error squared divided by the state dimension.
pub fn nees_term(error: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<f64> {
    if covariance.nrows() != error.len() || covariance.ncols() != error.len() {
        return Err(Error::DimensionMismatch {
            expected: error.len(),
            found: covariance.nrows(),
        });
    }
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or(Error::SingularInformation)?;
    Ok(error.dot(&chol.solve(error)) / error.len() as f64)
}

fn root_mean_square(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregate the records of one method. Every field is a plain function of
/// the records, so it can be recomputed from the per-trial CSV.
pub fn aggregate(method: Method, records: &[TrialRecord]) -> TrialAggregate {
    let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.method == method).collect();
    let has_rotation = rows.iter().any(|r| r.rmse_rot_deg.is_some());
    let is_psr = has_rotation || rows.iter().any(|r| r.rmse_trans_m.is_some());
    TrialAggregate {
        method,
        trials: rows.len(),
        rmse: root_mean_square(rows.iter().filter_map(|r| r.rmse)),
        rmse_rot_deg: root_mean_square(rows.iter().filter_map(|r| r.rmse_rot_deg)),
        rmse_trans_m: root_mean_square(rows.iter().filter_map(|r| r.rmse_trans_m)),
        anees: mean(rows.iter().filter_map(|r| r.anees_term)),
        anees_excluded: if is_psr {
            rows.iter()
                .filter(|r| r.rmse.is_some() && r.anees_term.is_none())
                .count()
        } else {
            0
        },
        success_rate: mean(
            rows.iter()
                .filter_map(|r| r.success)
                .map(|s| if s { 1.0 } else { 0.0 }),
        ),
        avg_iterations: mean(rows.iter().map(|r| r.iterations as f64)).unwrap_or(0.0),
        wall_time_s: rows.iter().map(|r| r.wall_time_s).sum(),
        solver_failures: rows.iter().filter(|r| r.rmse.is_none()).count(),
    }
}

/// Records of a whole study plus one aggregate per method, in method order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<TrialAggregate>,
}

impl StudyReport {
    pub fn from_records(methods: &[Method], records: Vec<TrialRecord>) -> Self {
        let aggregates = methods.iter().map(|m| aggregate(*m, &records)).collect();
        Self {
            records,
            aggregates,
        }
    }

    pub fn aggregate(&self, method: Method) -> Option<&TrialAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }
}

//! Monte-Carlo studies and the Hessian sweep.

pub mod metrics;
pub mod psr;
pub mod sweep;
pub mod toy;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use metrics::{aggregate, nees_term, rmse, StudyReport, TrialAggregate, TrialRecord};
pub use psr::{
    gen_psr_config, gen_psr_instance, gen_psr_pair, run_psr_mc, PointRegistrationFactor,
    PsrInstance, PsrSpace, PsrSpec,
};
pub use sweep::{hessian_sweep_1d, method_hessian, HessianSweep, Mixture1d, SweepRow};
pub use toy::{gen_toy_mixture, run_toy_mc, ToyMixture, ToySpec};

/// Independent generator for one trial: `seed` picks the study, `stream` the trial.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

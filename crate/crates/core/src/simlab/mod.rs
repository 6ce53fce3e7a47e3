//! Simulation laboratory: the benchmark data generator, intracluster
//! correlation measures, a replicated-estimation harness, and the
//! efficiency sweep comparing the two estimators on exact nuisances.

mod dgp;
mod icc;
mod montecarlo;
mod sweep;

pub use dgp::{simulate_dgp, RandomEffectFamily, SimConfig, TRUE_TAU};
pub use icc::{icc_binary_anova, icc_continuous, oracle_treatment_residuals};
pub use montecarlo::{
    estimate_repeated, run_monte_carlo, EstimatorConfig, MetricsRow, MetricsTable,
};
pub use sweep::{efficiency_sweep, SweepPoint};

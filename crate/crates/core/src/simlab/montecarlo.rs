//! Replicated estimation over simulated datasets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{simulate_dgp, SimConfig};
use crate::covariance::StrataSpec;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate, median_aggregate, AggregateEstimate, CrossfitEstimate, EstimateOptions, Method,
};
use crate::model::Dataset;
use crate::nuisance::{LearnerSet, UndersampleRule};
use crate::numeric::rng::derive_seed;
use crate::numeric::stats::{mean, sample_sd};

fn default_folds() -> usize {
    2
}
fn default_splits() -> usize {
    1
}
fn default_clip() -> f64 {
    0.01
}
fn default_level() -> f64 {
    0.95
}
fn default_method() -> Method {
    Method::Proposed
}

/// Full recipe for one estimator run: the method plus every tuning choice.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Number of repeated fold splits combined by the median rule.
    #[serde(default = "default_splits")]
    pub splits: usize,
    #[serde(default)]
    pub learners: LearnerSet,
    #[serde(default)]
    pub strata: StrataSpec,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default)]
    pub undersample: Option<UndersampleRule>,
    /// Confidence level for interval coverage.
    #[serde(default = "default_level")]
    pub level: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: default_method(),
            folds: default_folds(),
            splits: default_splits(),
            learners: LearnerSet::default(),
            strata: StrataSpec::default(),
            clip: default_clip(),
            undersample: None,
            level: default_level(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(Error::Argument("splits must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Argument(format!(
                "cross-fitting needs at least 2 folds, got {}",
                self.folds
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Argument(format!(
                "confidence level must lie in (0,1), got {}",
                self.level
            )));
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return Err(Error::Argument(format!(
                "probability clip must lie in (0, 0.5), got {}",
                self.clip
            )));
        }
        self.learners.validate()
    }

    pub fn options_for_seed(&self, seed: u64) -> EstimateOptions {
        EstimateOptions {
            method: self.method,
            folds: self.folds,
            learners: self.learners.clone(),
            strata: self.strata.clone(),
            clip: self.clip,
            undersample: self.undersample,
            seed,
        }
    }
}

/// Run the configured number of repeated splits on one dataset and combine
/// them by the median rule. Split s draws its fold assignment from
/// derive_seed(seed, s), so the whole cycle is pinned by one seed.
pub fn estimate_repeated(
    d: &Dataset,
    est: &EstimatorConfig,
    seed: u64,
) -> Result<(AggregateEstimate, Vec<CrossfitEstimate>)> {
    est.validate()?;
    let mut splits = Vec::with_capacity(est.splits);
    for s in 0..est.splits {
        let opts = est.options_for_seed(derive_seed(seed, s as u64));
        splits.push(estimate(d, &opts)?);
    }
    let agg = median_aggregate(&splits)?;
    Ok((agg, splits))
}

/// Summary metrics for one simulation scenario.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub reps: usize,
    pub mean_tau: f64,
    pub bias: f64,
    /// Sample standard deviation of the point estimates.
    pub se_emp: f64,
    /// Fraction of intervals that contained the true effect.
    pub coverage: f64,
    pub mean_ci_width: f64,
}

/// Scenario rows plus CSV and JSON emitters.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn merge(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
    }

    /// Bias and SE scaled by 100, the usual reporting convention.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,bias_x100,se_x100,coverage\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.4},{:.4},{:.4}\n",
                r.scenario,
                100.0 * r.bias,
                100.0 * r.se_emp,
                r.coverage
            ));
        }
        out
    }
}

/// Simulate `reps` datasets, estimate each, and summarize bias, spread, and
/// interval coverage against `true_tau`. Replications are independent and
/// parallel; replication r draws its data seed from derive_seed(seed, 2r)
/// and its estimation seed from derive_seed(seed, 2r + 1), so results do not
/// depend on scheduling order.
pub fn run_monte_carlo(
    cfg: &SimConfig,
    est: &EstimatorConfig,
    reps: usize,
    true_tau: f64,
    seed: u64,
) -> Result<MetricsTable> {
    cfg.validate()?;
    est.validate()?;
    let scenario = format!(
        "{}_N{}_sv{}_su{}",
        est.method, cfg.n_clusters, cfg.sigma_v, cfg.sigma_u
    );
    run_with(cfg, reps, true_tau, seed, scenario, |d, est_seed| {
        let (agg, _) = estimate_repeated(d, est, est_seed)?;
        let (lo, hi) = agg.confidence_interval(est.level)?;
        Ok((agg.tau_med, lo, hi))
    })
}

fn run_with<F>(
    cfg: &SimConfig,
    reps: usize,
    true_tau: f64,
    seed: u64,
    scenario: String,
    estimate_fn: F,
) -> Result<MetricsTable>
where
    F: Fn(&Dataset, u64) -> Result<(f64, f64, f64)> + Sync,
{
    if reps < 2 {
        return Err(Error::Argument(format!("need at least 2 replications, got {reps}")));
    }
    let outcomes: Vec<(f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rep_cfg = cfg.clone();
            rep_cfg.seed = derive_seed(seed, 2 * r as u64);
            let d = simulate_dgp(&rep_cfg)
                .map_err(|e| Error::Fit(format!("replication {r}: {e}")))?;
            estimate_fn(&d, derive_seed(seed, 2 * r as u64 + 1))
                .map_err(|e| Error::Fit(format!("replication {r}: {e}")))
        })
        .collect::<Result<_>>()?;
    let taus: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let covered = outcomes.iter().filter(|&&(_, lo, hi)| lo <= true_tau && true_tau <= hi);
    let widths: Vec<f64> = outcomes.iter().map(|&(_, lo, hi)| hi - lo).collect();
    let mean_tau = mean(&taus);
    let mut table = MetricsTable::default();
    table.push(MetricsRow {
        scenario,
        reps,
        mean_tau,
        bias: mean_tau - true_tau,
        se_emp: sample_sd(&taus),
        coverage: covered.count() as f64 / reps as f64,
        mean_ci_width: mean(&widths),
    });
    Ok(table)
}

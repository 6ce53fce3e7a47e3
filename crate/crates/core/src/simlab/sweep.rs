//! Relative-efficiency grid over the random-effect scales.
//!
//! Each grid point simulates paired datasets and runs both estimators with
//! exact nuisances on the same data and the same fold split, so the variance
//! ratio rho = Var(baseline) / Var(proposed) isolates the effect of the
//! covariance adjustment rather than nuisance estimation noise.

use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{simulate_dgp, RandomEffectFamily, SimConfig};
use super::icc::{icc_binary_anova, icc_continuous, oracle_treatment_residuals};
use crate::error::{Error, Result};
use crate::estimators::{estimate_with_fit, EstimateOptions, Method};
use crate::model::split_clusters;
use crate::nuisance::{fit_nuisances, LearnerSet};
use crate::numeric::rng::derive_seed;
use crate::numeric::stats::{mean, sample_variance};

/// One grid point of the efficiency sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub sigma_v: f64,
    pub sigma_u: f64,
    /// ANOVA ICC of the treatment residuals, averaged over replications.
    pub icc_a: f64,
    /// Closed-form outcome ICC at this sigma_u.
    pub icc_y: f64,
    /// Var(baseline) / Var(proposed) across replications.
    pub rho: f64,
}

/// Estimate the efficiency ratio at every (sigma_v, sigma_u) grid point.
pub fn efficiency_sweep(
    grid: &[(f64, f64)],
    reps: usize,
    n_clusters: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if reps < 2 {
        return Err(Error::Argument(format!("need at least 2 replications, got {reps}")));
    }
    grid.iter()
        .enumerate()
        .map(|(p, &(sigma_v, sigma_u))| {
            let point_seed = derive_seed(seed, p as u64);
            let outcomes: Vec<(f64, f64, f64)> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    replicate(sigma_v, sigma_u, n_clusters, point_seed, r).map_err(|e| {
                        Error::Fit(format!("sweep point {p} replication {r}: {e}"))
                    })
                })
                .collect::<Result<_>>()?;
            let base: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
            let prop: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
            let iccs: Vec<f64> = outcomes.iter().map(|o| o.2).collect();
            let var_prop = sample_variance(&prop);
            if !(var_prop > 0.0) {
                return Err(Error::Numeric(format!(
                    "proposed estimator variance degenerated at grid point {p}"
                )));
            }
            Ok(SweepPoint {
                sigma_v,
                sigma_u,
                icc_a: mean(&iccs),
                icc_y: icc_continuous(sigma_u),
                rho: sample_variance(&base) / var_prop,
            })
        })
        .collect()
}

fn replicate(
    sigma_v: f64,
    sigma_u: f64,
    n_clusters: usize,
    point_seed: u64,
    r: usize,
) -> Result<(f64, f64, f64)> {
    let cfg = SimConfig {
        n_clusters,
        size_range: None,
        sigma_v,
        sigma_u,
        family: RandomEffectFamily::Normal,
        seed: derive_seed(point_seed, 2 * r as u64),
    };
    let d = simulate_dgp(&cfg)?;
    let est_seed = derive_seed(point_seed, 2 * r as u64 + 1);
    let learners = LearnerSet::oracle(sigma_v);
    let folds = split_clusters(&d, 2, est_seed)?;
    let fit = fit_nuisances(&d, &folds, &learners, 0.01, None, est_seed)?;
    let opts = |method| EstimateOptions {
        method,
        learners: learners.clone(),
        seed: est_seed,
        ..Default::default()
    };
    let base = estimate_with_fit(&d, &folds, &fit, &opts(Method::Aipw))?;
    let prop = estimate_with_fit(&d, &folds, &fit, &opts(Method::Proposed))?;
    let icc_a = icc_binary_anova(&oracle_treatment_residuals(&d, sigma_v)?)?;
    Ok((base.tau, prop.tau, icc_a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_and_determinism() {
        let grid = [(0.0, 0.5), (1.0, 0.5)];
        let a = efficiency_sweep(&grid, 3, 40, 9).unwrap();
        let b = efficiency_sweep(&grid, 3, 40, 9).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rho, y.rho);
            assert_eq!(x.icc_a, y.icc_a);
        }
        assert_eq!(a[0].icc_y, icc_continuous(0.5));
        assert!(a[1].icc_a > a[0].icc_a, "treatment ICC should grow with sigma_v");
        assert!(efficiency_sweep(&grid, 1, 40, 9).is_err());
    }

    #[test]
    fn strong_outcome_effect_without_v_favors_the_adjustment() {
        let points = efficiency_sweep(&[(0.0, 1.5)], 24, 80, 5).unwrap();
        assert!(
            points[0].rho > 0.8,
            "expected an efficiency gain, got rho = {}",
            points[0].rho
        );
    }
}

//! Per-cluster influence values for the two estimators.

use crate::error::{Error, Result};
use crate::model::ClusterData;
use crate::nuisance::ClusterFit;

fn check_lengths(c: &ClusterData, fit: &ClusterFit, probs: &[f64]) -> Result<()> {
    let n = c.n();
    if probs.len() != n || fit.g0.len() != n || fit.g1.len() != n {
        return Err(Error::Consistency(format!(
            "cluster '{}': nuisance predictions do not cover all {n} units",
            c.id()
        )));
    }
    Ok(())
}

fn check_prob(c: &ClusterData, j: usize, p: f64, what: &str) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Numeric(format!(
            "cluster '{}' unit {j}: {what} {p} outside (0,1)",
            c.id()
        )));
    }
    Ok(())
}

/// Influence value of the baseline cross-fitted AIPW estimator: residuals
/// weighted by the individual propensity, averaged within the cluster and
/// scaled by the cluster weight.
pub fn influence_aipw(c: &ClusterData, fit: &ClusterFit) -> Result<f64> {
    check_lengths(c, fit, &fit.e1)?;
    let n = c.n();
    let mut sum = 0.0;
    for j in 0..n {
        let e = fit.e1[j];
        check_prob(c, j, e, "individual propensity")?;
        let y = c.y()[j];
        sum += if c.a()[j] == 1 {
            (y - fit.g1[j]) / e + fit.g1[j] - fit.g0[j]
        } else {
            -(y - fit.g0[j]) / (1.0 - e) + fit.g1[j] - fit.g0[j]
        };
    }
    Ok(c.weight() / n as f64 * sum)
}

/// Influence value of the proposed estimator: each unit's residual is
/// shrunk by `beta` times the sum of its peers' residuals before the
/// inverse conditional-propensity weighting. `beta` is the coefficient of
/// this cluster's stratum; `beta = 0` with `pi1 = e1` reduces to
/// [`influence_aipw`] exactly.
pub fn influence_proposed(c: &ClusterData, fit: &ClusterFit, beta: f64) -> Result<f64> {
    check_lengths(c, fit, &fit.pi1)?;
    let n = c.n();
    let mut resid = Vec::with_capacity(n);
    for j in 0..n {
        resid.push(c.y()[j] - if c.a()[j] == 1 { fit.g1[j] } else { fit.g0[j] });
    }
    let rsum: f64 = resid.iter().sum();
    let mut sum = 0.0;
    for j in 0..n {
        let pi = fit.pi1[j];
        check_prob(c, j, pi, "conditional propensity")?;
        let adj = resid[j] - beta * (rsum - resid[j]);
        sum += if c.a()[j] == 1 {
            adj / pi + fit.g1[j] - fit.g0[j]
        } else {
            -adj / (1.0 - pi) + fit.g1[j] - fit.g0[j]
        };
    }
    Ok(c.weight() / n as f64 * sum)
}

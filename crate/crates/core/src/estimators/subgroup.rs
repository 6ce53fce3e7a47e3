//! Effects within a cluster-level subgroup.
//!
//! When the weight is an indicator for membership in a subgroup, the weighted
//! estimand integrates to p * tau_subgroup where p is the population share of
//! member clusters. Dividing the full-population estimate by the observed
//! share recovers the within-subgroup effect, and the variance scales by the
//! square of that factor.

use serde::Serialize;

use super::CrossfitEstimate;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::numeric::normal_quantile;

/// A subgroup effect rescaled from a run whose cluster weights were the
/// subgroup indicator.
#[derive(Clone, Debug, Serialize)]
pub struct SubgroupEstimate {
    pub column: String,
    /// Observed share of clusters in the subgroup.
    pub p_hat: f64,
    pub tau: f64,
    pub var_hat: f64,
    pub n_clusters: usize,
}

impl SubgroupEstimate {
    pub fn se(&self) -> f64 {
        (self.var_hat / self.n_clusters as f64).sqrt()
    }

    pub fn confidence_interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Argument(format!(
                "confidence level must lie in (0,1), got {level}"
            )));
        }
        let z = normal_quantile((1.0 + level) / 2.0)?;
        let half = z * self.se();
        Ok((self.tau - half, self.tau + half))
    }
}

/// Rescale an indicator-weighted estimate into the subgroup effect. The
/// estimate must come from the same dataset reweighted by `indicator_column`
/// (see `Dataset::reweight_by_indicator`); this only divides out the share.
pub fn subgroup_effect(
    d: &Dataset,
    indicator_column: &str,
    e: &CrossfitEstimate,
) -> Result<SubgroupEstimate> {
    if e.n_clusters != d.n_clusters() {
        return Err(Error::Consistency(format!(
            "estimate covers {} clusters, dataset has {}",
            e.n_clusters,
            d.n_clusters()
        )));
    }
    let col = d.c_index(indicator_column)?;
    let mut members = 0usize;
    for c in d.clusters() {
        let v = c.c_cluster()[col];
        if v != 0.0 && v != 1.0 {
            return Err(Error::Value(format!(
                "column '{indicator_column}' is not a 0/1 indicator: cluster '{}' has {v}",
                c.id()
            )));
        }
        if v == 1.0 {
            members += 1;
        }
    }
    if members == 0 {
        return Err(Error::Argument(format!(
            "no clusters belong to subgroup '{indicator_column}'"
        )));
    }
    let p_hat = members as f64 / d.n_clusters() as f64;
    Ok(SubgroupEstimate {
        column: indicator_column.to_string(),
        p_hat,
        tau: e.tau / p_hat,
        var_hat: e.var_hat / (p_hat * p_hat),
        n_clusters: e.n_clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Method;
    use crate::model::read_dataset;
    use approx::assert_abs_diff_eq;

    fn dataset(indicators: &[f64]) -> Dataset {
        let mut csv = String::from("cluster_id,y,a,w__x,c__g\n");
        for (i, &g) in indicators.iter().enumerate() {
            csv.push_str(&format!("c{i},1.0,1,0.0,{g}\n"));
            csv.push_str(&format!("c{i},0.0,0,0.0,{g}\n"));
        }
        read_dataset(csv.as_bytes()).unwrap()
    }

    fn fake_estimate(tau: f64, var_hat: f64, n: usize) -> CrossfitEstimate {
        CrossfitEstimate {
            method: Method::Proposed,
            tau,
            var_hat,
            n_clusters: n,
            influence: vec![],
            per_fold_tau: vec![],
            fold_index: vec![],
            beta: None,
        }
    }

    #[test]
    fn quarter_share_scales_by_four() {
        let d = dataset(&[1.0, 0.0, 0.0, 0.0]);
        let e = fake_estimate(0.5, 0.04, 4);
        let s = subgroup_effect(&d, "c__g", &e).unwrap();
        assert_abs_diff_eq!(s.p_hat, 0.25);
        assert_abs_diff_eq!(s.tau, 2.0);
        assert_abs_diff_eq!(s.var_hat, 0.64, epsilon = 1e-12);
        // the CI is the full-population CI stretched by 1/p
        let (lo, hi) = s.confidence_interval(0.95).unwrap();
        let (flo, fhi) = crate::estimators::confidence_interval(&e, 0.95).unwrap();
        assert_abs_diff_eq!(lo, flo / 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, fhi / 0.25, epsilon = 1e-12);
    }

    #[test]
    fn full_share_is_identity() {
        let d = dataset(&[1.0, 1.0, 1.0]);
        let e = fake_estimate(1.5, 0.09, 3);
        let s = subgroup_effect(&d, "c__g", &e).unwrap();
        assert_eq!((s.p_hat, s.tau, s.var_hat), (1.0, 1.5, 0.09));
    }

    #[test]
    fn rejects_empty_or_invalid_subgroups() {
        let d = dataset(&[0.0, 0.0]);
        let e = fake_estimate(1.0, 1.0, 2);
        assert!(subgroup_effect(&d, "c__g", &e).is_err());
        let d = dataset(&[0.5, 1.0]);
        assert!(subgroup_effect(&d, "c__g", &e).is_err());
        let d = dataset(&[1.0, 1.0]);
        assert!(subgroup_effect(&d, "c__missing", &e).is_err());
        let e = fake_estimate(1.0, 1.0, 5);
        assert!(subgroup_effect(&d, "c__g", &e).is_err());
    }
}

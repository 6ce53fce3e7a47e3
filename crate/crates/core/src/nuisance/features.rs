//! Feature construction for the three nuisance models.
//!
//! * outcome regression `g`: own treatment, own unit covariates, cluster covariates
//! * individual propensity `e`: own unit covariates, cluster covariates
//! * conditional propensity `pi`: peer treatment mean, own unit covariates,
//!   peer unit-covariate means, cluster covariates, and a has-peers flag
//!   (singletons get zeroed peer summaries and flag 0)

use crate::model::{ClusterData, Dataset};

/// Named feature rows, one per unit, cluster-major in dataset order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub(crate) fn outcome_row(c: &ClusterData, j: usize, a_override: Option<u8>) -> Vec<f64> {
    let a = a_override.unwrap_or(c.a()[j]);
    let w = c.w_unit().row(j);
    let mut row = Vec::with_capacity(1 + w.len() + c.c_cluster().len());
    row.push(a as f64);
    row.extend_from_slice(w);
    row.extend_from_slice(c.c_cluster());
    row
}

pub(crate) fn e_row(c: &ClusterData, j: usize) -> Vec<f64> {
    let w = c.w_unit().row(j);
    let mut row = Vec::with_capacity(w.len() + c.c_cluster().len());
    row.extend_from_slice(w);
    row.extend_from_slice(c.c_cluster());
    row
}

pub(crate) fn cps_rows(c: &ClusterData) -> Vec<Vec<f64>> {
    let n = c.n();
    let p = c.w_unit().cols();
    let a_sum: f64 = c.a().iter().map(|&v| v as f64).sum();
    let mut w_sums = vec![0.0f64; p];
    for j in 0..n {
        for (s, v) in w_sums.iter_mut().zip(c.w_unit().row(j)) {
            *s += v;
        }
    }
    (0..n)
        .map(|j| {
            let w = c.w_unit().row(j);
            let mut row = Vec::with_capacity(1 + 2 * p + c.c_cluster().len() + 1);
            if n > 1 {
                let denom = (n - 1) as f64;
                row.push((a_sum - c.a_f64(j)) / denom);
                row.extend_from_slice(w);
                for (s, v) in w_sums.iter().zip(w) {
                    row.push((s - v) / denom);
                }
                row.extend_from_slice(c.c_cluster());
                row.push(1.0);
            } else {
                row.push(0.0);
                row.extend_from_slice(w);
                row.extend(std::iter::repeat(0.0).take(p));
                row.extend_from_slice(c.c_cluster());
                row.push(0.0);
            }
            row
        })
        .collect()
}

fn outcome_names(d: &Dataset) -> Vec<String> {
    let mut names = vec!["a".to_string()];
    names.extend(d.w_names().iter().cloned());
    names.extend(d.c_names().iter().cloned());
    names
}

fn e_names(d: &Dataset) -> Vec<String> {
    let mut names = Vec::new();
    names.extend(d.w_names().iter().cloned());
    names.extend(d.c_names().iter().cloned());
    names
}

fn cps_names(d: &Dataset) -> Vec<String> {
    let mut names = vec!["abar_peers".to_string()];
    names.extend(d.w_names().iter().cloned());
    names.extend(d.w_names().iter().map(|n| format!("{n}__peer_mean")));
    names.extend(d.c_names().iter().cloned());
    names.push("has_peers".into());
    names
}

/// Outcome-model features for every unit; `a_override` substitutes a
/// counterfactual arm for the observed treatment.
pub fn build_outcome_features(d: &Dataset, a_override: Option<u8>) -> FeatureSet {
    let rows = d
        .clusters()
        .iter()
        .flat_map(|c| (0..c.n()).map(move |j| outcome_row(c, j, a_override)))
        .collect();
    FeatureSet { names: outcome_names(d), rows }
}

/// Individual-propensity features (own covariates only).
pub fn build_e_features(d: &Dataset) -> FeatureSet {
    let rows = d
        .clusters()
        .iter()
        .flat_map(|c| (0..c.n()).map(move |j| e_row(c, j)))
        .collect();
    FeatureSet { names: e_names(d), rows }
}

/// Conditional-propensity features with leave-one-out peer summaries.
pub fn build_cps_features(d: &Dataset) -> FeatureSet {
    let rows = d.clusters().iter().flat_map(cps_rows).collect();
    FeatureSet { names: cps_names(d), rows }
}

use serde::Serialize;

use crate::model::Dataset;

/// Structural summary of a dataset, surfaced before estimation so degenerate
/// inputs (no controls, all-singleton clusters...) are visible up front.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub n_clusters: usize,
    pub n_units: usize,
    pub min_cluster_size: usize,
    pub max_cluster_size: usize,
    pub singleton_clusters: usize,
    pub treated_fraction: f64,
    pub no_treated_units: bool,
    pub no_control_units: bool,
    /// Clusters whose units are all treated (degenerate within-cluster contrast).
    pub all_treated_clusters: Vec<String>,
    pub all_control_clusters: Vec<String>,
    pub zero_weight_clusters: usize,
}

/// Summarize the dataset. Never fails: a constructed [`Dataset`] is already
/// structurally sound, this reports statistical degeneracies.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut min_n = usize::MAX;
    let mut max_n = 0usize;
    let mut singletons = 0usize;
    let mut treated = 0usize;
    let mut units = 0usize;
    let mut all_treated = Vec::new();
    let mut all_control = Vec::new();
    let mut zero_weight = 0usize;
    for c in d.clusters() {
        let n = c.n();
        min_n = min_n.min(n);
        max_n = max_n.max(n);
        if n == 1 {
            singletons += 1;
        }
        let t = c.treated_count();
        treated += t;
        units += n;
        if t == n {
            all_treated.push(c.id().to_string());
        } else if t == 0 {
            all_control.push(c.id().to_string());
        }
        if c.weight() == 0.0 {
            zero_weight += 1;
        }
    }
    ValidationReport {
        n_clusters: d.n_clusters(),
        n_units: units,
        min_cluster_size: min_n,
        max_cluster_size: max_n,
        singleton_clusters: singletons,
        treated_fraction: treated as f64 / units as f64,
        no_treated_units: treated == 0,
        no_control_units: treated == units,
        all_treated_clusters: all_treated,
        all_control_clusters: all_control,
        zero_weight_clusters: zero_weight,
    }
}

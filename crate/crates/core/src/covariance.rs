//! Outcome-covariance model for the proposed influence function.
//!
//! Residual correlation within a cluster is absorbed by a per-cluster
//! coefficient beta(C) drawn from a stratified class: clusters are labeled
//! into strata and every stratum gets one coefficient gamma. The coefficient
//! scales the peer-residual adjustment inside the influence function, or in
//! matrix form replaces the identity by B(gamma) = I + gamma(I - 11'). The
//! fitted gamma per stratum minimizes the weighted quadratic form
//!
//!   (2/N) sum_i w_i^2 (B iv_i)' Shat_i (B iv_i),
//!
//! which under the rank-one Shat_i = resid_i resid_i' has the closed form
//! gamma = -sum w^2 (M iv . r)(iv . r) / sum w^2 (M iv . r)^2 with
//! M = I - 11'. Strata with no curvature (all size-1 clusters, or residuals
//! orthogonal to the adjustment) fall back to gamma = 0, which reproduces
//! the unadjusted estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterData, Dataset};
use crate::nuisance::ClusterFit;

const DENOM_FLOOR: f64 = 1e-12;

fn default_j() -> usize {
    1
}

fn default_b0() -> f64 {
    10.0
}

/// Configured stratification rule, as written in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrataSpec {
    /// Strata by cluster-size quantiles, `j` groups.
    ClusterSize {
        #[serde(rename = "J", default = "default_j")]
        j: usize,
        #[serde(default = "default_b0")]
        b0: f64,
    },
    /// Strata by the distinct values of a cluster covariate.
    Column {
        name: String,
        #[serde(default = "default_b0")]
        b0: f64,
    },
}

impl Default for StrataSpec {
    fn default() -> Self {
        StrataSpec::ClusterSize { j: default_j(), b0: default_b0() }
    }
}

impl StrataSpec {
    pub fn b0(&self) -> f64 {
        match self {
            StrataSpec::ClusterSize { b0, .. } | StrataSpec::Column { b0, .. } => *b0,
        }
    }

    /// Turn the rule into concrete labels for every cluster of `d`.
    pub fn resolve(&self, d: &Dataset) -> Result<StrataRecipe> {
        if !(self.b0().is_finite() && self.b0() > 0.0) {
            return Err(Error::Argument(format!(
                "clamp bound b0 must be finite and positive, got {}",
                self.b0()
            )));
        }
        match self {
            StrataSpec::ClusterSize { j, b0 } => {
                if *j < 1 {
                    return Err(Error::Argument("need at least one stratum".into()));
                }
                Ok(default_strata_impl(d, *j, *b0))
            }
            StrataSpec::Column { name, b0 } => strata_by_column(d, name, *b0),
        }
    }
}

/// Resolved stratification: one label per cluster, dataset order.
#[derive(Clone, Debug, PartialEq)]
pub struct StrataRecipe {
    j: usize,
    b0: f64,
    labels: Vec<usize>,
    description: String,
}

impl StrataRecipe {
    pub fn j(&self) -> usize {
        self.j
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// Stratum label of the cluster at dataset index `i`.
    pub fn label_of(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Human-readable rule summary for reports.
    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Cluster-size quantile strata with `j` groups. If the data has fewer
/// distinct sizes than `j`, the count collapses to what the data supports
/// (the description records the reduction).
pub fn default_strata(d: &Dataset, j: usize) -> Result<StrataRecipe> {
    StrataSpec::ClusterSize { j, b0: default_b0() }.resolve(d)
}

fn default_strata_impl(d: &Dataset, j: usize, b0: f64) -> StrataRecipe {
    let mut sizes: Vec<usize> = d.clusters().iter().map(ClusterData::n).collect();
    let n = sizes.len();
    sizes.sort_unstable();
    // Nearest-rank quantile cut points; a cut equal to the maximum size would
    // leave the top stratum empty and is dropped. Ties go to the lower
    // stratum, so a cluster sitting exactly on a cut stays below it.
    let mut cuts: Vec<usize> = (1..j)
        .map(|m| sizes[(m * n).div_ceil(j) - 1])
        .collect();
    cuts.dedup();
    cuts.retain(|c| c < sizes.last().expect("nonempty dataset"));
    let labels: Vec<usize> = d
        .clusters()
        .iter()
        .map(|c| cuts.iter().filter(|&&cut| cut < c.n()).count())
        .collect();
    let effective = cuts.len() + 1;
    let description = if cuts.is_empty() {
        if j > 1 {
            format!("cluster size, single stratum (reduced from {j}: too few distinct sizes)")
        } else {
            "single stratum".to_string()
        }
    } else if effective < j {
        format!("cluster size cuts at {cuts:?} (reduced from {j} strata)")
    } else {
        format!("cluster size cuts at {cuts:?}")
    };
    StrataRecipe { j: effective, b0, labels, description }
}

/// Strata from the distinct values of a cluster covariate, labeled in
/// ascending value order.
pub fn strata_by_column(d: &Dataset, name: &str, b0: f64) -> Result<StrataRecipe> {
    const MAX_STRATA: usize = 64;
    let ci = d.c_index(name)?;
    let mut values: Vec<f64> = d.clusters().iter().map(|c| c.c_cluster()[ci]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() > MAX_STRATA {
        return Err(Error::Argument(format!(
            "column '{name}' has {} distinct values; at most {MAX_STRATA} strata are supported",
            values.len()
        )));
    }
    let labels = d
        .clusters()
        .iter()
        .map(|c| {
            values
                .binary_search_by(|v| v.total_cmp(&c.c_cluster()[ci]))
                .expect("every value was collected")
        })
        .collect();
    Ok(StrataRecipe {
        j: values.len(),
        b0,
        labels,
        description: format!("column {name} ({} levels)", values.len()),
    })
}

/// Fitted coefficients, one per stratum, clamped to [-b0, b0].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaModel {
    pub gamma: Vec<f64>,
    /// Whether each stratum's coefficient hit the clamp bound.
    pub clamped: Vec<bool>,
    pub b0: f64,
}

impl BetaModel {
    /// All-zero coefficients: the unadjusted special case.
    pub fn zero(j: usize, b0: f64) -> Self {
        BetaModel { gamma: vec![0.0; j], clamped: vec![false; j], b0 }
    }

    pub fn beta_for(&self, label: usize) -> f64 {
        self.gamma[label]
    }

    pub fn any_clamped(&self) -> bool {
        self.clamped.iter().any(|&c| c)
    }
}

/// Per-cluster quantities the covariance objective is built from: the
/// inverse-propensity contrast vector and the outcome residuals. The
/// rank-one score outer product is implied by `resid` and only materialized
/// on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAlgebra {
    pub ivec: Vec<f64>,
    pub resid: Vec<f64>,
    pub weight: f64,
}

impl ClusterAlgebra {
    pub fn n(&self) -> usize {
        self.ivec.len()
    }

    /// Dense outer product resid resid', for verification against the
    /// matrix form of the objective.
    pub fn shat(&self) -> Vec<Vec<f64>> {
        self.resid
            .iter()
            .map(|ri| self.resid.iter().map(|rj| ri * rj).collect())
            .collect()
    }

    /// iv . resid and (M iv) . resid, the two scalars the quadratic form
    /// reduces to under the rank-one score.
    fn moments(&self) -> (f64, f64) {
        let q: f64 = self.ivec.iter().zip(&self.resid).map(|(a, b)| a * b).sum();
        let iv_sum: f64 = self.ivec.iter().sum();
        let r_sum: f64 = self.resid.iter().sum();
        (q, q - iv_sum * r_sum)
    }
}

/// Inverse-propensity contrast and residuals for one cluster, from
/// fold-matched nuisance predictions.
pub fn compute_cluster_algebra(c: &ClusterData, fit: &ClusterFit) -> Result<ClusterAlgebra> {
    let n = c.n();
    if fit.pi1.len() != n || fit.g0.len() != n || fit.g1.len() != n {
        return Err(Error::Consistency(format!(
            "cluster '{}': nuisance predictions cover {} units, cluster has {n}",
            c.id(),
            fit.pi1.len().min(fit.g0.len()).min(fit.g1.len())
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mut ivec = Vec::with_capacity(n);
    let mut resid = Vec::with_capacity(n);
    for j in 0..n {
        let pi = fit.pi1[j];
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Numeric(format!(
                "cluster '{}' unit {j}: conditional propensity {pi} outside (0,1)",
                c.id()
            )));
        }
        ivec.push(if c.a()[j] == 1 { inv_n / pi } else { -inv_n / (1.0 - pi) });
        resid.push(c.y()[j] - if c.a()[j] == 1 { fit.g1[j] } else { fit.g0[j] });
    }
    Ok(ClusterAlgebra { ivec, resid, weight: c.weight() })
}

/// The covariance-model objective over one fold:
/// (2/N) sum_i w_i^2 (B(gamma_i) iv_i)' Shat_i (B(gamma_i) iv_i),
/// with each cluster's gamma looked up through its stratum label.
pub fn beta_objective(algebras: &[ClusterAlgebra], labels: &[usize], gamma: &[f64]) -> f64 {
    assert_eq!(algebras.len(), labels.len(), "one label per cluster");
    let total: f64 = algebras
        .iter()
        .zip(labels)
        .map(|(alg, &label)| {
            let g = gamma[label];
            let (q, m) = alg.moments();
            let u = q + g * m;
            alg.weight * alg.weight * u * u
        })
        .sum();
    2.0 * total / algebras.len() as f64
}

/// Closed-form per-stratum minimizer of [`beta_objective`], clamped to
/// [-b0, b0]. Strata with no clusters or with denominator below 1e-12
/// (size-1 clusters contribute exactly zero) get gamma = 0.
pub fn fit_beta_stratified(
    algebras: &[ClusterAlgebra],
    labels: &[usize],
    j: usize,
    b0: f64,
) -> Result<BetaModel> {
    if algebras.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} clusters but {} stratum labels",
            algebras.len(),
            labels.len()
        )));
    }
    if !(b0.is_finite() && b0 > 0.0) {
        return Err(Error::Argument(format!(
            "clamp bound b0 must be finite and positive, got {b0}"
        )));
    }
    let mut num = vec![0.0f64; j];
    let mut den = vec![0.0f64; j];
    for (alg, &label) in algebras.iter().zip(labels) {
        if label >= j {
            return Err(Error::Argument(format!(
                "stratum label {label} out of range for {j} strata"
            )));
        }
        let (q, m) = alg.moments();
        let w2 = alg.weight * alg.weight;
        num[label] += w2 * m * q;
        den[label] += w2 * m * m;
    }
    let mut gamma = Vec::with_capacity(j);
    let mut clamped = Vec::with_capacity(j);
    for l in 0..j {
        if den[l] < DENOM_FLOOR {
            gamma.push(0.0);
            clamped.push(false);
        } else {
            let raw = -num[l] / den[l];
            gamma.push(raw.clamp(-b0, b0));
            clamped.push(raw.abs() > b0);
        }
    }
    Ok(BetaModel { gamma, clamped, b0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RowMatrix;
    use approx::assert_abs_diff_eq;

    fn fit_for(c: &ClusterData, g0: Vec<f64>, g1: Vec<f64>, pi1: Vec<f64>) -> ClusterFit {
        let n = c.n();
        ClusterFit {
            cluster_id: c.id().to_string(),
            g0,
            g1,
            pi1: pi1.clone(),
            e1: vec![0.5; n],
            fold_trained_on: 0,
        }
    }

    fn cluster(y: Vec<f64>, a: Vec<u8>, weight: f64) -> ClusterData {
        let n = y.len();
        let rows = vec![vec![0.0]; n];
        ClusterData::new("c", y, a, RowMatrix::from_rows(&rows, 1).unwrap(), vec![], weight)
            .unwrap()
    }

    #[test]
    fn algebra_singleton_case() {
        let c = cluster(vec![2.0], vec![1], 1.0);
        let f = fit_for(&c, vec![0.0], vec![1.0], vec![0.5]);
        let alg = compute_cluster_algebra(&c, &f).unwrap();
        assert_eq!(alg.ivec, vec![2.0]);
        assert_eq!(alg.resid, vec![1.0]);
        assert_eq!(alg.shat(), vec![vec![1.0]]);
    }

    #[test]
    fn algebra_signs_and_scaling() {
        let c = cluster(vec![0.0, 0.0], vec![1, 0], 1.0);
        let f = fit_for(&c, vec![0.0, 0.0], vec![0.0, 0.0], vec![0.5, 0.5]);
        let alg = compute_cluster_algebra(&c, &f).unwrap();
        assert_eq!(alg.ivec, vec![1.0, -1.0]);
    }

    #[test]
    fn zero_residuals_zero_shat() {
        let c = cluster(vec![3.0, 4.0], vec![1, 1], 1.0);
        let f = fit_for(&c, vec![0.0, 0.0], vec![3.0, 4.0], vec![0.5, 0.5]);
        let alg = compute_cluster_algebra(&c, &f).unwrap();
        assert!(alg.shat().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn algebra_rejects_bad_propensity_and_short_fit() {
        let c = cluster(vec![1.0], vec![1], 1.0);
        let f = fit_for(&c, vec![0.0], vec![0.0], vec![1.0]);
        assert!(matches!(compute_cluster_algebra(&c, &f), Err(Error::Numeric(_))));
        let f = fit_for(&c, vec![0.0], vec![0.0], vec![]);
        assert!(matches!(compute_cluster_algebra(&c, &f), Err(Error::Consistency(_))));
    }

    fn xorshift(state: &mut u64) -> f64 {
        *state ^= *state << 13;
        *state ^= *state >> 7;
        *state ^= *state << 17;
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_algebra(state: &mut u64, n: usize) -> ClusterAlgebra {
        let ivec: Vec<f64> = (0..n).map(|_| xorshift(state) * 4.0 - 2.0).collect();
        let resid: Vec<f64> = (0..n).map(|_| xorshift(state) * 2.0 - 1.0).collect();
        ClusterAlgebra { ivec, resid, weight: 0.5 + xorshift(state) }
    }

    /// Dense evaluation of w^2 (B iv)' S (B iv) with B = I + g(I - 11').
    fn dense_form(alg: &ClusterAlgebra, g: f64) -> f64 {
        let n = alg.n();
        let shat = alg.shat();
        let mut u = vec![0.0; n];
        let iv_sum: f64 = alg.ivec.iter().sum();
        for j in 0..n {
            // (I + gM) iv = iv + g(iv - 1 * sum(iv))
            u[j] = alg.ivec[j] + g * (alg.ivec[j] - iv_sum);
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += u[i] * shat[i][j] * u[j];
            }
        }
        alg.weight * alg.weight * total
    }

    #[test]
    fn objective_matches_dense_expansion() {
        let mut state = 77u64;
        let algebras: Vec<ClusterAlgebra> =
            [1, 3, 4].iter().map(|&n| random_algebra(&mut state, n)).collect();
        let labels = vec![0, 1, 0];
        let gamma = vec![0.3, -0.7];
        let got = beta_objective(&algebras, &labels, &gamma);
        let want: f64 = algebras
            .iter()
            .zip(&labels)
            .map(|(alg, &l)| dense_form(alg, gamma[l]))
            .sum::<f64>()
            * 2.0
            / 3.0;
        assert_abs_diff_eq!(got, want, epsilon = 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn objective_at_zero_is_weighted_score_sum() {
        let mut state = 5u64;
        let algebras: Vec<ClusterAlgebra> =
            (0..4).map(|_| random_algebra(&mut state, 3)).collect();
        let labels = vec![0; 4];
        let got = beta_objective(&algebras, &labels, &[0.0]);
        let want: f64 = algebras
            .iter()
            .map(|a| {
                let q: f64 = a.ivec.iter().zip(&a.resid).map(|(x, y)| x * y).sum();
                a.weight * a.weight * q * q
            })
            .sum::<f64>()
            * 2.0
            / 4.0;
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn singleton_clusters_make_objective_flat() {
        let mut state = 9u64;
        let algebras: Vec<ClusterAlgebra> =
            (0..5).map(|_| random_algebra(&mut state, 1)).collect();
        let labels = vec![0; 5];
        let at0 = beta_objective(&algebras, &labels, &[0.0]);
        let at3 = beta_objective(&algebras, &labels, &[3.0]);
        assert_abs_diff_eq!(at0, at3, epsilon = 1e-12);
        let model = fit_beta_stratified(&algebras, &labels, 1, 10.0).unwrap();
        assert_eq!(model.gamma, vec![0.0]);
    }

    #[test]
    fn closed_form_matches_grid_search() {
        let mut state = 31u64;
        let algebras: Vec<ClusterAlgebra> = (0..20)
            .map(|_| {
                let n = 1 + (xorshift(&mut state) * 5.0) as usize;
                random_algebra(&mut state, n)
            })
            .collect();
        let labels = vec![0; 20];
        let model = fit_beta_stratified(&algebras, &labels, 1, 10.0).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        let mut g = -10.0;
        while g <= 10.0 {
            let v = beta_objective(&algebras, &labels, &[g]);
            if v < best.0 {
                best = (v, g);
            }
            g += 1e-4;
        }
        assert!(
            (model.gamma[0] - best.1).abs() < 2e-4,
            "closed form {} vs grid {}",
            model.gamma[0],
            best.1
        );
        // finite-difference first-order condition
        let h = 1e-6;
        let up = beta_objective(&algebras, &labels, &[model.gamma[0] + h]);
        let dn = beta_objective(&algebras, &labels, &[model.gamma[0] - h]);
        assert!(((up - dn) / (2.0 * h)).abs() < 1e-8 * (1.0 + up.abs()));
        // local minimality
        let at = beta_objective(&algebras, &labels, &[model.gamma[0]]);
        assert!(at <= beta_objective(&algebras, &labels, &[model.gamma[0] + 0.01]));
        assert!(at <= beta_objective(&algebras, &labels, &[model.gamma[0] - 0.01]));
    }

    #[test]
    fn residual_scaling_leaves_gamma_unchanged() {
        let mut state = 13u64;
        let algebras: Vec<ClusterAlgebra> =
            (0..10).map(|_| random_algebra(&mut state, 4)).collect();
        let labels = vec![0; 10];
        let scaled: Vec<ClusterAlgebra> = algebras
            .iter()
            .map(|a| ClusterAlgebra {
                ivec: a.ivec.clone(),
                resid: a.resid.iter().map(|r| r * 3.0).collect(),
                weight: a.weight,
            })
            .collect();
        let g = 0.4;
        let base = beta_objective(&algebras, &labels, &[g]);
        let up = beta_objective(&scaled, &labels, &[g]);
        assert_abs_diff_eq!(up, 9.0 * base, epsilon = 1e-12 * up.abs());
        let m1 = fit_beta_stratified(&algebras, &labels, 1, 10.0).unwrap();
        let m2 = fit_beta_stratified(&scaled, &labels, 1, 10.0).unwrap();
        assert_abs_diff_eq!(m1.gamma[0], m2.gamma[0], epsilon = 1e-10);
    }

    #[test]
    fn clamping_and_flag() {
        // One two-unit cluster: gamma_hat = -(q m)/(m m); pick values that
        // push it far outside a tiny clamp bound.
        let alg = ClusterAlgebra { ivec: vec![1.0, 1.0], resid: vec![1.0, -0.9], weight: 1.0 };
        let (q, m) = (0.1f64, 0.1 - 2.0 * 0.1);
        let raw: f64 = -(q * m) / (m * m);
        let model = fit_beta_stratified(&[alg], &[0], 1, 0.5).unwrap();
        assert!(raw.abs() > 0.5);
        assert_eq!(model.gamma[0], raw.signum() * 0.5);
        assert_eq!(model.clamped, vec![true]);
    }

    fn sized_dataset(sizes: &[usize]) -> Dataset {
        let clusters: Vec<ClusterData> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let rows = vec![vec![0.0]; n];
                ClusterData::new(
                    format!("c{i:03}"),
                    vec![0.0; n],
                    vec![0; n],
                    RowMatrix::from_rows(&rows, 1).unwrap(),
                    vec![(i % 3) as f64],
                    1.0,
                )
                .unwrap()
            })
            .collect();
        Dataset::new(clusters, vec!["w__x".into()], vec!["c__r".into(), "c__n".into()]).unwrap()
    }

    #[test]
    fn size_strata_split_at_median() {
        let d = sized_dataset(&[2, 3, 4, 5, 6, 7, 8, 9]);
        let r = default_strata(&d, 2).unwrap();
        assert_eq!(r.j(), 2);
        for (i, c) in d.clusters().iter().enumerate() {
            assert_eq!(r.label_of(i), usize::from(c.n() > 5), "size {}", c.n());
        }
    }

    #[test]
    fn size_strata_collapse_when_sizes_tie() {
        let d = sized_dataset(&[4, 4, 4, 4]);
        let r = default_strata(&d, 3).unwrap();
        assert_eq!(r.j(), 1);
        assert!(r.labels().iter().all(|&l| l == 0));
        assert!(r.description().contains("reduced from 3"));
    }

    #[test]
    fn single_stratum_is_constant() {
        let d = sized_dataset(&[2, 5, 9]);
        let r = default_strata(&d, 1).unwrap();
        assert_eq!(r.j(), 1);
        assert!(r.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn column_strata_label_by_value() {
        let d = sized_dataset(&[2, 3, 4, 5]);
        let r = strata_by_column(&d, "c__r", 10.0).unwrap();
        // c__r cycles 0,1,2,0
        assert_eq!(r.j(), 3);
        assert_eq!(r.labels(), &[0, 1, 2, 0]);
        assert!(strata_by_column(&d, "c__missing", 10.0).is_err());
    }

    #[test]
    fn spec_json_forms() {
        let s: StrataSpec =
            serde_json::from_str(r#"{"by":"cluster_size","J":3,"b0":10}"#).unwrap();
        assert_eq!(s, StrataSpec::ClusterSize { j: 3, b0: 10.0 });
        let s: StrataSpec = serde_json::from_str(r#"{"by":"column","name":"c__r"}"#).unwrap();
        assert_eq!(s, StrataSpec::Column { name: "c__r".into(), b0: 10.0 });
        assert!(serde_json::from_str::<StrataSpec>(r#"{"by":"cluster_size","step":2}"#).is_err());
    }
}

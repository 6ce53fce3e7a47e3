//! Nuisance estimation: outcome regressions, individual propensities, and
//! conditional propensities given peers, fit per cross-fitting fold.
//!
//! Every learner hides behind the [`Model`] trait so the estimators never
//! care how a prediction was produced. The conditional propensity is learned
//! from peer summary features (share of treated peers, peer covariate means)
//! rather than a parametric random-effects model; oracle specs swap in the
//! exact functions of the built-in benchmark generator.

mod boost;
mod features;
mod knn;
mod linear;
pub(crate) mod oracle;

pub use features::{build_cps_features, build_e_features, build_outcome_features, FeatureSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterData, Dataset, FoldAssignment};
use crate::numeric::rng::{derive_seed, hash_id};
use crate::numeric::{stream_rng, GaussHermite, RngDomain};
use oracle::{OracleColumns, GH_NODES};
use rand::Rng;

/// Generator tag accepted by oracle learner specs.
pub const ORACLE_DGP: &str = "table1";

/// A fitted predictor: one feature row in, one score out. Probabilities for
/// classification, conditional means for regression.
pub trait Model: Send + Sync {
    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

/// What a learner is being fit for. Classification carries the probability
/// clip so degenerate fits (single-class training data) stay inside bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Task {
    Regression,
    Classification { clip: f64 },
}

/// Learner choice plus hyperparameters, as written in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerSpec {
    LinearRidge {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_degree")]
        degree: u32,
    },
    LogisticRidge {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_degree")]
        degree: u32,
    },
    BoostedStumps {
        #[serde(default = "default_rounds")]
        rounds: u32,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_depth")]
        depth: u32,
    },
    Knn {
        k: usize,
    },
    Oracle {
        dgp: String,
        #[serde(default)]
        sigma_v: f64,
    },
}

fn default_lambda() -> f64 {
    1.0
}

fn default_degree() -> u32 {
    2
}

fn default_rounds() -> u32 {
    300
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_depth() -> u32 {
    1
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(msg));
        match self {
            LearnerSpec::LinearRidge { lambda, degree }
            | LearnerSpec::LogisticRidge { lambda, degree } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return bad(format!("ridge penalty must be finite and >= 0, got {lambda}"));
                }
                if !(1..=2).contains(degree) {
                    return bad(format!("basis degree must be 1 or 2, got {degree}"));
                }
            }
            LearnerSpec::BoostedStumps { rounds, learning_rate, depth } => {
                if *rounds < 1 {
                    return bad("boosting needs at least 1 round".into());
                }
                if !(learning_rate.is_finite() && *learning_rate > 0.0 && *learning_rate <= 1.0) {
                    return bad(format!("learning rate must lie in (0, 1], got {learning_rate}"));
                }
                if !(1..=8).contains(depth) {
                    return bad(format!("tree depth must lie in 1..=8, got {depth}"));
                }
            }
            LearnerSpec::Knn { k } => {
                if *k < 1 {
                    return bad("knn needs k >= 1".into());
                }
            }
            LearnerSpec::Oracle { dgp, sigma_v } => {
                if dgp != ORACLE_DGP {
                    return bad(format!(
                        "unsupported generator tag '{dgp}' (expected '{ORACLE_DGP}')"
                    ));
                }
                if !(sigma_v.is_finite() && *sigma_v >= 0.0) {
                    return bad(format!("sigma_v must be finite and >= 0, got {sigma_v}"));
                }
            }
        }
        Ok(())
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, LearnerSpec::Oracle { .. })
    }

    fn oracle_sigma(&self) -> Option<f64> {
        match self {
            LearnerSpec::Oracle { sigma_v, .. } => Some(*sigma_v),
            _ => None,
        }
    }
}

/// The three learners one estimate needs: outcome regression `g`, conditional
/// propensity `pi`, individual propensity `e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSet {
    pub g: LearnerSpec,
    pub pi: LearnerSpec,
    pub e: LearnerSpec,
}

impl Default for LearnerSet {
    fn default() -> Self {
        LearnerSet {
            g: LearnerSpec::LinearRidge { lambda: 1.0, degree: 2 },
            pi: LearnerSpec::LogisticRidge { lambda: 1.0, degree: 2 },
            e: LearnerSpec::LogisticRidge { lambda: 1.0, degree: 2 },
        }
    }
}

impl LearnerSet {
    pub fn validate(&self) -> Result<()> {
        self.g.validate()?;
        self.pi.validate()?;
        self.e.validate()
    }

    /// Oracle specs for every nuisance of a simulated dataset.
    pub fn oracle(sigma_v: f64) -> Self {
        let spec = LearnerSpec::Oracle { dgp: ORACLE_DGP.into(), sigma_v };
        LearnerSet { g: spec.clone(), pi: spec.clone(), e: spec }
    }
}

/// How to shrink clusters in the conditional-propensity training set so the
/// peer-share feature is not dominated by large clusters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UndersampleRule {
    /// Subsample every cluster down to the dataset's smallest cluster size.
    MinClusterSize,
    /// Subsample down to a fixed size.
    Fixed(usize),
}

impl UndersampleRule {
    pub fn resolve(&self, d: &Dataset) -> Result<usize> {
        match self {
            UndersampleRule::MinClusterSize => Ok(d
                .clusters()
                .iter()
                .map(ClusterData::n)
                .min()
                .expect("dataset has at least one cluster")),
            UndersampleRule::Fixed(m) => {
                if *m < 1 {
                    return Err(Error::Argument("undersample size must be at least 1".into()));
                }
                Ok(*m)
            }
        }
    }
}

/// Cross-fitted predictions for one cluster, in unit order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterFit {
    pub cluster_id: String,
    /// Predicted outcome with treatment forced to 0.
    pub g0: Vec<f64>,
    /// Predicted outcome with treatment forced to 1.
    pub g1: Vec<f64>,
    /// Conditional propensity given peers' observed treatments, clipped.
    pub pi1: Vec<f64>,
    /// Individual propensity from own covariates only, clipped.
    pub e1: Vec<f64>,
    /// The fold this cluster sits in; its fit was trained on the complement.
    pub fold_trained_on: usize,
}

/// Nuisance predictions for every cluster of a dataset, aligned with the
/// dataset's cluster order.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceFit {
    pub clusters: Vec<ClusterFit>,
    pub clip: f64,
}

/// Fit one learner on explicit rows and targets.
pub fn fit_learner(
    spec: &LearnerSpec,
    rows: &[Vec<f64>],
    targets: &[f64],
    task: Task,
) -> Result<Box<dyn Model>> {
    spec.validate()?;
    if rows.is_empty() {
        return Err(Error::Fit("empty training set".into()));
    }
    if rows.len() != targets.len() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} targets",
            rows.len(),
            targets.len()
        )));
    }
    match *spec {
        LearnerSpec::LinearRidge { lambda, degree } => {
            linear::fit_linear_ridge(rows, targets, lambda, degree)
        }
        LearnerSpec::LogisticRidge { lambda, degree } => {
            linear::fit_logistic_ridge(rows, targets, lambda, degree, task)
        }
        LearnerSpec::BoostedStumps { rounds, learning_rate, depth } => {
            boost::fit_boosted(rows, targets, rounds, learning_rate, depth, task)
        }
        LearnerSpec::Knn { k } => knn::fit_knn(rows, targets, k, task),
        LearnerSpec::Oracle { .. } => Err(Error::Argument(
            "oracle learners bypass row-based fitting; pass the spec to fit_nuisances".into(),
        )),
    }
}

/// Subsample clusters larger than `m` down to `m` units, uniformly without
/// replacement. Each cluster's draw is keyed by its id, so the result does
/// not depend on collection order.
pub fn undersample_clusters(
    clusters: &[ClusterData],
    m: usize,
    seed: u64,
) -> Result<Vec<ClusterData>> {
    if m < 1 {
        return Err(Error::Argument("undersample size must be at least 1".into()));
    }
    clusters
        .iter()
        .map(|c| {
            let n = c.n();
            if n <= m {
                return Ok(c.clone());
            }
            let mut rng = stream_rng(derive_seed(seed, hash_id(c.id())), RngDomain::Undersample, 0);
            let mut idx: Vec<usize> = (0..n).collect();
            for t in 0..m {
                let j = t + rng.gen_range(0..n - t);
                idx.swap(t, j);
            }
            let mut keep = idx[..m].to_vec();
            keep.sort_unstable();
            c.subset(&keep)
        })
        .collect()
}

/// Cross-fitted nuisances: for every fold, train each non-oracle learner on
/// the complement clusters (walked in canonical id order, so file row order
/// never matters) and predict the fold's own units. Oracle specs are exact
/// covariate functions and are evaluated directly. `pi1` and `e1` are clipped
/// to `[clip, 1 - clip]`; undersampling applies to the conditional-propensity
/// training set only.
pub fn fit_nuisances(
    d: &Dataset,
    folds: &FoldAssignment,
    learners: &LearnerSet,
    clip: f64,
    undersample: Option<UndersampleRule>,
    seed: u64,
) -> Result<NuisanceFit> {
    if !(clip > 0.0 && clip < 0.5) {
        return Err(Error::Argument(format!("clip must lie in (0, 0.5), got {clip}")));
    }
    learners.validate()?;
    let fold_idx = folds.fold_index_vec(d)?;
    let n_clusters = d.n_clusters();
    let mut g0: Vec<Option<Vec<f64>>> = vec![None; n_clusters];
    let mut g1: Vec<Option<Vec<f64>>> = vec![None; n_clusters];
    let mut pi1: Vec<Option<Vec<f64>>> = vec![None; n_clusters];
    let mut e1: Vec<Option<Vec<f64>>> = vec![None; n_clusters];

    if learners.g.is_oracle() || learners.pi.is_oracle() || learners.e.is_oracle() {
        let cols = OracleColumns::resolve(d)?;
        let gh = GaussHermite::new(GH_NODES)?;
        let g_oracle = learners.g.is_oracle();
        let pi_sigma = learners.pi.oracle_sigma();
        let e_sigma = learners.e.oracle_sigma();
        let computed: Vec<_> = d
            .clusters()
            .par_iter()
            .map(|c| {
                let g = g_oracle.then(|| (cols.g_values(c, 0.0), cols.g_values(c, 1.0)));
                let p = pi_sigma.map(|s| clip_probs(cols.pi_values(c, s, &gh), clip));
                let e = e_sigma.map(|s| clip_probs(cols.e_values(c, s, &gh), clip));
                (g, p, e)
            })
            .collect();
        for (i, (g, p, e)) in computed.into_iter().enumerate() {
            if let Some((a, b)) = g {
                g0[i] = Some(a);
                g1[i] = Some(b);
            }
            pi1[i] = p;
            e1[i] = e;
        }
    }

    let canon = d.canonical_order();
    for k in 0..folds.k() {
        let train: Vec<usize> = canon.iter().copied().filter(|&i| fold_idx[i] != k).collect();
        let eval: Vec<usize> = (0..n_clusters).filter(|&i| fold_idx[i] == k).collect();
        let fit_err = |what: &str, e: Error| Error::Fit(format!("fold {k}: {what} learner: {e}"));

        if !learners.g.is_oracle() {
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for &i in &train {
                let c = &d.clusters()[i];
                for j in 0..c.n() {
                    rows.push(features::outcome_row(c, j, None));
                    targets.push(c.y()[j]);
                }
            }
            let model = fit_learner(&learners.g, &rows, &targets, Task::Regression)
                .map_err(|e| fit_err("outcome", e))?;
            for &i in &eval {
                let c = &d.clusters()[i];
                g0[i] = Some((0..c.n()).map(|j| model.predict_row(&features::outcome_row(c, j, Some(0)))).collect());
                g1[i] = Some((0..c.n()).map(|j| model.predict_row(&features::outcome_row(c, j, Some(1)))).collect());
            }
        }

        if !learners.pi.is_oracle() {
            let task = Task::Classification { clip };
            let sub_owned;
            let train_clusters: Vec<&ClusterData> = if let Some(rule) = undersample {
                let m = rule.resolve(d)?;
                let owned: Vec<ClusterData> =
                    train.iter().map(|&i| d.clusters()[i].clone()).collect();
                sub_owned = undersample_clusters(&owned, m, derive_seed(seed, k as u64))?;
                sub_owned.iter().collect()
            } else {
                train.iter().map(|&i| &d.clusters()[i]).collect()
            };
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for c in train_clusters {
                rows.extend(features::cps_rows(c));
                targets.extend(c.a().iter().map(|&v| v as f64));
            }
            let model = fit_learner(&learners.pi, &rows, &targets, task)
                .map_err(|e| fit_err("conditional propensity", e))?;
            for &i in &eval {
                let c = &d.clusters()[i];
                pi1[i] = Some(clip_probs(model.predict_rows(&features::cps_rows(c)), clip));
            }
        }

        if !learners.e.is_oracle() {
            let task = Task::Classification { clip };
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for &i in &train {
                let c = &d.clusters()[i];
                for j in 0..c.n() {
                    rows.push(features::e_row(c, j));
                    targets.push(c.a()[j] as f64);
                }
            }
            let model = fit_learner(&learners.e, &rows, &targets, task)
                .map_err(|e| fit_err("individual propensity", e))?;
            for &i in &eval {
                let c = &d.clusters()[i];
                let rows: Vec<Vec<f64>> = (0..c.n()).map(|j| features::e_row(c, j)).collect();
                e1[i] = Some(clip_probs(model.predict_rows(&rows), clip));
            }
        }
    }

    let clusters = d
        .clusters()
        .iter()
        .enumerate()
        .map(|(i, c)| ClusterFit {
            cluster_id: c.id().to_string(),
            g0: g0[i].take().expect("every cluster received g0 predictions"),
            g1: g1[i].take().expect("every cluster received g1 predictions"),
            pi1: pi1[i].take().expect("every cluster received pi1 predictions"),
            e1: e1[i].take().expect("every cluster received e1 predictions"),
            fold_trained_on: fold_idx[i],
        })
        .collect();
    Ok(NuisanceFit { clusters, clip })
}

/// Oracle learner specs matching a simulation configuration.
pub fn oracle_learners(cfg: &crate::simlab::SimConfig) -> LearnerSet {
    LearnerSet::oracle(cfg.sigma_v)
}

fn clip_probs(mut v: Vec<f64>, clip: f64) -> Vec<f64> {
    for x in &mut v {
        *x = x.clamp(clip, 1.0 - clip);
    }
    v
}

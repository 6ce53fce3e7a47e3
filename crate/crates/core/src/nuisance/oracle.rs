//! Closed-form nuisance functions for the built-in benchmark generator.
//!
//! These bypass training entirely: given a cluster's covariates they return
//! the generator's true outcome regression, the random-effect-marginalized
//! individual propensity, and the conditional propensity given peers'
//! observed treatments. The conditional propensity integrates the shared
//! logit random effect out of the joint treatment likelihood, which is what
//! makes treatments within a cluster informative about each other.

use crate::error::{Error, Result};
use crate::model::{ClusterData, Dataset};
use crate::numeric::GaussHermite;

pub(crate) const GH_NODES: usize = 30;

/// Column indices of the covariates the benchmark generator uses.
pub(crate) struct OracleColumns {
    w1: usize,
    w2: usize,
    w3: usize,
    c1: usize,
    c2: usize,
}

impl OracleColumns {
    pub(crate) fn resolve(d: &Dataset) -> Result<Self> {
        let missing = |name: &str| {
            Error::Argument(format!(
                "oracle learners need the benchmark column {name}, which is missing"
            ))
        };
        Ok(OracleColumns {
            w1: d.w_index("w__w1").map_err(|_| missing("w__w1"))?,
            w2: d.w_index("w__w2").map_err(|_| missing("w__w2"))?,
            w3: d.w_index("w__w3").map_err(|_| missing("w__w3"))?,
            c1: d.c_index("c__c1").map_err(|_| missing("c__c1"))?,
            c2: d.c_index("c__c2").map_err(|_| missing("c__c2"))?,
        })
    }

    /// Treatment-model linear predictor for unit j.
    fn lin_pred(&self, c: &ClusterData, j: usize) -> f64 {
        let w = c.w_unit().row(j);
        let w1 = w[self.w1];
        let w2 = w[self.w2];
        let w3 = w[self.w3];
        let c1 = c.c_cluster()[self.c1];
        let c2 = c.c_cluster()[self.c2];
        -0.5 + 0.5 * w1 - if w2 > 1.0 { 1.0 } else { 0.0 } + 0.5 * w3 - 0.25 * c1 + c2
    }

    /// True outcome regression with the outcome random effect integrated out.
    pub(crate) fn g_values(&self, c: &ClusterData, arm: f64) -> Vec<f64> {
        let c1 = c.c_cluster()[self.c1];
        let c2 = c.c_cluster()[self.c2];
        (0..c.n())
            .map(|j| {
                let w = c.w_unit().row(j);
                let w1 = w[self.w1];
                let w2 = w[self.w2];
                let w3 = w[self.w3];
                3.0 + (2.1 + w2 * w2 + 3.0 * w3) * arm + 2.0 * w1 - c1 * c1 + w2 * c2
            })
            .collect()
    }

    /// Individual propensity e(1|x): expit(f + V) averaged over V.
    pub(crate) fn e_values(&self, c: &ClusterData, sigma_v: f64, gh: &GaussHermite) -> Vec<f64> {
        (0..c.n())
            .map(|j| {
                let f = self.lin_pred(c, j);
                gh.expect_normal(sigma_v, |v| expit(f + v))
            })
            .collect()
    }

    /// Conditional propensity pi(1 | peers' treatments, covariates).
    ///
    /// Ratio of two quadrature integrals sharing the peer treatment
    /// likelihood; evaluated on the log scale so long products of
    /// probabilities cannot underflow.
    pub(crate) fn pi_values(&self, c: &ClusterData, sigma_v: f64, gh: &GaussHermite) -> Vec<f64> {
        let n = c.n();
        let f: Vec<f64> = (0..n).map(|j| self.lin_pred(c, j)).collect();
        if sigma_v == 0.0 {
            // No shared effect: peers carry no information.
            return f.iter().map(|&fj| expit(fj)).collect();
        }
        let a = c.a();
        let q = gh.nodes.len();
        // Per node: log p and log(1-p) for every unit, plus the full-cluster
        // treatment log likelihood.
        let mut log_p = vec![0.0f64; q * n];
        let mut log_1mp = vec![0.0f64; q * n];
        let mut full = vec![0.0f64; q];
        let scale = std::f64::consts::SQRT_2 * sigma_v;
        for (qi, &x) in gh.nodes.iter().enumerate() {
            let v = scale * x;
            let mut lsum = 0.0;
            for j in 0..n {
                let eta = f[j] + v;
                let lp = -softplus(-eta);
                let l1 = -softplus(eta);
                log_p[qi * n + j] = lp;
                log_1mp[qi * n + j] = l1;
                lsum += if a[j] == 1 { lp } else { l1 };
            }
            full[qi] = lsum;
        }
        let log_w: Vec<f64> = gh.weights.iter().map(|w| w.ln()).collect();
        (0..n)
            .map(|j| {
                let mut num = Vec::with_capacity(q);
                let mut den = Vec::with_capacity(q);
                for qi in 0..q {
                    let own = if a[j] == 1 {
                        log_p[qi * n + j]
                    } else {
                        log_1mp[qi * n + j]
                    };
                    let peers = full[qi] - own;
                    den.push(log_w[qi] + peers);
                    num.push(log_w[qi] + peers + log_p[qi * n + j]);
                }
                (log_sum_exp(&num) - log_sum_exp(&den)).exp()
            })
            .collect()
    }
}

pub(crate) fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ln(1 + e^x) without overflow for large |x|.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RowMatrix;
    use approx::assert_abs_diff_eq;

    fn dataset(clusters: Vec<ClusterData>) -> Dataset {
        Dataset::new(
            clusters,
            vec!["w__w1".into(), "w__w2".into(), "w__w3".into()],
            vec!["c__c1".into(), "c__c2".into(), "c__n".into()],
        )
        .unwrap()
    }

    fn zero_cov_cluster(a: Vec<u8>, y: Vec<f64>) -> ClusterData {
        let n = a.len();
        let rows = vec![vec![0.0, 0.0, 0.0]; n];
        ClusterData::new(
            "c1",
            y,
            a,
            RowMatrix::from_rows(&rows, 3).unwrap(),
            vec![0.0, 0.0],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn g_matches_hand_values() {
        let d = dataset(vec![zero_cov_cluster(vec![1], vec![0.0])]);
        let cols = OracleColumns::resolve(&d).unwrap();
        let g1 = cols.g_values(&d.clusters()[0], 1.0);
        let g0 = cols.g_values(&d.clusters()[0], 0.0);
        assert_abs_diff_eq!(g1[0], 5.1, epsilon = 1e-12);
        assert_abs_diff_eq!(g0[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn e_at_sigma_zero_is_expit_of_lin_pred() {
        let d = dataset(vec![zero_cov_cluster(vec![0], vec![0.0])]);
        let cols = OracleColumns::resolve(&d).unwrap();
        let gh = GaussHermite::new(GH_NODES).unwrap();
        let e = cols.e_values(&d.clusters()[0], 0.0, &gh);
        assert_abs_diff_eq!(e[0], expit(-0.5), epsilon = 1e-12);
        assert_abs_diff_eq!(e[0], 0.3775406687981454, epsilon = 1e-9);
    }

    #[test]
    fn pi_equals_e_without_shared_effect() {
        let mut rng = 0x243f6a8885a308d3u64;
        let mut unif = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        let gh = GaussHermite::new(GH_NODES).unwrap();
        for t in 0..1000 {
            let n = 1 + (unif() * 5.0) as usize;
            let a: Vec<u8> = (0..n).map(|_| (unif() < 0.5) as u8).collect();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    vec![unif() * 4.0 - 2.0, unif() * 4.0 - 2.0, (unif() < 0.3) as u8 as f64]
                })
                .collect();
            let c = ClusterData::new(
                format!("x{t}"),
                vec![0.0; n],
                a,
                RowMatrix::from_rows(&rows, 3).unwrap(),
                vec![unif() * 2.0 - 1.0, (unif() < 0.7) as u8 as f64],
                1.0,
            )
            .unwrap();
            let d = dataset(vec![c]);
            let cols = OracleColumns::resolve(&d).unwrap();
            let e = cols.e_values(&d.clusters()[0], 0.0, &gh);
            let pi = cols.pi_values(&d.clusters()[0], 0.0, &gh);
            for (ev, pv) in e.iter().zip(&pi) {
                assert_abs_diff_eq!(ev, pv, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn conditioning_on_treated_peers_raises_pi() {
        // With a positive shared effect, a treated peer shifts the posterior
        // of V upward, so the conditional propensity must exceed the
        // marginal one.
        let d = dataset(vec![zero_cov_cluster(vec![1, 1], vec![0.0, 0.0])]);
        let cols = OracleColumns::resolve(&d).unwrap();
        let gh = GaussHermite::new(GH_NODES).unwrap();
        let e = cols.e_values(&d.clusters()[0], 1.5, &gh);
        let pi = cols.pi_values(&d.clusters()[0], 1.5, &gh);
        assert!(pi[0] > e[0], "pi={} e={}", pi[0], e[0]);
    }

    #[test]
    fn missing_benchmark_columns_rejected() {
        let c = ClusterData::new(
            "c1",
            vec![1.0],
            vec![1],
            RowMatrix::from_rows(&[vec![0.0]], 1).unwrap(),
            vec![],
            1.0,
        )
        .unwrap();
        let d = Dataset::new(vec![c], vec!["w__other".into()], vec!["c__n".into()]).unwrap();
        let err = OracleColumns::resolve(&d).map(|_| ()).unwrap_err();
        assert!(err.is_input_error());
    }

    #[test]
    fn quadrature_node_count_consistency() {
        // logistic integrands converge geometrically but slow down as sigma
        // grows; 30 nodes carry ~1e-5 accuracy at sigma = 2, far below the
        // Monte Carlo noise anywhere these scores are consumed
        let d = dataset(vec![zero_cov_cluster(vec![1, 0, 1], vec![0.0; 3])]);
        let cols = OracleColumns::resolve(&d).unwrap();
        let gh30 = GaussHermite::new(30).unwrap();
        let gh60 = GaussHermite::new(60).unwrap();
        for (sigma, tol) in [(0.5, 1e-10), (1.0, 1e-8), (2.0, 1e-4)] {
            let a = cols.pi_values(&d.clusters()[0], sigma, &gh30);
            let b = cols.pi_values(&d.clusters()[0], sigma, &gh60);
            for (x, y) in a.iter().zip(&b) {
                assert_abs_diff_eq!(x, y, epsilon = tol);
            }
        }
    }
}

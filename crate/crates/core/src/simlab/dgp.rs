//! Benchmark data generator with cluster-level interference.
//!
//! Each cluster carries three latent draws: cluster covariates (C1, C2), a
//! treatment random effect V that induces within-cluster treatment
//! correlation, and an outcome random effect U that induces outcome
//! correlation. Units then draw covariates (W1, W2, W3), a treatment from a
//! logistic model in the covariates plus V, and an outcome whose treatment
//! effect is 2.1 + W2^2 + 3*W3, which averages to 4.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterData, Dataset, RowMatrix};
use crate::nuisance::oracle::expit;
use crate::numeric::rng::{stream_rng, RngDomain};

/// Population average treatment effect of the benchmark generator.
pub const TRUE_TAU: f64 = 4.0;

/// Distribution of the cluster-level outcome random effect U.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RandomEffectFamily {
    /// U ~ N(0, sigma_u^2).
    #[default]
    Normal,
    /// The fixed four-part mixture: equal parts N(0, 0.5^2), 0.5 * t(5),
    /// Laplace(0, 0.5), and Uniform(-0.25, 0.25). Its variance is about
    /// 0.2969, so the outcome ICC lands near 0.23. `sigma_u` does not
    /// rescale this family.
    Mixture4,
}

impl RandomEffectFamily {
    /// Variance of the random effect at scale `sigma_u`. The mixture family
    /// has a fixed variance, the equal-weight average of its component
    /// variances 0.25, 0.25 * 5/3, 0.5, and 0.0625/3.
    pub fn variance(self, sigma_u: f64) -> f64 {
        match self {
            RandomEffectFamily::Normal => sigma_u * sigma_u,
            RandomEffectFamily::Mixture4 => 0.296875,
        }
    }
}

/// Configuration of one simulated dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_clusters: usize,
    /// Inclusive bounds for the uniform cluster-size draw. Defaults to
    /// [2000/N, 3000/N] so the expected total stays near 2500 units.
    #[serde(default)]
    pub size_range: Option<(usize, usize)>,
    /// Scale of the treatment random effect.
    #[serde(default)]
    pub sigma_v: f64,
    /// Scale of the outcome random effect under the normal family.
    #[serde(default)]
    pub sigma_u: f64,
    #[serde(default)]
    pub family: RandomEffectFamily,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::Argument("simulation needs at least one cluster".into()));
        }
        if !(self.sigma_v.is_finite() && self.sigma_v >= 0.0) {
            return Err(Error::Argument(format!(
                "sigma_v must be finite and nonnegative, got {}",
                self.sigma_v
            )));
        }
        if !(self.sigma_u.is_finite() && self.sigma_u >= 0.0) {
            return Err(Error::Argument(format!(
                "sigma_u must be finite and nonnegative, got {}",
                self.sigma_u
            )));
        }
        self.resolved_size_range().map(|_| ())
    }

    /// The inclusive cluster-size bounds actually used.
    pub fn resolved_size_range(&self) -> Result<(usize, usize)> {
        let (lo, hi) = match self.size_range {
            Some(r) => r,
            None => (2000 / self.n_clusters.max(1), 3000 / self.n_clusters.max(1)),
        };
        if lo < 1 {
            return Err(Error::Argument(format!(
                "cluster sizes must be at least 1, got range [{lo}, {hi}]; \
                 pass an explicit size_range when n_clusters exceeds 2000"
            )));
        }
        if lo > hi {
            return Err(Error::Argument(format!("empty size range [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }
}

fn sample_u<R: Rng>(rng: &mut R, family: RandomEffectFamily, sigma_u: f64) -> f64 {
    match family {
        RandomEffectFamily::Normal => sigma_u * rng.sample::<f64, _>(StandardNormal),
        RandomEffectFamily::Mixture4 => match rng.gen_range(0..4u8) {
            0 => 0.5 * rng.sample::<f64, _>(StandardNormal),
            1 => 0.5 * StudentT::new(5.0).unwrap().sample(rng),
            2 => {
                // Laplace(0, 1/2) by inverting its CDF; the floor keeps the
                // log finite on the measure-zero endpoint
                let u: f64 = rng.gen_range(-0.5..0.5);
                -0.5 * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
            _ => rng.gen_range(-0.25..0.25),
        },
    }
}

/// Generate one dataset. All randomness flows through a single stream seeded
/// by `cfg.seed`, with a fixed draw order per cluster (size, C1, C2, V, U,
/// then W1, W2, W3, A, Y per unit), so a seed pins the dataset exactly.
pub fn simulate_dgp(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (lo, hi) = cfg.resolved_size_range()?;
    let mut rng = stream_rng(cfg.seed, RngDomain::Simulate, 0);
    let mut clusters = Vec::with_capacity(cfg.n_clusters);
    for i in 0..cfg.n_clusters {
        let n = rng.gen_range(lo..=hi);
        let c1: f64 = rng.sample(StandardNormal);
        let c2 = f64::from(rng.gen_bool(0.7));
        let v = cfg.sigma_v * rng.sample::<f64, _>(StandardNormal);
        let u = sample_u(&mut rng, cfg.family, cfg.sigma_u);
        let mut y = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for _ in 0..n {
            let w1: f64 = rng.sample(StandardNormal);
            let w2: f64 = rng.sample(StandardNormal);
            let w3 = f64::from(rng.gen_bool(0.3));
            let f = -0.5 + 0.5 * w1 - f64::from(w2 > 1.0) + 0.5 * w3 - 0.25 * c1 + c2;
            let arm = u8::from(rng.gen_bool(expit(f + v)));
            let mean = 3.0
                + (2.1 + w2 * w2 + 3.0 * w3) * f64::from(arm)
                + 2.0 * w1
                - c1 * c1
                + w2 * c2
                + u;
            y.push(mean + rng.sample::<f64, _>(StandardNormal));
            a.push(arm);
            w.push(vec![w1, w2, w3]);
        }
        clusters.push(ClusterData::new(
            format!("c{i:06}"),
            y,
            a,
            RowMatrix::from_rows(&w, 3)?,
            vec![c1, c2],
            1.0,
        )?);
    }
    Dataset::new(
        clusters,
        vec!["w__w1".into(), "w__w2".into(), "w__w3".into()],
        vec!["c__c1".into(), "c__c2".into(), "c__n".into()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base_cfg() -> SimConfig {
        SimConfig {
            n_clusters: 500,
            size_range: None,
            sigma_v: 0.0,
            sigma_u: 0.5,
            family: RandomEffectFamily::Normal,
            seed: 7,
        }
    }

    #[test]
    fn default_size_law() {
        let cfg = base_cfg();
        assert_eq!(cfg.resolved_size_range().unwrap(), (4, 6));
        let d = simulate_dgp(&cfg).unwrap();
        assert_eq!(d.n_clusters(), 500);
        for c in d.clusters() {
            assert!((4..=6).contains(&c.n()));
        }
        let total: usize = d.clusters().iter().map(ClusterData::n).sum();
        assert!((2200..=2800).contains(&total), "total {total}");
    }

    #[test]
    fn oversized_n_requires_explicit_range() {
        let cfg = SimConfig { n_clusters: 5000, ..base_cfg() };
        assert!(simulate_dgp(&cfg).is_err());
        let cfg = SimConfig { n_clusters: 5000, size_range: Some((2, 3)), ..base_cfg() };
        assert!(simulate_dgp(&cfg).is_ok());
        let cfg = SimConfig { size_range: Some((0, 3)), ..base_cfg() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { size_range: Some((4, 3)), ..base_cfg() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fixed_seed_reproduces_dataset() {
        let cfg = base_cfg();
        let a = simulate_dgp(&cfg).unwrap();
        let b = simulate_dgp(&cfg).unwrap();
        assert_eq!(a.n_clusters(), b.n_clusters());
        for (x, y) in a.clusters().iter().zip(b.clusters()) {
            assert_eq!(x.id(), y.id());
            assert_eq!(x.y(), y.y());
            assert_eq!(x.a(), y.a());
            assert_eq!(x.c_cluster(), y.c_cluster());
        }
        let c = simulate_dgp(&SimConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.clusters()[0].y(), c.clusters()[0].y());
    }

    #[test]
    fn moment_checks() {
        // one big dataset stands in for population draws
        let cfg = SimConfig {
            n_clusters: 40_000,
            size_range: Some((5, 5)),
            sigma_v: 1.0,
            sigma_u: 1.0,
            seed: 21,
            family: RandomEffectFamily::Normal,
        };
        let d = simulate_dgp(&cfg).unwrap();
        let (mut w3_sum, mut c2_sum, mut effect_sum, mut units) = (0.0, 0.0, 0.0, 0usize);
        for c in d.clusters() {
            c2_sum += c.c_cluster()[1];
            for j in 0..c.n() {
                let row = c.w_unit().row(j);
                w3_sum += row[2];
                effect_sum += 2.1 + row[1] * row[1] + 3.0 * row[2];
                units += 1;
            }
        }
        assert_abs_diff_eq!(w3_sum / units as f64, 0.3, epsilon = 0.01);
        assert_abs_diff_eq!(c2_sum / cfg.n_clusters as f64, 0.7, epsilon = 0.01);
        assert_abs_diff_eq!(effect_sum / units as f64, TRUE_TAU, epsilon = 0.02);
    }

    #[test]
    fn mixture_is_symmetric_with_known_variance() {
        let mut rng = stream_rng(3, RngDomain::Simulate, 1);
        let n = 1_000_000usize;
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let u = sample_u(&mut rng, RandomEffectFamily::Mixture4, 0.0);
            s1 += u;
            s2 += u * u;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mixture mean {mean}");
        // 1/4 * (0.25 + 0.25 * 5/3 + 0.5 + 0.0625/3) = 0.296875
        assert_abs_diff_eq!(var, RandomEffectFamily::Mixture4.variance(0.0), epsilon = 0.01);
    }

    #[test]
    fn family_variance() {
        assert_eq!(RandomEffectFamily::Normal.variance(1.5), 2.25);
        assert_eq!(RandomEffectFamily::Normal.variance(0.0), 0.0);
        // sigma_u does not rescale the mixture
        assert_eq!(
            RandomEffectFamily::Mixture4.variance(2.0),
            RandomEffectFamily::Mixture4.variance(0.0)
        );
        assert_eq!(RandomEffectFamily::Mixture4.variance(0.0), 0.296875);
    }

    #[test]
    fn sigma_v_raises_treatment_clustering() {
        let quiet = simulate_dgp(&SimConfig { sigma_v: 0.0, seed: 5, ..base_cfg() }).unwrap();
        let loud = simulate_dgp(&SimConfig { sigma_v: 2.5, seed: 5, ..base_cfg() }).unwrap();
        // variance of cluster-level treated fractions grows with sigma_v
        let frac_var = |d: &Dataset| {
            let fracs: Vec<f64> = d
                .clusters()
                .iter()
                .map(|c| c.treated_count() as f64 / c.n() as f64)
                .collect();
            crate::numeric::stats::sample_variance(&fracs)
        };
        assert!(frac_var(&loud) > 1.5 * frac_var(&quiet));
    }
}

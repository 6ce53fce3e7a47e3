//! Diagnostics for the fitted propensity scores.
//!
//! Overlap summaries histogram the conditional and individual scores by
//! treatment arm so thin common support shows up before it poisons the
//! weighting. Balance t-statistics probe whether inverse weighting by the
//! fitted scores actually removes the arm difference in each covariate,
//! sampling one unit per cluster so within-cluster dependence cannot
//! masquerade as precision.

use serde::Serialize;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::nuisance::NuisanceFit;
use crate::numeric::rng::{stream_rng, RngDomain};
use crate::numeric::stats::{lower_median, quantile_sorted, sample_sd};

const BINS: usize = 20;

/// Fixed-width histogram of probabilities on [0,1].
#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    /// Counts over 20 equal bins; the last bin includes 1.0.
    pub bins: Vec<usize>,
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    /// Values at or beyond the clipping threshold on either side.
    pub boundary_count: usize,
}

impl Histogram {
    fn from_values(mut values: Vec<f64>, clip: f64) -> Histogram {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mut bins = vec![0usize; BINS];
        let mut boundary = 0usize;
        for &v in &values {
            bins[((v * BINS as f64) as usize).min(BINS - 1)] += 1;
            if v <= clip || v >= 1.0 - clip {
                boundary += 1;
            }
        }
        if n == 0 {
            return Histogram {
                bins,
                n,
                min: 0.0,
                max: 0.0,
                q25: 0.0,
                q50: 0.0,
                q75: 0.0,
                boundary_count: 0,
            };
        }
        Histogram {
            bins,
            n,
            min: values[0],
            max: values[n - 1],
            q25: quantile_sorted(&values, 0.25),
            q50: quantile_sorted(&values, 0.50),
            q75: quantile_sorted(&values, 0.75),
            boundary_count: boundary,
        }
    }
}

/// Histograms of one score split by observed treatment arm.
#[derive(Clone, Debug, Serialize)]
pub struct ArmSplit {
    pub treated: Histogram,
    pub control: Histogram,
}

/// Overlap report for both fitted scores.
#[derive(Clone, Debug, Serialize)]
pub struct OverlapSummary {
    /// Conditional propensity given peers' treatments.
    pub pi: ArmSplit,
    /// Individual propensity from own covariates.
    pub e: ArmSplit,
    pub clip: f64,
    /// True when any score sits at the clipping boundary.
    pub boundary_mass: bool,
}

fn check_alignment(d: &Dataset, fit: &NuisanceFit) -> Result<()> {
    if fit.clusters.len() != d.n_clusters() {
        return Err(Error::Consistency(format!(
            "nuisance fit covers {} clusters, dataset has {}",
            fit.clusters.len(),
            d.n_clusters()
        )));
    }
    for (c, f) in d.clusters().iter().zip(&fit.clusters) {
        if c.id() != f.cluster_id || f.pi1.len() != c.n() || f.e1.len() != c.n() {
            return Err(Error::Consistency(format!(
                "nuisance fit does not align with cluster '{}'",
                c.id()
            )));
        }
    }
    Ok(())
}

/// Histogram the fitted scores by treatment arm.
pub fn overlap_diagnostic(d: &Dataset, fit: &NuisanceFit) -> Result<OverlapSummary> {
    check_alignment(d, fit)?;
    let mut pi = (Vec::new(), Vec::new());
    let mut e = (Vec::new(), Vec::new());
    for (c, f) in d.clusters().iter().zip(&fit.clusters) {
        for j in 0..c.n() {
            if c.a()[j] == 1 {
                pi.0.push(f.pi1[j]);
                e.0.push(f.e1[j]);
            } else {
                pi.1.push(f.pi1[j]);
                e.1.push(f.e1[j]);
            }
        }
    }
    let clip = fit.clip;
    let pi = ArmSplit {
        treated: Histogram::from_values(pi.0, clip),
        control: Histogram::from_values(pi.1, clip),
    };
    let e = ArmSplit {
        treated: Histogram::from_values(e.0, clip),
        control: Histogram::from_values(e.1, clip),
    };
    let boundary_mass = [&pi.treated, &pi.control, &e.treated, &e.control]
        .iter()
        .any(|h| h.boundary_count > 0);
    Ok(OverlapSummary { pi, e, clip, boundary_mass })
}

/// Weighted-balance t-statistics per covariate under three weightings.
#[derive(Clone, Debug, Serialize)]
pub struct BalanceTable {
    pub covariates: Vec<String>,
    /// Weighting by the overall treated share.
    pub t_no: Vec<f64>,
    /// Weighting by the fitted individual propensity.
    pub t_e: Vec<f64>,
    /// Weighting by the fitted conditional propensity.
    pub t_pi: Vec<f64>,
    pub n_draws: usize,
}

/// Compute balance t-statistics by repeatedly sampling one unit per cluster.
///
/// Each draw forms, per covariate x and per weighting p, the contrast
/// a*x/p - (1-a)*x/(1-p) across the sampled units and reduces it to
/// t = mean * sqrt(N) / sd. The reported statistic is the lower median over
/// draws, which damps the sampling noise without averaging away sign.
pub fn balance_tstats(
    d: &Dataset,
    fit: &NuisanceFit,
    n_draws: usize,
    seed: u64,
) -> Result<BalanceTable> {
    if n_draws == 0 {
        return Err(Error::Argument("balance diagnostics need at least one draw".into()));
    }
    check_alignment(d, fit)?;
    let (mut treated, mut units) = (0usize, 0usize);
    for c in d.clusters() {
        treated += c.treated_count();
        units += c.n();
    }
    if treated == 0 || treated == units {
        return Err(Error::Argument(
            "balance diagnostics need both treated and control units".into(),
        ));
    }
    let p_hat = treated as f64 / units as f64;

    let mut covariates: Vec<String> = d.w_names().to_vec();
    covariates.extend(d.c_names().iter().cloned());
    let n_cov = covariates.len();
    let n_w = d.w_names().len();
    let n = d.n_clusters();
    let order = d.canonical_order();

    // t-statistics per draw, grouped by weighting then covariate
    let mut draws_no = vec![Vec::with_capacity(n_draws); n_cov];
    let mut draws_e = vec![Vec::with_capacity(n_draws); n_cov];
    let mut draws_pi = vec![Vec::with_capacity(n_draws); n_cov];

    let mut psi = vec![vec![0.0f64; n]; 3 * n_cov];
    for draw in 0..n_draws {
        let mut rng = stream_rng(seed, RngDomain::BalanceDraw, draw as u64);
        for (slot, &i) in order.iter().enumerate() {
            let c = &d.clusters()[i];
            let f = &fit.clusters[i];
            let j = rng.gen_range(0..c.n());
            let a = c.a_f64(j);
            let w = c.w_unit().row(j);
            let weights = [p_hat, f.e1[j], f.pi1[j]];
            for (h, &p) in weights.iter().enumerate() {
                let scale = a / p - (1.0 - a) / (1.0 - p);
                for (v, row) in w.iter().zip(h * n_cov..) {
                    psi[row][slot] = scale * v;
                }
                for (v, row) in c.c_cluster().iter().zip(h * n_cov + n_w..) {
                    psi[row][slot] = scale * v;
                }
            }
        }
        for cov in 0..n_cov {
            for (h, dst) in
                [&mut draws_no, &mut draws_e, &mut draws_pi].into_iter().enumerate()
            {
                dst[cov].push(t_statistic(&psi[h * n_cov + cov]));
            }
        }
    }

    let reduce = |per_cov: Vec<Vec<f64>>| -> Vec<f64> {
        per_cov.iter().map(|ts| lower_median(ts)).collect()
    };
    Ok(BalanceTable {
        covariates,
        t_no: reduce(draws_no),
        t_e: reduce(draws_e),
        t_pi: reduce(draws_pi),
        n_draws,
    })
}

fn t_statistic(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = sample_sd(values);
    if !sd.is_finite() || sd <= 1e-12 {
        return 0.0;
    }
    mean * n.sqrt() / sd
}

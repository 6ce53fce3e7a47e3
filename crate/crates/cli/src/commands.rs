//! The five subcommands. Each returns the JSON report it prints, so `main`
//! owns process exit, and writes file artifacts only under `--out`. Reports
//! serialize structs with fixed field order, so a given config always
//! produces byte-identical output.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use mlcdr_core::simlab::{estimate_repeated, TRUE_TAU};
use mlcdr_core::{
    balance_tstats, efficiency_sweep, fit_nuisances, icc_binary_anova, load_dataset,
    oracle_treatment_residuals, overlap_diagnostic, run_monte_carlo, simulate_dgp, split_clusters,
    subgroup_effect, validate_dataset, BalanceTable, BetaModel, Error, EstimatorConfig,
    LearnerSet, MetricsTable, Method, OverlapSummary, RandomEffectFamily, Result, SimConfig,
    SweepPoint, ValidationReport,
};

use crate::config::{self, EstimatorFlags, Settings};
use crate::svg;

fn to_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("report serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn parse_size_range(text: Option<&str>) -> Result<Option<(usize, usize)>> {
    let Some(text) = text else { return Ok(None) };
    let err = || Error::Argument(format!("size range must look like \"lo:hi\", got '{text}'"));
    match text.split(':').collect::<Vec<_>>()[..] {
        [lo, hi] => Ok(Some((
            lo.trim().parse().map_err(|_| err())?,
            hi.trim().parse().map_err(|_| err())?,
        ))),
        _ => Err(err()),
    }
}

/// Estimate the weighted average treatment effect from a CSV dataset.
#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Input CSV with cluster_id, y, a, w__*, c__* columns.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON config; command line flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: EstimatorFlags,
    /// Directory for report.json; the report always goes to stdout too.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EstimateReport {
    method: Method,
    tau: f64,
    se: f64,
    ci: (f64, f64),
    level: f64,
    n_clusters: usize,
    folds: usize,
    splits: usize,
    /// Influence means per fold of the split whose estimate is the median.
    per_fold_tau: Vec<f64>,
    /// Covariance coefficients per fold of that split; null for aipw.
    beta: Option<Vec<BetaModel>>,
    diagnostics: RunDiagnostics,
    subgroups: Vec<SubgroupRow>,
}

#[derive(Serialize)]
struct RunDiagnostics {
    validation: ValidationReport,
    /// Point estimate of every split, split-index order.
    split_taus: Vec<f64>,
    median_split: usize,
    /// True when any covariance coefficient of the median split hit its bound.
    beta_clamped: bool,
}

#[derive(Serialize)]
struct SubgroupRow {
    column: String,
    p_hat: f64,
    tau: f64,
    se: f64,
    ci: (f64, f64),
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<String> {
    let file = config::load(args.config.as_deref())?;
    let base = EstimatorConfig { splits: 5, ..EstimatorConfig::default() };
    let s = config::resolve(base, &file, &args.flags);
    let d = load_dataset(&args.data)?;
    let (agg, splits) = estimate_repeated(&d, &s.est, s.seed)?;
    let med = &splits[agg.median_split];
    let beta_clamped = med
        .beta
        .as_ref()
        .is_some_and(|models| models.iter().any(|m| m.clamped.iter().any(|&c| c)));
    let mut subgroups = Vec::new();
    for column in &s.subgroups {
        let dw = d.reweight_by_indicator(column)?;
        let (agg_w, splits_w) = estimate_repeated(&dw, &s.est, s.seed)?;
        let sub = subgroup_effect(&dw, column, &splits_w[agg_w.median_split])?;
        subgroups.push(SubgroupRow {
            ci: sub.confidence_interval(s.est.level)?,
            se: sub.se(),
            column: sub.column,
            p_hat: sub.p_hat,
            tau: sub.tau,
        });
    }
    let report = EstimateReport {
        method: s.est.method,
        tau: agg.tau_med,
        se: agg.se(),
        ci: agg.confidence_interval(s.est.level)?,
        level: s.est.level,
        n_clusters: agg.n_clusters,
        folds: s.est.folds,
        splits: agg.s,
        per_fold_tau: med.per_fold_tau.clone(),
        beta: med.beta.clone(),
        diagnostics: RunDiagnostics {
            validation: validate_dataset(&d),
            split_taus: splits.iter().map(|e| e.tau).collect(),
            median_split: agg.median_split,
            beta_clamped,
        },
        subgroups,
    };
    let text = to_pretty(&report)?;
    if let Some(dir) = &args.out {
        write_artifact(dir, "report.json", &text)?;
    }
    Ok(text)
}

/// Benchmark scenario of the data generator.
#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum DgpArg {
    /// Normal cluster random effects on treatment and outcome.
    Table1,
    /// Four-part mixture outcome random effect.
    Table3,
}

impl DgpArg {
    fn family(self) -> RandomEffectFamily {
        match self {
            DgpArg::Table1 => RandomEffectFamily::Normal,
            DgpArg::Table3 => RandomEffectFamily::Mixture4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DgpArg::Table1 => "table1",
            DgpArg::Table3 => "table3",
        }
    }
}

/// Monte Carlo bias, spread, and coverage on the benchmark generator.
#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Benchmark scenario.
    #[arg(long, value_enum, default_value = "table1")]
    pub dgp: DgpArg,
    #[arg(long, default_value_t = 500)]
    pub n_clusters: usize,
    /// Scale of the treatment random effect.
    #[arg(long, default_value_t = 0.0)]
    pub sigma_v: f64,
    /// Scale of the outcome random effect (normal family only).
    #[arg(long, default_value_t = 0.5)]
    pub sigma_u: f64,
    /// Inclusive cluster-size bounds "lo:hi"; the default keeps about 2500
    /// total units regardless of the cluster count.
    #[arg(long)]
    pub size_range: Option<String>,
    /// Number of replications.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Use the generator's exact nuisances instead of learned ones.
    #[arg(long)]
    pub oracle: bool,
    /// Effect the bias and coverage are judged against.
    #[arg(long, default_value_t = TRUE_TAU)]
    pub true_tau: f64,
    /// JSON config; command line flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: EstimatorFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateReport {
    dgp: String,
    family: RandomEffectFamily,
    n_clusters: usize,
    sigma_v: f64,
    sigma_u: f64,
    size_range: (usize, usize),
    reps: usize,
    true_tau: f64,
    oracle: bool,
    method: Method,
    folds: usize,
    splits: usize,
    table: MetricsTable,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let file = config::load(args.config.as_deref())?;
    let mut s = config::resolve(EstimatorConfig::default(), &file, &args.flags);
    if args.oracle {
        s.est.learners = LearnerSet::oracle(args.sigma_v);
    }
    let sim = SimConfig {
        n_clusters: args.n_clusters,
        size_range: parse_size_range(args.size_range.as_deref())?,
        sigma_v: args.sigma_v,
        sigma_u: args.sigma_u,
        family: args.dgp.family(),
        // run_monte_carlo derives each replication's data seed itself
        seed: 0,
    };
    let table = run_monte_carlo(&sim, &s.est, args.reps, args.true_tau, s.seed)?;
    let report = SimulateReport {
        dgp: args.dgp.name().to_string(),
        family: sim.family,
        n_clusters: sim.n_clusters,
        sigma_v: sim.sigma_v,
        sigma_u: sim.sigma_u,
        size_range: sim.resolved_size_range()?,
        reps: args.reps,
        true_tau: args.true_tau,
        oracle: args.oracle,
        method: s.est.method,
        folds: s.est.folds,
        splits: s.est.splits,
        table,
    };
    let text = to_pretty(&report)?;
    if let Some(dir) = &args.out {
        write_artifact(dir, "report.json", &text)?;
        write_artifact(dir, "metrics.csv", &report.table.to_csv())?;
    }
    Ok(text)
}

/// Intra-cluster correlation of outcomes and treatments.
#[derive(Args, Debug)]
pub struct IccArgs {
    /// Compute ANOVA-type ICCs from this CSV via fitted nuisance residuals;
    /// without it, a simulated benchmark dataset is scored instead.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Benchmark scenario when simulating.
    #[arg(long, value_enum, conflicts_with = "data")]
    pub dgp: Option<DgpArg>,
    #[arg(long, conflicts_with = "data")]
    pub n_clusters: Option<usize>,
    #[arg(long, conflicts_with = "data")]
    pub sigma_v: Option<f64>,
    #[arg(long, conflicts_with = "data")]
    pub sigma_u: Option<f64>,
    /// Inclusive cluster-size bounds "lo:hi" when simulating.
    #[arg(long, conflicts_with = "data")]
    pub size_range: Option<String>,
    /// JSON config supplying learners for the data path.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cross-fitting folds for the data path.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Clip fitted propensities into [clip, 1-clip].
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct IccReport {
    source: String,
    n_clusters: usize,
    n_units: usize,
    sigma_v: Option<f64>,
    sigma_u: Option<f64>,
    family: Option<RandomEffectFamily>,
    /// Outcome ICC: model-based when simulating, ANOVA on outcome residuals
    /// from the fitted regression on data.
    icc_y: f64,
    /// Treatment ICC: ANOVA on propensity residuals, exact ones when
    /// simulating and fitted ones on data.
    icc_a: f64,
    icc_y_basis: String,
    icc_a_basis: String,
}

pub fn cmd_icc(args: &IccArgs) -> Result<String> {
    let file = config::load(args.config.as_deref())?;
    let flags = EstimatorFlags {
        folds: args.folds,
        clip: args.clip,
        seed: args.seed,
        ..Default::default()
    };
    let s = config::resolve(EstimatorConfig::default(), &file, &flags);
    let report = match &args.data {
        Some(path) => icc_from_data(path, &s)?,
        None => icc_from_simulation(args, &s)?,
    };
    let text = to_pretty(&report)?;
    if let Some(dir) = &args.out {
        write_artifact(dir, "report.json", &text)?;
    }
    Ok(text)
}

fn icc_from_data(path: &Path, s: &Settings) -> Result<IccReport> {
    let d = load_dataset(path)?;
    if d.clusters().iter().all(|c| c.n() == 1) {
        return Err(Error::Argument(
            "the ANOVA ICC is undefined when every cluster has one unit".into(),
        ));
    }
    let folds = split_clusters(&d, s.est.folds, s.seed)?;
    let fit = fit_nuisances(&d, &folds, &s.est.learners, s.est.clip, s.est.undersample, s.seed)?;
    let mut a_res = Vec::with_capacity(d.n_clusters());
    let mut y_res = Vec::with_capacity(d.n_clusters());
    for (c, f) in d.clusters().iter().zip(&fit.clusters) {
        a_res.push((0..c.n()).map(|j| c.a_f64(j) - f.e1[j]).collect::<Vec<f64>>());
        y_res.push(
            (0..c.n())
                .map(|j| c.y()[j] - if c.a()[j] == 1 { f.g1[j] } else { f.g0[j] })
                .collect::<Vec<f64>>(),
        );
    }
    Ok(IccReport {
        source: "data".into(),
        n_clusters: d.n_clusters(),
        n_units: d.n_units(),
        sigma_v: None,
        sigma_u: None,
        family: None,
        // the ANOVA estimator applies to any residuals, binary or continuous
        icc_y: icc_binary_anova(&y_res)?,
        icc_a: icc_binary_anova(&a_res)?,
        icc_y_basis: "anova".into(),
        icc_a_basis: "anova".into(),
    })
}

fn icc_from_simulation(args: &IccArgs, s: &Settings) -> Result<IccReport> {
    let dgp = args.dgp.unwrap_or(DgpArg::Table1);
    let sigma_v = args.sigma_v.unwrap_or(0.0);
    let sigma_u = args.sigma_u.unwrap_or(0.5);
    let cfg = SimConfig {
        n_clusters: args.n_clusters.unwrap_or(500),
        size_range: parse_size_range(args.size_range.as_deref())?,
        sigma_v,
        sigma_u,
        family: dgp.family(),
        seed: s.seed,
    };
    let d = simulate_dgp(&cfg)?;
    let icc_a = icc_binary_anova(&oracle_treatment_residuals(&d, sigma_v)?)?;
    let v = cfg.family.variance(sigma_u);
    Ok(IccReport {
        source: "simulated".into(),
        n_clusters: d.n_clusters(),
        n_units: d.n_units(),
        sigma_v: Some(sigma_v),
        sigma_u: Some(sigma_u),
        family: Some(cfg.family),
        icc_y: v / (1.0 + v),
        icc_a,
        icc_y_basis: "model".into(),
        icc_a_basis: "anova".into(),
    })
}

/// Relative-efficiency grid over the random-effect scales.
#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Axis values "lo:hi:step" (inclusive) or a single number; sets the
    /// sigma_v axis, and the sigma_u axis too unless --grid-u is given.
    #[arg(long, default_value = "0:2:0.5")]
    pub grid: String,
    /// Separate sigma_u axis in the same format.
    #[arg(long)]
    pub grid_u: Option<String>,
    /// Replications per grid point.
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 100)]
    pub n_clusters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also render sweep.svg under --out.
    #[arg(long, requires = "out")]
    pub svg: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SweepReport {
    sigma_v_axis: Vec<f64>,
    sigma_u_axis: Vec<f64>,
    reps: usize,
    n_clusters: usize,
    points: Vec<SweepPoint>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String> {
    let vs = parse_axis(&args.grid)?;
    let us = match &args.grid_u {
        Some(g) => parse_axis(g)?,
        None => vs.clone(),
    };
    let mut grid = Vec::with_capacity(vs.len() * us.len());
    for &v in &vs {
        for &u in &us {
            grid.push((v, u));
        }
    }
    let points = efficiency_sweep(&grid, args.reps, args.n_clusters, args.seed)?;
    let report = SweepReport {
        sigma_v_axis: vs.clone(),
        sigma_u_axis: us.clone(),
        reps: args.reps,
        n_clusters: args.n_clusters,
        points,
    };
    let text = to_pretty(&report)?;
    if let Some(dir) = &args.out {
        write_artifact(dir, "report.json", &text)?;
        write_artifact(dir, "sweep.csv", &sweep_csv(&report.points))?;
        if args.svg {
            write_artifact(dir, "sweep.svg", &svg::sweep_heatmap(&report.points, &vs, &us))?;
        }
    }
    Ok(text)
}

fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("sigma_v,sigma_u,icc_a,icc_y,rho\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.sigma_v, p.sigma_u, p.icc_a, p.icc_y, p.rho
        ));
    }
    out
}

/// Parse "lo:hi:step" into inclusive axis values, or a single number into a
/// one-value axis. Values are scales, so negatives are rejected here where
/// they still map to a clean usage error.
fn parse_axis(text: &str) -> Result<Vec<f64>> {
    let err = || {
        Error::Argument(format!(
            "grid must be a nonnegative number or \"lo:hi:step\", got '{text}'"
        ))
    };
    let nums = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| err()))
        .collect::<Result<Vec<f64>>>()?;
    match nums[..] {
        [v] if v.is_finite() && v >= 0.0 => Ok(vec![v]),
        [lo, hi, step] if lo >= 0.0 && hi.is_finite() && lo <= hi && step > 0.0 => {
            let mut vals = Vec::new();
            let mut k = 0usize;
            loop {
                let v = lo + step * k as f64;
                if v > hi + 1e-9 * step.max(1.0) {
                    break;
                }
                vals.push(v);
                k += 1;
            }
            Ok(vals)
        }
        _ => Err(err()),
    }
}

/// Overlap histograms and weighted-balance t-statistics.
#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Input CSV with cluster_id, y, a, w__*, c__* columns.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON config; learners, draws, and undersampling live here.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Draws of one unit per cluster for the balance statistics.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Cross-fitting folds behind the scored nuisances.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Clip fitted propensities into [clip, 1-clip].
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DiagnoseReport {
    n_clusters: usize,
    n_units: usize,
    folds: usize,
    draws: usize,
    validation: ValidationReport,
    balance: BalanceTable,
    overlap: OverlapSummary,
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<String> {
    let file = config::load(args.config.as_deref())?;
    let flags = EstimatorFlags {
        folds: args.folds,
        clip: args.clip,
        seed: args.seed,
        ..Default::default()
    };
    let s = config::resolve(EstimatorConfig::default(), &file, &flags);
    let draws = args.draws.unwrap_or(s.draws);
    let d = load_dataset(&args.data)?;
    let folds = split_clusters(&d, s.est.folds, s.seed)?;
    let fit = fit_nuisances(&d, &folds, &s.est.learners, s.est.clip, s.est.undersample, s.seed)?;
    let report = DiagnoseReport {
        n_clusters: d.n_clusters(),
        n_units: d.n_units(),
        folds: s.est.folds,
        draws,
        validation: validate_dataset(&d),
        balance: balance_tstats(&d, &fit, draws, s.seed)?,
        overlap: overlap_diagnostic(&d, &fit)?,
    };
    let text = to_pretty(&report)?;
    if let Some(dir) = &args.out {
        write_artifact(dir, "report.json", &text)?;
        write_artifact(dir, "balance.csv", &balance_csv(&report.balance))?;
    }
    Ok(text)
}

fn balance_csv(t: &BalanceTable) -> String {
    let mut out = String::from("covariate,t_no,t_e,t_pi\n");
    for (i, name) in t.covariates.iter().enumerate() {
        out.push_str(&format!(
            "{name},{:.4},{:.4},{:.4}\n",
            t.t_no[i], t.t_e[i], t.t_pi[i]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        assert_eq!(parse_axis("0:2:0.5").unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_axis("0.7").unwrap(), vec![0.7]);
        assert_eq!(parse_axis("1:1:0.5").unwrap(), vec![1.0]);
        assert_eq!(parse_axis("0:0.3:0.1").unwrap().len(), 4);
        assert!(parse_axis("0:2").is_err());
        assert!(parse_axis("2:0:0.5").is_err());
        assert!(parse_axis("0:2:0").is_err());
        assert!(parse_axis("-1:2:0.5").is_err());
        assert!(parse_axis("abc").is_err());
    }

    #[test]
    fn size_range_parsing() {
        assert_eq!(parse_size_range(None).unwrap(), None);
        assert_eq!(parse_size_range(Some("2:5")).unwrap(), Some((2, 5)));
        assert!(parse_size_range(Some("2")).is_err());
        assert!(parse_size_range(Some("2:x")).is_err());
    }

    #[test]
    fn csv_shapes() {
        let points = vec![SweepPoint {
            sigma_v: 0.0,
            sigma_u: 0.5,
            icc_a: 0.01,
            icc_y: 0.2,
            rho: 1.25,
        }];
        assert_eq!(sweep_csv(&points), "sigma_v,sigma_u,icc_a,icc_y,rho\n0,0.5,0.01,0.2,1.25\n");
        let t = BalanceTable {
            covariates: vec!["w__x".into()],
            t_no: vec![1.25],
            t_e: vec![-0.5],
            t_pi: vec![0.0],
            n_draws: 3,
        };
        assert_eq!(balance_csv(&t), "covariate,t_no,t_e,t_pi\nw__x,1.2500,-0.5000,0.0000\n");
    }
}

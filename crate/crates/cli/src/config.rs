//! Run configuration: JSON config files plus command line overrides.
//!
//! A config file makes a run archivable; flags exist for quick variations.
//! Resolution order is command defaults, then the file, then flags, so a flag
//! always wins over the file.

use std::path::Path;

use serde::Deserialize;

use mlcdr_core::{Error, EstimatorConfig, LearnerSet, Method, Result, StrataSpec, UndersampleRule};

/// Estimator settings accepted in a JSON config file. Every field is
/// optional; omitted ones fall back to the command's defaults. Unknown keys
/// are rejected so a typo cannot silently revert to a default.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub method: Option<Method>,
    pub folds: Option<usize>,
    pub splits: Option<usize>,
    pub learners: Option<LearnerSet>,
    pub strata: Option<StrataSpec>,
    pub clip: Option<f64>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub undersample: Option<UndersampleRule>,
    /// Binary cluster covariates to report subgroup effects for.
    pub subgroups: Vec<String>,
    /// Draw count for the balance diagnostics.
    pub draws: Option<usize>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(p) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(p)
        .map_err(|e| Error::Argument(format!("config {}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("config {}: {e}", p.display())))
}

/// `Method` wrapper clap can parse from "proposed" / "aipw".
#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum MethodArg {
    Proposed,
    Aipw,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Proposed => Method::Proposed,
            MethodArg::Aipw => Method::Aipw,
        }
    }
}

/// Estimator flags shared by the commands that run the estimator.
#[derive(clap::Args, Clone, Copy, Debug, Default)]
pub struct EstimatorFlags {
    /// Influence function driving the estimate.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Cross-fitting folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Repeated fold splits combined by the median rule.
    #[arg(long)]
    pub splits: Option<usize>,
    /// Clip fitted propensities into [clip, 1-clip].
    #[arg(long)]
    pub clip: Option<f64>,
    /// Confidence level for intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Seed pinning fold draws and replication streams.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Fully resolved run settings.
pub struct Settings {
    pub est: EstimatorConfig,
    pub seed: u64,
    pub subgroups: Vec<String>,
    pub draws: usize,
}

pub fn resolve(base: EstimatorConfig, file: &FileConfig, flags: &EstimatorFlags) -> Settings {
    let mut est = base;
    let mut seed = 0u64;
    if let Some(m) = file.method {
        est.method = m;
    }
    if let Some(k) = file.folds {
        est.folds = k;
    }
    if let Some(s) = file.splits {
        est.splits = s;
    }
    if let Some(l) = &file.learners {
        est.learners = l.clone();
    }
    if let Some(s) = &file.strata {
        est.strata = s.clone();
    }
    if let Some(c) = file.clip {
        est.clip = c;
    }
    if let Some(l) = file.level {
        est.level = l;
    }
    if let Some(u) = file.undersample {
        est.undersample = Some(u);
    }
    if let Some(s) = file.seed {
        seed = s;
    }
    if let Some(m) = flags.method {
        est.method = m.into();
    }
    if let Some(k) = flags.folds {
        est.folds = k;
    }
    if let Some(s) = flags.splits {
        est.splits = s;
    }
    if let Some(c) = flags.clip {
        est.clip = c;
    }
    if let Some(l) = flags.level {
        est.level = l;
    }
    if let Some(s) = flags.seed {
        seed = s;
    }
    Settings { est, seed, subgroups: file.subgroups.clone(), draws: file.draws.unwrap_or(200) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beats_base() {
        let file: FileConfig =
            serde_json::from_str(r#"{"method":"aipw","splits":3,"seed":9,"clip":0.05}"#).unwrap();
        let flags = EstimatorFlags { method: Some(MethodArg::Proposed), ..Default::default() };
        let s = resolve(EstimatorConfig::default(), &file, &flags);
        assert_eq!(s.est.method, Method::Proposed);
        assert_eq!(s.est.splits, 3);
        assert_eq!(s.est.clip, 0.05);
        assert_eq!(s.seed, 9);
        assert_eq!(s.est.folds, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<FileConfig>(r#"{"claps":2}"#).unwrap_err();
        assert!(err.to_string().contains("claps"));
    }

    #[test]
    fn learners_round_trip_through_json() {
        let file: FileConfig = serde_json::from_str(
            r#"{"learners":{"g":{"kind":"linear-ridge","lambda":0.5,"degree":2},
                "pi":{"kind":"boosted-stumps","rounds":50,"learning_rate":0.1,"depth":1},
                "e":{"kind":"logistic-ridge","lambda":1.0,"degree":1}},
                "undersample":"min-cluster-size"}"#,
        )
        .unwrap();
        let s = resolve(EstimatorConfig::default(), &file, &EstimatorFlags::default());
        assert!(s.est.learners.validate().is_ok());
        assert_eq!(s.est.undersample, Some(UndersampleRule::MinClusterSize));
    }
}

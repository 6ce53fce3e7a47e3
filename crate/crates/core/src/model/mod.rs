//! Clustered dataset model: per-cluster arrays, CSV ingestion, validation
//! summaries, and cluster-level fold assignment for cross-fitting.

mod data;
mod folds;
mod ingest;
mod validate;

pub use data::{ClusterData, Dataset, RowMatrix};
pub use folds::{split_clusters, FoldAssignment};
pub use ingest::{load_dataset, read_dataset, write_dataset, write_dataset_csv};
pub use validate::{validate_dataset, ValidationReport};

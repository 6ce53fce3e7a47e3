use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::numeric::rng::{stream_rng, RngDomain};

/// Assignment of every cluster id to one of `k` folds. Folds partition the
/// clusters and their sizes differ by at most one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    k: usize,
    assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, cluster_id: &str) -> Option<usize> {
        self.assignment.get(cluster_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Fold index per cluster, aligned with the dataset's cluster order.
    pub fn fold_index_vec(&self, d: &Dataset) -> Result<Vec<usize>> {
        d.clusters()
            .iter()
            .map(|c| {
                self.fold_of(c.id()).ok_or_else(|| {
                    Error::Argument(format!("cluster '{}' is not in the fold assignment", c.id()))
                })
            })
            .collect()
    }
}

/// Split clusters into `k` folds uniformly at random, deterministically in
/// `seed`. The shuffle runs over canonically sorted ids, so the same clusters
/// get the same folds no matter how the dataset rows were ordered.
pub fn split_clusters(d: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = d.n_clusters();
    if k < 2 {
        return Err(Error::Argument(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Argument(format!("cannot split {n} clusters into {k} folds")));
    }
    let mut ids: Vec<&str> = d.clusters().iter().map(|c| c.id()).collect();
    ids.sort_unstable();
    let mut rng = stream_rng(seed, RngDomain::FoldSplit, 0);
    ids.shuffle(&mut rng);

    // First (n mod k) folds take the extra cluster.
    let base = n / k;
    let extra = n % k;
    let mut assignment = BTreeMap::new();
    let mut pos = 0usize;
    for fold in 0..k {
        let take = base + usize::from(fold < extra);
        for id in &ids[pos..pos + take] {
            assignment.insert((*id).to_string(), fold);
        }
        pos += take;
    }
    Ok(FoldAssignment { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ingest::read_dataset;

    fn dataset(n: usize) -> Dataset {
        let mut csv = String::from("cluster_id,y,a\n");
        for i in 0..n {
            csv.push_str(&format!("c{i},1.0,{}\n", i % 2));
        }
        read_dataset(csv.as_bytes()).unwrap()
    }

    #[test]
    fn partitions_with_balanced_sizes() {
        let d = dataset(10);
        let f = split_clusters(&d, 3, 7).unwrap();
        let mut sizes = f.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        // every cluster assigned exactly once
        assert_eq!(f.fold_index_vec(&d).unwrap().len(), 10);
    }

    #[test]
    fn deterministic_in_seed() {
        let d = dataset(20);
        assert_eq!(split_clusters(&d, 4, 1).unwrap(), split_clusters(&d, 4, 1).unwrap());
        assert_ne!(split_clusters(&d, 4, 1).unwrap(), split_clusters(&d, 4, 2).unwrap());
    }

    #[test]
    fn invariant_to_row_order() {
        let a = dataset(9);
        // same ids, reversed cluster order
        let mut csv = String::from("cluster_id,y,a\n");
        for i in (0..9).rev() {
            csv.push_str(&format!("c{i},1.0,{}\n", i % 2));
        }
        let b = read_dataset(csv.as_bytes()).unwrap();
        assert_eq!(split_clusters(&a, 3, 5).unwrap(), split_clusters(&b, 3, 5).unwrap());
    }

    #[test]
    fn rejects_bad_k() {
        let d = dataset(4);
        assert!(split_clusters(&d, 1, 0).is_err());
        assert!(split_clusters(&d, 5, 0).is_err());
    }
}

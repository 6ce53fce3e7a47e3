//! k-nearest-neighbour regression on standardized features.

use crate::error::{Error, Result};
use crate::nuisance::{Model, Task};

/// Nearest-neighbour predictor. Features are standardized by the training
/// mean and standard deviation; columns with zero spread are ignored by the
/// distance (their scale is set so the difference is always zero).
pub(crate) struct KnnModel {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    k: usize,
    clip: Option<f64>,
}

impl KnnModel {
    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

impl Model for KnnModel {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let q = self.standardize(row);
        // (distance, training index) pairs; ties break on the smaller index
        // so predictions do not depend on the sort implementation.
        let mut order: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let k = self.k.min(order.len());
        let mean = order[..k].iter().map(|&(_, i)| self.targets[i]).sum::<f64>() / k as f64;
        match self.clip {
            Some(c) => mean.clamp(c, 1.0 - c),
            None => mean,
        }
    }
}

pub(crate) fn fit_knn(
    rows: &[Vec<f64>],
    targets: &[f64],
    k: usize,
    task: Task,
) -> Result<Box<dyn Model>> {
    if k == 0 {
        return Err(Error::Argument("knn requires k >= 1".into()));
    }
    if rows.is_empty() {
        return Err(Error::Fit("knn requires at least one training row".into()));
    }
    let p = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; p];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut scale = vec![0.0; p];
    for r in rows {
        for j in 0..p {
            let d = r[j] - mean[j];
            scale[j] += d * d;
        }
    }
    for s in &mut scale {
        *s = (*s / n).sqrt();
    }
    let standardized: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(mean.iter().zip(&scale))
                .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
                .collect()
        })
        .collect();
    let clip = match task {
        Task::Regression => None,
        Task::Classification { clip } => Some(clip),
    };
    Ok(Box::new(KnnModel {
        rows: standardized,
        targets: targets.to_vec(),
        mean,
        scale,
        k: k.min(rows.len()),
        clip,
    }))
}

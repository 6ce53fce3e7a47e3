//! Gradient-boosted shallow trees with exact greedy split search.
//!
//! Regression boosts squared error; classification boosts logistic loss with
//! trees fit to gradient residuals and leaf values re-estimated by a Newton
//! step (clamped), which is the classic LogitBoost-style recipe. Split search
//! is deterministic: features are pre-sorted once with index tie-breaking and
//! the first best (feature, threshold) in scan order wins.

use crate::error::{Error, Result};
use crate::nuisance::{Model, Task};

const MIN_GAIN: f64 = 1e-12;
const LEAF_CLAMP: f64 = 4.0;

#[derive(Clone, Copy, Debug)]
struct Node {
    /// Split feature, or usize::MAX for a leaf.
    feature: usize,
    threshold: f64,
    /// Children (split nodes) or unused (leaves).
    left: usize,
    right: usize,
    /// Leaf prediction (leaves only).
    value: f64,
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            if node.feature == usize::MAX {
                return node.value;
            }
            at = if row[node.feature] <= node.threshold { node.left } else { node.right };
        }
    }
}

pub(crate) struct BoostedModel {
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    logistic: bool,
}

impl Model for BoostedModel {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut f = self.base;
        for t in &self.trees {
            f += self.learning_rate * t.predict(row);
        }
        if self.logistic {
            1.0 / (1.0 + (-f.clamp(-30.0, 30.0)).exp())
        } else {
            f
        }
    }
}

#[derive(Clone)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Greedy level-wise tree builder over pre-sorted feature columns.
struct TreeBuilder<'a> {
    cols: &'a [Vec<f64>],       // feature-major values
    sorted: &'a [Vec<u32>],     // per feature: row indices sorted by (value, row)
    n_rows: usize,
}

impl<'a> TreeBuilder<'a> {
    /// Fit one regression tree to `grad` (pseudo-residuals). `hess` supplies
    /// per-row curvature for Newton leaf values (all ones for plain squared
    /// error).
    fn fit(&self, grad: &[f64], hess: &[f64], depth: u32) -> (Tree, Vec<usize>) {
        let mut nodes: Vec<Node> = Vec::new();
        let mut node_of: Vec<usize> = vec![0; self.n_rows];
        nodes.push(Node { feature: usize::MAX, threshold: 0.0, left: 0, right: 0, value: 0.0 });
        let mut level: Vec<usize> = vec![0];

        for _ in 0..depth {
            if level.is_empty() {
                break;
            }
            // Node totals for this level.
            let mut active = vec![false; nodes.len()];
            for &nd in &level {
                active[nd] = true;
            }
            let mut sum = vec![0.0f64; nodes.len()];
            let mut cnt = vec![0usize; nodes.len()];
            for r in 0..self.n_rows {
                let nd = node_of[r];
                if active[nd] {
                    sum[nd] += grad[r];
                    cnt[nd] += 1;
                }
            }
            let mut best: Vec<Option<SplitCandidate>> = vec![None; nodes.len()];
            for f in 0..self.cols.len() {
                // One sweep over the sorted order updates running left-stats
                // for every node at this level simultaneously.
                let mut left_sum = vec![0.0f64; nodes.len()];
                let mut left_cnt = vec![0usize; nodes.len()];
                let mut last_val = vec![f64::NAN; nodes.len()];
                for &r32 in &self.sorted[f] {
                    let r = r32 as usize;
                    let nd = node_of[r];
                    if !active[nd] || cnt[nd] < 2 {
                        continue;
                    }
                    let v = self.cols[f][r];
                    if left_cnt[nd] > 0 && v > last_val[nd] {
                        let lc = left_cnt[nd] as f64;
                        let rc = (cnt[nd] - left_cnt[nd]) as f64;
                        let ls = left_sum[nd];
                        let rs = sum[nd] - ls;
                        let gain = ls * ls / lc + rs * rs / rc - sum[nd] * sum[nd] / cnt[nd] as f64;
                        if gain > MIN_GAIN
                            && best[nd].as_ref().map_or(true, |b| gain > b.gain)
                        {
                            best[nd] = Some(SplitCandidate {
                                gain,
                                feature: f,
                                threshold: 0.5 * (last_val[nd] + v),
                            });
                        }
                    }
                    left_sum[nd] += grad[r];
                    left_cnt[nd] += 1;
                    last_val[nd] = v;
                }
            }
            // Materialize chosen splits, route rows, collect next level.
            let mut next_level = Vec::new();
            for &nd in &level {
                if let Some(c) = best[nd].take() {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node { feature: usize::MAX, threshold: 0.0, left: 0, right: 0, value: 0.0 });
                    nodes.push(Node { feature: usize::MAX, threshold: 0.0, left: 0, right: 0, value: 0.0 });
                    nodes[nd] = Node {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                        value: 0.0,
                    };
                    next_level.push(left);
                    next_level.push(right);
                }
            }
            if next_level.is_empty() {
                break;
            }
            for r in 0..self.n_rows {
                let nd = node_of[r];
                let node = nodes[nd];
                if node.feature != usize::MAX && active.get(nd).copied().unwrap_or(false) {
                    node_of[r] = if self.cols[node.feature][r] <= node.threshold {
                        node.left
                    } else {
                        node.right
                    };
                }
            }
            level = next_level;
        }

        // Newton leaf values: sum(grad) / sum(hess), clamped.
        let mut gsum = vec![0.0f64; nodes.len()];
        let mut hsum = vec![0.0f64; nodes.len()];
        for r in 0..self.n_rows {
            gsum[node_of[r]] += grad[r];
            hsum[node_of[r]] += hess[r];
        }
        for (i, node) in nodes.iter_mut().enumerate() {
            if node.feature == usize::MAX {
                node.value = if hsum[i] > 0.0 {
                    (gsum[i] / hsum[i]).clamp(-LEAF_CLAMP, LEAF_CLAMP)
                } else {
                    0.0
                };
            }
        }
        (Tree { nodes }, node_of)
    }
}

pub(crate) fn fit_boosted(
    rows: &[Vec<f64>],
    targets: &[f64],
    rounds: u32,
    learning_rate: f64,
    depth: u32,
    task: Task,
) -> Result<Box<dyn Model>> {
    let n = rows.len();
    let p = rows[0].len();
    let logistic = matches!(task, Task::Classification { .. });

    // Column-major copy plus one pre-sort per feature (ties by row index).
    let mut cols = vec![vec![0.0f64; n]; p];
    for (r, row) in rows.iter().enumerate() {
        if row.len() != p {
            return Err(Error::Argument("ragged feature rows".into()));
        }
        for (f, &v) in row.iter().enumerate() {
            cols[f][r] = v;
        }
    }
    let sorted: Vec<Vec<u32>> = cols
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b))
            });
            idx
        })
        .collect();
    let builder = TreeBuilder { cols: &cols, sorted: &sorted, n_rows: n };

    let base = if logistic {
        let rate = (targets.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
        (rate / (1.0 - rate)).ln()
    } else {
        targets.iter().sum::<f64>() / n as f64
    };

    let mut f = vec![base; n];
    let mut grad = vec![0.0f64; n];
    let mut hess = vec![1.0f64; n];
    let mut trees = Vec::with_capacity(rounds as usize);
    for _ in 0..rounds {
        if logistic {
            for r in 0..n {
                let pr = 1.0 / (1.0 + (-f[r].clamp(-30.0, 30.0)).exp());
                grad[r] = targets[r] - pr;
                hess[r] = (pr * (1.0 - pr)).max(1e-10);
            }
        } else {
            for r in 0..n {
                grad[r] = targets[r] - f[r];
            }
        }
        let (tree, node_of) = builder.fit(&grad, &hess, depth);
        for r in 0..n {
            f[r] += learning_rate * tree.nodes[node_of[r]].value;
        }
        trees.push(tree);
    }
    Ok(Box::new(BoostedModel { base, learning_rate, trees, logistic }))
}

//! Ridge-penalized linear and logistic regression on an optional degree-2
//! polynomial basis. The intercept is never penalized.

use crate::error::{Error, Result};
use crate::nuisance::{Model, Task};
use crate::numeric::linalg::{solve_spd, SymMatrix};

const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-10;
const ETA_CLAMP: f64 = 30.0;

#[inline]
fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Polynomial basis: degree 1 passes features through; degree 2 appends
/// squares and pairwise products.
pub(crate) fn expand_row(row: &[f64], degree: u32) -> Vec<f64> {
    let p = row.len();
    let mut out = Vec::with_capacity(if degree >= 2 { p + p * (p + 1) / 2 } else { p });
    out.extend_from_slice(row);
    if degree >= 2 {
        for i in 0..p {
            for j in i..p {
                out.push(row[i] * row[j]);
            }
        }
    }
    out
}

pub(crate) struct LinearModel {
    coef: Vec<f64>, // intercept first
    degree: u32,
    logistic: bool,
}

impl Model for LinearModel {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let x = expand_row(row, self.degree);
        debug_assert_eq!(x.len() + 1, self.coef.len());
        let eta = self.coef[0]
            + x.iter().zip(&self.coef[1..]).map(|(a, b)| a * b).sum::<f64>();
        if self.logistic {
            expit(eta.clamp(-ETA_CLAMP, ETA_CLAMP))
        } else {
            eta
        }
    }
}

fn design(rows: &[Vec<f64>], degree: u32) -> Vec<Vec<f64>> {
    rows.iter().map(|r| expand_row(r, degree)).collect()
}

/// Gram matrix and right-hand side for weighted ridge with intercept:
/// columns are [1, x...], penalty applies to the non-intercept block.
fn normal_equations(
    x: &[Vec<f64>],
    z: &[f64],
    w: Option<&[f64]>,
    lambda: f64,
) -> (SymMatrix, Vec<f64>) {
    let p = x[0].len() + 1;
    let mut gram = SymMatrix::zeros(p);
    let mut rhs = vec![0.0f64; p];
    for (r, row) in x.iter().enumerate() {
        let wr = w.map_or(1.0, |w| w[r]);
        let zr = z[r];
        // intercept entries
        *gram.at_mut(0, 0) += wr;
        rhs[0] += wr * zr;
        for i in 0..row.len() {
            let xi = wr * row[i];
            *gram.at_mut(i + 1, 0) += xi;
            rhs[i + 1] += xi * zr;
            for j in 0..=i {
                *gram.at_mut(i + 1, j + 1) += xi * row[j];
            }
        }
    }
    for i in 1..p {
        *gram.at_mut(i, i) += lambda;
    }
    // mirror the lower triangle for readers that expect symmetry
    for i in 0..p {
        for j in 0..i {
            let v = gram.at(i, j);
            *gram.at_mut(j, i) = v;
        }
    }
    (gram, rhs)
}

pub(crate) fn fit_linear_ridge(
    rows: &[Vec<f64>],
    targets: &[f64],
    lambda: f64,
    degree: u32,
) -> Result<Box<dyn Model>> {
    let x = design(rows, degree);
    let (gram, rhs) = normal_equations(&x, targets, None, lambda);
    let coef = solve_spd(&gram, &rhs)
        .map_err(|e| Error::Fit(format!("linear ridge normal equations failed: {e}")))?;
    Ok(Box::new(LinearModel { coef, degree, logistic: false }))
}

pub(crate) fn fit_logistic_ridge(
    rows: &[Vec<f64>],
    targets: &[f64],
    lambda: f64,
    degree: u32,
    task: Task,
) -> Result<Box<dyn Model>> {
    let clip = match task {
        Task::Classification { clip } => clip,
        Task::Regression => {
            return Err(Error::Argument("logistic-ridge is a classification learner".into()))
        }
    };
    let rate = targets.iter().sum::<f64>() / targets.len() as f64;
    if rate == 0.0 || rate == 1.0 {
        // Degenerate single-class training data: constant clipped class rate.
        return Ok(Box::new(ConstantModel { value: rate.clamp(clip, 1.0 - clip) }));
    }
    let x = design(rows, degree);
    let p = x[0].len() + 1;
    let mut coef = vec![0.0f64; p];
    let n = x.len();
    let mut eta = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let mut z = vec![0.0f64; n];
    for _ in 0..IRLS_MAX_ITER {
        for r in 0..n {
            let e = (coef[0]
                + x[r].iter().zip(&coef[1..]).map(|(a, b)| a * b).sum::<f64>())
            .clamp(-ETA_CLAMP, ETA_CLAMP);
            let mu = expit(e);
            let wr = (mu * (1.0 - mu)).max(1e-10);
            eta[r] = e;
            weights[r] = wr;
            z[r] = e + (targets[r] - mu) / wr;
        }
        let (gram, rhs) = normal_equations(&x, &z, Some(&weights), lambda);
        let new = solve_spd(&gram, &rhs)
            .map_err(|e| Error::Fit(format!("IRLS step failed: {e}")))?;
        let delta = new
            .iter()
            .zip(&coef)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        coef = new;
        if delta < IRLS_TOL {
            break;
        }
    }
    Ok(Box::new(LinearModel { coef, degree, logistic: true }))
}

pub(crate) struct ConstantModel {
    pub value: f64,
}

impl Model for ConstantModel {
    fn predict_row(&self, _row: &[f64]) -> f64 {
        self.value
    }
}

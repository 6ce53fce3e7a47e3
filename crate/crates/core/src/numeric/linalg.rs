//! Small dense symmetric solves for the ridge and IRLS fits. Feature counts
//! here are tens, not thousands, so a plain Cholesky is all that is needed.

use crate::error::{Error, Result};

/// Symmetric positive definite matrix in packed row-major form.
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>, // n*n, row-major, only the lower triangle is read
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Solve `A x = b` for symmetric positive definite `A` by Cholesky.
/// A tiny diagonal jitter is retried once if the factorization stalls on a
/// numerically semi-definite matrix (exactly collinear features).
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    match cholesky_solve(a, b, 0.0) {
        Ok(x) => Ok(x),
        Err(_) => cholesky_solve(a, b, 1e-10),
    }
}

fn cholesky_solve(a: &SymMatrix, b: &[f64], jitter: f64) -> Result<Vec<f64>> {
    let n = a.n;
    assert_eq!(b.len(), n);
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.at(i, j);
            if i == j {
                s += jitter * (1.0 + a.at(i, i).abs());
            }
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Numeric(
                        "Cholesky failed: matrix not positive definite".into(),
                    ));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_known_system() {
        // A = [[4,2],[2,3]], b = [2, 5] -> x = [-0.5, 2]
        let mut a = SymMatrix::zeros(2);
        *a.at_mut(0, 0) = 4.0;
        *a.at_mut(0, 1) = 2.0;
        *a.at_mut(1, 0) = 2.0;
        *a.at_mut(1, 1) = 3.0;
        let x = solve_spd(&a, &[2.0, 5.0]).unwrap();
        assert!((x[0] + 0.5).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_system_recovers_via_jitter() {
        // Singular Gram matrix (duplicated feature); jitter keeps it solvable.
        let mut a = SymMatrix::zeros(2);
        *a.at_mut(0, 0) = 1.0;
        *a.at_mut(0, 1) = 1.0;
        *a.at_mut(1, 0) = 1.0;
        *a.at_mut(1, 1) = 1.0;
        let x = solve_spd(&a, &[1.0, 1.0]).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
    }
}

//! Gauss-Hermite quadrature for integrals against a normal density.
//!
//! Nodes and weights for the physicists' weight `exp(-x^2)` are computed by
//! Newton iteration on the orthonormal Hermite recurrence (the scaled
//! recurrence keeps every intermediate O(1), so this is stable well past the
//! 30-60 node range used here).

use crate::error::{Error, Result};

/// Quadrature rule: `integral f(x) exp(-x^2) dx ~= sum w_i f(x_i)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

const MAX_NEWTON_ITER: usize = 64;
const NEWTON_TOL: f64 = 1e-15;

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("Gauss-Hermite order must be >= 1".into()));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // Roots come in +/- pairs; solve for the positive half, largest first.
        let m = (n + 1) / 2;
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            // Initial guesses (largest root from the Tricomi-style asymptote,
            // later roots stepped inward from their predecessors).
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            let mut converged = false;
            for _ in 0..MAX_NEWTON_ITER {
                // Orthonormal recurrence: p1 = h_n(z), p2 = h_{n-1}(z).
                let mut p1 = std::f64::consts::PI.powf(-0.25);
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= NEWTON_TOL * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Numeric(format!(
                    "Gauss-Hermite root {i} of {n} did not converge"
                )));
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(GaussHermite { nodes, weights })
    }

    /// `E[f(V)]` for `V ~ N(0, sigma^2)`. With `sigma == 0` this is `f(0)`.
    pub fn expect_normal<F: Fn(f64) -> f64>(&self, sigma: f64, f: F) -> f64 {
        if sigma == 0.0 {
            return f(0.0);
        }
        let scale = std::f64::consts::SQRT_2 * sigma;
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(scale * x);
        }
        acc / std::f64::consts::PI.sqrt()
    }
}

//! Least-squares projection onto functions of the state, the stand-in for
//! the conditional expectations of the backward recursion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ridge penalty on the standardized Gram matrix.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Smallest admissible Cholesky pivot relative to the largest.
const RANK_TOL: f64 = 1e-12;

/// Polynomial features of the state up to `degree`, optionally plus an
/// indicator of sitting on the boundary `|x| = θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub degree: usize,
    pub boundary_theta: Option<f64>,
    pub ridge: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis {
            degree: 2,
            boundary_theta: None,
            ridge: DEFAULT_RIDGE,
        }
    }
}

impl RegressionBasis {
    pub fn new(degree: usize, ridge: f64) -> Result<Self> {
        if !ridge.is_finite() || ridge < 0.0 {
            return Err(Error::validation("ridge", "must be finite and >= 0"));
        }
        Ok(RegressionBasis {
            degree,
            boundary_theta: None,
            ridge,
        })
    }

    pub fn with_boundary(mut self, theta: f64) -> Self {
        self.boundary_theta = Some(theta);
        self
    }

    /// Same basis with twice the polynomial degree.
    pub fn doubled(&self) -> Self {
        RegressionBasis {
            degree: (2 * self.degree).max(1),
            ..*self
        }
    }
}

/// A factorized projection for one set of states; reusable across responses.
#[derive(Debug, Clone)]
pub struct Projector {
    /// Centered feature columns, `features[c][path]`.
    features: Vec<Vec<f64>>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    n: usize,
}

impl Projector {
    /// Fails with `RankLoss { node }` when the regularized Gram matrix is not
    /// positive definite.
    pub fn new(basis: &RegressionBasis, states: &[f64], node: usize) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::validation("regression", "no samples"));
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { node, quantity: "state" });
        }
        let nf = n as f64;
        let mean = states.iter().sum::<f64>() / nf;
        let var = states.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
        let scale = var.sqrt();

        let mut raw: Vec<Vec<f64>> = Vec::new();
        if scale > 1e-12 * (1.0 + mean.abs()) {
            let z: Vec<f64> = states.iter().map(|x| (x - mean) / scale).collect();
            for d in 1..=basis.degree {
                raw.push(z.iter().map(|v| v.powi(d as i32)).collect());
            }
        }
        if let Some(theta) = basis.boundary_theta {
            raw.push(states.iter().map(|x| if x.abs() >= theta { 1.0 } else { 0.0 }).collect());
        }

        let mut features = Vec::with_capacity(raw.len());
        for mut col in raw {
            let m = col.iter().sum::<f64>() / nf;
            col.iter_mut().for_each(|v| *v -= m);
            let ss = col.iter().map(|v| v * v).sum::<f64>() / nf;
            if ss > 1e-24 {
                let s = ss.sqrt();
                col.iter_mut().for_each(|v| *v /= s);
                features.push(col);
            }
        }

        let p = features.len();
        let chol = if p == 0 {
            None
        } else {
            let mut gram = DMatrix::<f64>::zeros(p, p);
            for a in 0..p {
                for b in a..p {
                    let v = features[a].iter().zip(&features[b]).map(|(x, y)| x * y).sum::<f64>() / nf;
                    gram[(a, b)] = v;
                    gram[(b, a)] = v;
                }
                gram[(a, a)] += basis.ridge;
            }
            let chol = gram.cholesky().ok_or(Error::RankLoss { node })?;
            let pivots: Vec<f64> = chol.l_dirty().diagonal().iter().map(|d| d * d).collect();
            let largest = pivots.iter().cloned().fold(0.0, f64::max);
            if pivots.iter().any(|&d| d < RANK_TOL * largest) {
                return Err(Error::RankLoss { node });
            }
            Some(chol)
        };
        Ok(Projector { features, chol, n })
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Fitted values of `response` on the features (intercept unpenalized).
    pub fn project(&self, response: &[f64]) -> Vec<f64> {
        debug_assert_eq!(response.len(), self.n);
        let nf = self.n as f64;
        let mean = response.iter().sum::<f64>() / nf;
        let Some(chol) = &self.chol else {
            return vec![mean; self.n];
        };
        let rhs = DVector::from_iterator(
            self.features.len(),
            self.features
                .iter()
                .map(|col| col.iter().zip(response).map(|(f, y)| f * (y - mean)).sum::<f64>() / nf),
        );
        let beta = chol.solve(&rhs);
        (0..self.n)
            .map(|i| mean + self.features.iter().zip(beta.iter()).map(|(col, b)| col[i] * b).sum::<f64>())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_response_is_reproduced_exactly() {
        let states: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let proj = Projector::new(&RegressionBasis::default(), &states, 0).unwrap();
        assert!(proj.project(&vec![1.0; 50]).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn quadratic_in_state_is_fitted() {
        let states: Vec<f64> = (0..200).map(|i| -1.0 + 0.01 * i as f64).collect();
        let y: Vec<f64> = states.iter().map(|x| 2.0 - x + 0.5 * x * x).collect();
        let proj = Projector::new(&RegressionBasis::new(2, 0.0).unwrap(), &states, 0).unwrap();
        for (f, t) in proj.project(&y).iter().zip(&y) {
            assert!((f - t).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_state_falls_back_to_mean() {
        let proj = Projector::new(&RegressionBasis::default(), &[0.5; 4], 0).unwrap();
        assert_eq!(proj.n_features(), 0);
        assert_eq!(proj.project(&[1.0, 2.0, 3.0, 6.0]), vec![3.0; 4]);
    }

    #[test]
    fn collinear_features_without_ridge_lose_rank() {
        // on three support points z³ is a multiple of z
        let states = [0.0, 1.0, 2.0, 0.0, 1.0, 2.0];
        let r = Projector::new(&RegressionBasis::new(3, 0.0).unwrap(), &states, 7);
        assert!(matches!(r, Err(Error::RankLoss { node: 7 })));
        assert!(Projector::new(&RegressionBasis::new(3, 1e-8).unwrap(), &states, 7).is_ok());
    }

    #[test]
    fn non_finite_state_is_reported() {
        let r = Projector::new(&RegressionBasis::default(), &[0.0, f64::NAN], 3);
        assert!(matches!(r, Err(Error::NonFinite { node: 3, .. })));
    }
}

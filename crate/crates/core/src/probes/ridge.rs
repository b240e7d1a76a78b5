use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeConfig {
    pub alpha: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
}

enum Factor {
    /// (Xcᵀ Xc + αI), d×d. Used when d ≤ n.
    Primal(Cholesky<f64, Dyn>),
    /// (Xc Xcᵀ + αI), n×n. Used when d > n.
    Dual(Cholesky<f64, Dyn>),
}

/// Factorization of the centered ridge system for one design matrix.
///
/// Fitting the same rows against many target vectors (the permutation null)
/// reuses the factorization; each solve is then a pair of triangular solves.
pub struct RidgeSolver {
    centered: DMatrix<f64>,
    column_means: DVector<f64>,
    factor: Factor,
    alpha: f64,
}

impl RidgeSolver {
    pub fn new(x: &DMatrix<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("ridge alpha must be positive, got {alpha}")));
        }
        let (n, d) = x.shape();
        if n < 2 {
            return Err(Error::Degenerate("ridge needs at least two training rows".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge design matrix"));
        }
        let column_means = x.row_mean().transpose();
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= column_means.transpose();
        }
        let factor = if d <= n {
            let mut gram = centered.tr_mul(&centered);
            for i in 0..d {
                gram[(i, i)] += alpha;
            }
            Factor::Primal(Cholesky::new(gram).ok_or(Error::NotPositiveDefinite)?)
        } else {
            let mut gram = &centered * centered.transpose();
            for i in 0..n {
                gram[(i, i)] += alpha;
            }
            Factor::Dual(Cholesky::new(gram).ok_or(Error::NotPositiveDefinite)?)
        };
        Ok(RidgeSolver { centered, column_means, factor, alpha })
    }

    pub fn solve(&self, y: &[f64]) -> Result<RidgeModel> {
        let n = self.centered.nrows();
        if y.len() != n {
            return Err(Error::Dimension { context: "ridge targets", expected: n, actual: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge targets"));
        }
        let y_mean = crate::stats::mean(y);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let w = match &self.factor {
            Factor::Primal(ch) => ch.solve(&self.centered.tr_mul(&yc)),
            Factor::Dual(ch) => self.centered.tr_mul(&ch.solve(&yc)),
        };
        let intercept = y_mean - self.column_means.dot(&w);
        if !intercept.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge solution"));
        }
        Ok(RidgeModel { weights: w.iter().copied().collect(), intercept, alpha: self.alpha })
    }
}

/// Exact minimizer of ‖y − Xw − b‖² + α‖w‖² with the intercept unpenalized.
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<RidgeModel> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { context: "ridge training rows", expected: x.nrows(), actual: y.len() });
    }
    RidgeSolver::new(x, alpha)?.solve(y)
}

pub fn predict_ridge(m: &RidgeModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != m.weights.len() {
        return Err(Error::Dimension { context: "ridge features", expected: m.weights.len(), actual: x.ncols() });
    }
    let w = DVector::from_column_slice(&m.weights);
    Ok((x * w).iter().map(|v| v + m.intercept).collect())
}

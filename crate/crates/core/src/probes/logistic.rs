//! Multinomial logistic regression over the seven tiers.
//!
//! Objective: mean cross-entropy + reg·‖W‖²/2, intercepts unpenalized.
//! Optimized from zero by accelerated gradient descent with backtracking
//! and function-value restarts, stopping once the full gradient norm is at
//! most `tol`. Everything is deterministic; there is no seed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::TIER_COUNT;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub reg: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { reg: 1e-4, tol: 1e-6, max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// K×d, one row per tier.
    pub weights: DMatrix<f64>,
    pub intercepts: DVector<f64>,
    pub reg: f64,
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct TierPrediction {
    /// N×7 class probabilities.
    pub probabilities: DMatrix<f64>,
    pub tiers: Vec<usize>,
}

impl LogisticModel {
    pub fn zeros(dim: usize, reg: f64) -> Self {
        LogisticModel {
            weights: DMatrix::zeros(TIER_COUNT, dim),
            intercepts: DVector::zeros(TIER_COUNT),
            reg,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// N×K logits.
    pub fn logits(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension { context: "logistic features", expected: self.dim(), actual: x.ncols() });
        }
        let mut z = x * self.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += self.intercepts.transpose();
        }
        Ok(z)
    }
}

/// Row-wise softmax with max-shift.
pub fn softmax_rows(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = z.clone();
    for mut row in p.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s: f64 = row.sum();
        row /= s;
    }
    p
}

/// First index of the row maximum, so ties go to the lower tier.
fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in row.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub fn predict_tier(m: &LogisticModel, x: &DMatrix<f64>) -> Result<TierPrediction> {
    let z = m.logits(x)?;
    let tiers = z.row_iter().map(|r| argmax(r.iter().copied())).collect();
    Ok(TierPrediction { probabilities: softmax_rows(&z), tiers })
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    onehot: DMatrix<f64>,
    reg: f64,
}

impl Problem<'_> {
    fn n(&self) -> f64 {
        self.x.nrows() as f64
    }

    fn objective(&self, m: &LogisticModel) -> f64 {
        let z = m.logits(self.x).expect("shape checked");
        self.penalized(&z, m)
    }

    fn penalized(&self, z: &DMatrix<f64>, m: &LogisticModel) -> f64 {
        let mut ce = 0.0;
        for (zr, yr) in z.row_iter().zip(self.onehot.row_iter()) {
            let mx = zr.max();
            let lse = mx + zr.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            ce += lse - zr.dot(&yr);
        }
        ce / self.n() + 0.5 * self.reg * m.weights.norm_squared()
    }

    /// Returns (objective, gradient as a model-shaped value).
    fn value_and_gradient(&self, m: &LogisticModel) -> (f64, LogisticModel) {
        let z = m.logits(self.x).expect("shape checked");
        let value = self.penalized(&z, m);
        let resid = (softmax_rows(&z) - &self.onehot) / self.n();
        let gw = resid.tr_mul(self.x) + &m.weights * self.reg;
        let gb = resid.row_sum().transpose();
        (value, LogisticModel { weights: gw, intercepts: gb, reg: self.reg })
    }
}

fn axpy(a: &LogisticModel, s: f64, b: &LogisticModel) -> LogisticModel {
    LogisticModel {
        weights: &a.weights + &b.weights * s,
        intercepts: &a.intercepts + &b.intercepts * s,
        reg: a.reg,
    }
}

fn norm_sq(m: &LogisticModel) -> f64 {
    m.weights.norm_squared() + m.intercepts.norm_squared()
}

/// Initial step scale: ½·λmax(X̃ᵀX̃/n) + reg with X̃ = [X 1]. The power
/// estimate can undershoot; backtracking absorbs that.
fn lipschitz_estimate(x: &DMatrix<f64>, reg: f64) -> f64 {
    (0.5 * power_iteration(x, 30) + reg).max(f64::MIN_POSITIVE)
}

/// Estimate of λmax(X̃ᵀX̃/n) from a fixed start vector.
fn power_iteration(x: &DMatrix<f64>, iters: usize) -> f64 {
    let n = x.nrows() as f64;
    let d = x.ncols();
    let mut v = DVector::from_element(d + 1, 1.0 / ((d + 1) as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let xv = x * v.rows(0, d) + DVector::from_element(x.nrows(), v[d]);
        let mut w = DVector::zeros(d + 1);
        w.rows_mut(0, d).copy_from(&x.tr_mul(&xv));
        w[d] = xv.sum();
        w /= n;
        lambda = w.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        v = w / lambda;
    }
    lambda
}

pub fn fit_logistic(x: &DMatrix<f64>, tiers: &[usize], cfg: &LogisticConfig) -> Result<LogisticFit> {
    if x.nrows() != tiers.len() {
        return Err(Error::Dimension { context: "logistic training rows", expected: x.nrows(), actual: tiers.len() });
    }
    if tiers.is_empty() {
        return Err(Error::Degenerate("logistic regression needs at least one example".into()));
    }
    if let Some(&t) = tiers.iter().find(|&&t| t >= TIER_COUNT) {
        return Err(Error::Degenerate(format!("tier ordinal {t} outside 0..6")));
    }
    if !(cfg.reg >= 0.0 && cfg.reg.is_finite()) || !(cfg.tol > 0.0) {
        return Err(Error::Config("logistic reg must be ≥ 0 and tol > 0".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic design matrix"));
    }
    let mut onehot = DMatrix::zeros(x.nrows(), TIER_COUNT);
    for (i, &t) in tiers.iter().enumerate() {
        onehot[(i, t)] = 1.0;
    }
    let problem = Problem { x, onehot, reg: cfg.reg };

    let mut step = 1.0 / lipschitz_estimate(x, cfg.reg);
    let mut current = LogisticModel::zeros(x.ncols(), cfg.reg);
    let mut current_value = problem.objective(&current);
    let mut lookahead = current.clone();
    let mut momentum = 1.0f64;
    let mut grad_norm = f64::INFINITY;

    for iter in 0..cfg.max_iter {
        let (look_value, grad) = problem.value_and_gradient(&lookahead);
        let g2 = norm_sq(&grad);
        grad_norm = g2.sqrt();
        if grad_norm <= cfg.tol {
            return Ok(LogisticFit { model: lookahead, iterations: iter, grad_norm, converged: true });
        }
        let (next, next_value) = loop {
            let candidate = axpy(&lookahead, -step, &grad);
            let value = problem.objective(&candidate);
            if value <= look_value - 0.5 * step * g2 || step < 1e-300 {
                break (candidate, value);
            }
            step *= 0.5;
        };
        if !next_value.is_finite() {
            return Err(Error::NonFinite("logistic objective"));
        }
        if next_value > current_value {
            // Restart momentum from the last accepted point.
            momentum = 1.0;
            lookahead = current.clone();
            continue;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let delta = axpy(&next, -1.0, &current);
        lookahead = axpy(&next, beta, &delta);
        momentum = next_momentum;
        current = next;
        current_value = next_value;
    }
    log::warn!(
        "logistic regression stopped at the {}-iteration budget with gradient norm {:.3e}",
        cfg.max_iter,
        grad_norm
    );
    let (_, grad) = problem.value_and_gradient(&current);
    Ok(LogisticFit { model: current, iterations: cfg.max_iter, grad_norm: norm_sq(&grad).sqrt(), converged: false })
}

//! Evaluation statistics for regression and tier classification probes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Tier, TIER_COUNT};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionScore {
    pub r2: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScore {
    pub accuracy: f64,
    pub weighted_f1: f64,
}

/// `r2 = 1 - SS_res / SS_tot` with `SS_tot` taken about the mean of
/// `y_true`. Fails when `y_true` has zero variance.
pub fn r2_mse(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionScore> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension { context: "r2_mse", expected: y_true.len(), actual: y_pred.len() });
    }
    if y_true.len() < 2 {
        return Err(Error::Degenerate("R² needs at least two targets".into()));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("r2_mse input"));
    }
    let mean = stats::mean(y_true);
    let res: Vec<f64> = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).collect();
    let tot: Vec<f64> = y_true.iter().map(|t| (t - mean) * (t - mean)).collect();
    let ss_res = stats::sum(&res);
    let ss_tot = stats::sum(&tot);
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("target has zero variance; R² undefined".into()));
    }
    Ok(RegressionScore { r2: 1.0 - ss_res / ss_tot, mse: ss_res / y_true.len() as f64 })
}

fn check_tiers(true_tiers: &[usize], pred_tiers: &[usize]) -> Result<()> {
    if true_tiers.len() != pred_tiers.len() {
        return Err(Error::Dimension { context: "tier labels", expected: true_tiers.len(), actual: pred_tiers.len() });
    }
    if true_tiers.is_empty() {
        return Err(Error::Degenerate("no examples to score".into()));
    }
    if let Some(&bad) = true_tiers.iter().chain(pred_tiers).find(|&&t| t >= TIER_COUNT) {
        return Err(Error::Degenerate(format!("tier ordinal {bad} outside 0..6")));
    }
    Ok(())
}

/// Counts over the fixed 7-tier order; row = true tier, column = predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; TIER_COUNT]; TIER_COUNT],
}

/// Outcome of [`ConfusionMatrix::adjacency_error_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdjacencyRate {
    Rate(f64),
    NoErrors,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..TIER_COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; TIER_COUNT] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn col_sums(&self) -> [u64; TIER_COUNT] {
        let mut out = [0; TIER_COUNT];
        for row in &self.counts {
            for (j, c) in row.iter().enumerate() {
                out[j] += c;
            }
        }
        out
    }

    /// Per-class F1 from the counts; 0 where precision + recall is 0.
    pub fn per_class_f1(&self) -> [f64; TIER_COUNT] {
        let rows = self.row_sums();
        let cols = self.col_sums();
        std::array::from_fn(|k| {
            let tp = self.counts[k][k];
            let denom = rows[k] + cols[k];
            if tp == 0 || denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
    }

    pub fn score(&self) -> ClassificationScore {
        let n = self.total() as f64;
        let rows = self.row_sums();
        let f1 = self.per_class_f1();
        let weighted: Vec<f64> = (0..TIER_COUNT).map(|k| rows[k] as f64 / n * f1[k]).collect();
        ClassificationScore { accuracy: self.trace() as f64 / n, weighted_f1: stats::sum(&weighted) }
    }

    /// Share of misclassifications that land on a neighbouring tier.
    pub fn adjacency_error_rate(&self) -> AdjacencyRate {
        let mut adjacent = 0u64;
        let mut errors = 0u64;
        for i in 0..TIER_COUNT {
            for j in 0..TIER_COUNT {
                if i != j {
                    errors += self.counts[i][j];
                    if i.abs_diff(j) == 1 {
                        adjacent += self.counts[i][j];
                    }
                }
            }
        }
        if errors == 0 {
            AdjacencyRate::NoErrors
        } else {
            AdjacencyRate::Rate(adjacent as f64 / errors as f64)
        }
    }

    /// Tab-separated grid with tier-name headers on both axes.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("true\\pred");
        for t in Tier::ALL {
            write!(out, "\t{t}").unwrap();
        }
        out.push('\n');
        for (t, row) in Tier::ALL.iter().zip(&self.counts) {
            out.push_str(t.name());
            for c in row {
                write!(out, "\t{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(true_tiers: &[usize], pred_tiers: &[usize]) -> Result<ConfusionMatrix> {
    check_tiers(true_tiers, pred_tiers)?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in true_tiers.iter().zip(pred_tiers) {
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

pub fn accuracy_weighted_f1(true_tiers: &[usize], pred_tiers: &[usize]) -> Result<ClassificationScore> {
    Ok(confusion(true_tiers, pred_tiers)?.score())
}

pub fn adjacency_error_rate(cm: &ConfusionMatrix) -> AdjacencyRate {
    cm.adjacency_error_rate()
}

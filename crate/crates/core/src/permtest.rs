//! Monte-Carlo label-permutation significance tests.
//!
//! The observed statistic is the protocol's mean test metric (ridge R² for
//! energy, logistic weighted F1 for tiers). Each null sample permutes the
//! full label vector, keeps the embeddings and the split seeds fixed, and
//! reruns the same protocol. Draw `i` shuffles with substream `i` of the
//! configured seed, so results do not depend on scheduling.

use std::fmt::Write as _;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelVector;
use crate::error::{Error, Result};
use crate::probes::{ProbeConfig, RegressionProbe};
use crate::protocol::{self, FeatureSource, PreparedSplits, SplitPlan, SplitRecord, Task};
use crate::{rng, stats};

pub const DEFAULT_PERMUTATIONS: usize = 200;
pub const DEFAULT_HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub task: Task,
    pub permutations: usize,
    pub rng_seed: u64,
    pub plan: SplitPlan,
    /// Regression probe for the energy task. Only ridge unless
    /// `allow_nonlinear` is set.
    pub probe: RegressionProbe,
    pub allow_nonlinear: bool,
}

impl PermutationConfig {
    pub fn new(task: Task, plan: SplitPlan) -> Self {
        PermutationConfig {
            task,
            permutations: DEFAULT_PERMUTATIONS,
            rng_seed: 0,
            plan,
            probe: RegressionProbe::Ridge,
            allow_nonlinear: false,
        }
    }

    pub fn statistic_name(&self) -> &'static str {
        match (self.task, self.probe) {
            (Task::EnergyRegression, RegressionProbe::Ridge) => "mean ridge R2",
            (Task::EnergyRegression, RegressionProbe::Mlp) => "mean MLP R2",
            (Task::TierClassification, _) => "mean weighted F1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub task: Task,
    pub statistic: String,
    pub probe: String,
    pub observed: f64,
    pub null_samples: Vec<f64>,
    pub exceed_count: usize,
    pub permutations: usize,
    pub p_value: f64,
    pub rng_seed: u64,
    pub split_seeds: Vec<u64>,
    pub prng: String,
}

/// `(1 + exceed) / (n + 1)`.
pub fn smoothed_p_value(exceed_count: usize, permutations: usize) -> f64 {
    (1 + exceed_count) as f64 / (permutations + 1) as f64
}

/// Ties count as exceedances.
pub fn count_exceedances(null_samples: &[f64], observed: f64) -> usize {
    null_samples.iter().filter(|&&t| t >= observed).count()
}

/// Fisher-Yates permutation of a copy of `y`; advances `rng`.
pub fn permute_labels<T: Clone, R: RngCore>(y: &[T], rng: &mut R) -> Vec<T> {
    let mut out = y.to_vec();
    rng::shuffle(rng, &mut out);
    out
}

fn statistic(records: &[SplitRecord], metric: &str) -> f64 {
    let values: Vec<f64> = records.iter().map(|r| r.metrics[metric]).collect();
    stats::mean(&values)
}

pub fn run_permutation_test(
    x: &dyn FeatureSource,
    y: &LabelVector,
    cfg: &PermutationConfig,
    probe_cfg: &ProbeConfig,
) -> Result<PermutationReport> {
    if cfg.permutations == 0 {
        return Err(Error::Config("permutation count must be at least 1".into()));
    }
    if cfg.probe != RegressionProbe::Ridge && !cfg.allow_nonlinear {
        return Err(Error::Config("permutation tests use the linear probe unless nonlinear probes are enabled".into()));
    }
    if y.len() < 2 {
        return Err(Error::Degenerate("need at least two labels to permute".into()));
    }
    let prepared = PreparedSplits::new(x, &cfg.plan)?;
    let (observed, null_samples) = match (cfg.task, y) {
        (Task::EnergyRegression, LabelVector::Energy(v)) => {
            let eval = |labels: &[f64]| -> Result<f64> {
                Ok(statistic(&prepared.evaluate_regression(labels, cfg.probe, probe_cfg)?, "r2"))
            };
            (eval(v)?, null_distribution(v, cfg, eval)?)
        }
        (Task::TierClassification, LabelVector::Tier(v)) => {
            let eval = |labels: &[usize]| -> Result<f64> {
                Ok(statistic(&prepared.evaluate_classification(labels, probe_cfg)?, "weighted_f1"))
            };
            (eval(v)?, null_distribution(v, cfg, eval)?)
        }
        (task, labels) => {
            return Err(Error::Config(format!("task {} does not match {:?} labels", task.name(), labels.kind())))
        }
    };
    let exceed_count = count_exceedances(&null_samples, observed);
    Ok(PermutationReport {
        task: cfg.task,
        statistic: cfg.statistic_name().into(),
        probe: match cfg.task {
            Task::EnergyRegression => cfg.probe.name().into(),
            Task::TierClassification => "logistic".into(),
        },
        observed,
        exceed_count,
        permutations: cfg.permutations,
        p_value: smoothed_p_value(exceed_count, cfg.permutations),
        null_samples,
        rng_seed: cfg.rng_seed,
        split_seeds: cfg.plan.seeds.clone(),
        prng: rng::PRNG_ALGORITHM.into(),
    })
}

fn null_distribution<T, F>(y: &[T], cfg: &PermutationConfig, eval: F) -> Result<Vec<f64>>
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> Result<f64> + Sync,
{
    (0..cfg.permutations)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng::substream(cfg.rng_seed, i as u64);
            let permuted = permute_labels(y, &mut stream);
            eval(&permuted).map_err(|e| Error::AtPermutation { index: i, source: Box::new(e) })
        })
        .collect()
}

/// Histogram of the null samples with the observed statistic alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub observed: f64,
}

impl NullHistogram {
    /// `bin_left, bin_right, count` rows, then a final `T_obs` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("bin_left\tbin_right\tcount\n");
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{:?}\t{:?}\t{c}", self.edges[i], self.edges[i + 1]).unwrap();
        }
        writeln!(out, "T_obs\t{:?}", self.observed).unwrap();
        out
    }
}

pub fn export_null(report: &PermutationReport, bins: usize) -> NullHistogram {
    let bins = bins.max(1);
    let samples = &report.null_samples;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let idx = (((v - lo) / (hi - lo)) * bins as f64).floor();
        counts[(idx.max(0.0) as usize).min(bins - 1)] += 1;
    }
    NullHistogram { edges, counts, observed: report.observed }
}

/// Observed statistic only, through the same protocol path.
pub fn observed_statistic(
    x: &dyn FeatureSource,
    y: &LabelVector,
    plan: &SplitPlan,
    probe: RegressionProbe,
    probe_cfg: &ProbeConfig,
) -> Result<f64> {
    match y {
        LabelVector::Energy(v) => Ok(protocol::run_regression_protocol(x, v, plan, probe, probe_cfg)?.mean["r2"]),
        LabelVector::Tier(v) => Ok(protocol::run_classification_protocol(x, v, plan, probe_cfg)?.mean["weighted_f1"]),
    }
}

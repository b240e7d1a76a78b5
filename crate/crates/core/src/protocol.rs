//! Repeated seeded train/test evaluation.
//!
//! Each seed drives a Fisher-Yates shuffle of `0..n`; the first
//! `round(n · test_fraction)` shuffled indices form the test set. Probes are
//! fit on the train rows and scored on the test rows, and per-split metrics
//! are reduced to mean and sample standard deviation in seed order.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TIER_COUNT;
use crate::error::{Error, Result};
use crate::metrics::{self, ConfusionMatrix};
use crate::probes::{self, ProbeConfig, RegressionProbe, RidgeSolver};
use crate::{rng, stats};

pub const DEFAULT_SPLITS: u64 = 30;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const MIN_EXAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    EnergyRegression,
    TierClassification,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::EnergyRegression => "energy_regression",
            Task::TierClassification => "tier_classification",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n: usize,
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
    /// Per-example stratum (tier ordinal). When present, each stratum is
    /// split separately.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<Vec<usize>>,
}

impl SplitPlan {
    /// Seeds 0..29, 20% test.
    pub fn standard(n: usize) -> Self {
        SplitPlan { n, test_fraction: DEFAULT_TEST_FRACTION, seeds: (0..DEFAULT_SPLITS).collect(), strata: None }
    }

    pub fn test_size(&self) -> usize {
        (self.n as f64 * self.test_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_EXAMPLES {
            return Err(Error::Degenerate(format!("need at least {MIN_EXAMPLES} examples, got {}", self.n)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction {} not in (0, 1)", self.test_fraction)));
        }
        let t = self.test_size();
        if t == 0 || t >= self.n {
            return Err(Error::Degenerate(format!("split of {} gives {t} test rows", self.n)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no split seeds".into()));
        }
        if let Some(s) = &self.strata {
            if s.len() != self.n {
                return Err(Error::Dimension { context: "split strata", expected: self.n, actual: s.len() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn split_for_seed(plan: &SplitPlan, seed: u64) -> Split {
    let mut stream = rng::stream(seed);
    match &plan.strata {
        None => {
            let mut order: Vec<usize> = (0..plan.n).collect();
            rng::shuffle(&mut stream, &mut order);
            let train = order.split_off(plan.test_size());
            Split { seed, train, test: order }
        }
        Some(strata) => {
            let groups = strata.iter().copied().max().map_or(0, |m| m + 1);
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for g in 0..groups {
                let mut members: Vec<usize> = (0..plan.n).filter(|&i| strata[i] == g).collect();
                rng::shuffle(&mut stream, &mut members);
                let k = (members.len() as f64 * plan.test_fraction).round() as usize;
                test.extend_from_slice(&members[..k]);
                train.extend_from_slice(&members[k..]);
            }
            Split { seed, train, test }
        }
    }
}

pub fn make_splits(plan: &SplitPlan) -> Result<Vec<Split>> {
    plan.validate()?;
    let splits: Vec<Split> = plan.seeds.iter().map(|&s| split_for_seed(plan, s)).collect();
    for s in &splits {
        if s.train.is_empty() || s.test.is_empty() {
            return Err(Error::Degenerate(format!("seed {} produced an empty side", s.seed)).at_seed(s.seed));
        }
    }
    Ok(splits)
}

/// Supplies (train, test) feature matrices for a split. Sources that learn
/// from text (TF-IDF) fit on the train rows only.
pub trait FeatureSource: Sync {
    fn len(&self) -> usize;

    fn features(&self, split: &Split) -> Result<(DMatrix<f64>, DMatrix<f64>)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn describe(&self) -> String {
        "embeddings".into()
    }
}

pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

impl FeatureSource for DMatrix<f64> {
    fn len(&self) -> usize {
        self.nrows()
    }

    fn features(&self, split: &Split) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((select_rows(self, &split.train), select_rows(self, &split.test)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateOutcome {
    pub task: Task,
    pub probe: String,
    pub features: String,
    pub config: ProbeConfig,
    pub test_fraction: f64,
    pub stratified: bool,
    pub seeds: Vec<u64>,
    pub prng: String,
    pub per_split: Vec<SplitRecord>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
    /// Seed of the split whose confusion matrix is representative (seed 0
    /// when present, otherwise the first seed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AggregateOutcome {
    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        self.mean.get(metric).copied()
    }

    pub fn representative_confusion(&self) -> Option<&ConfusionMatrix> {
        let seed = self.representative_seed?;
        self.per_split.iter().find(|r| r.seed == seed)?.confusion.as_ref()
    }

    pub fn metric_values(&self, metric: &str) -> Vec<f64> {
        self.per_split.iter().filter_map(|r| r.metrics.get(metric).copied()).collect()
    }
}

/// Reduces per-split records (sorted by seed first) to mean / std maps.
pub fn aggregate(mut records: Vec<SplitRecord>) -> (Vec<SplitRecord>, BTreeMap<String, f64>, BTreeMap<String, f64>) {
    records.sort_by_key(|r| r.seed);
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    let names: Vec<String> = records.first().map(|r| r.metrics.keys().cloned().collect()).unwrap_or_default();
    for name in names {
        let values: Vec<f64> = records.iter().map(|r| r.metrics[&name]).collect();
        mean.insert(name.clone(), stats::mean(&values));
        std.insert(name, stats::std_dev(&values));
    }
    (records, mean, std)
}

struct PreparedSplit {
    split: Split,
    train_x: DMatrix<f64>,
    test_x: DMatrix<f64>,
    ridge: OnceLock<(f64, RidgeSolver)>,
}

/// Splits with their feature matrices materialized once, so repeated
/// evaluations against different label vectors (the permutation null) share
/// the expensive parts.
pub struct PreparedSplits {
    items: Vec<PreparedSplit>,
    features: String,
    plan: SplitPlan,
}

impl PreparedSplits {
    pub fn new(source: &dyn FeatureSource, plan: &SplitPlan) -> Result<Self> {
        if source.len() != plan.n {
            return Err(Error::Dimension { context: "split plan size", expected: source.len(), actual: plan.n });
        }
        let splits = make_splits(plan)?;
        let items = splits
            .into_par_iter()
            .map(|split| {
                let (train_x, test_x) = source.features(&split).map_err(|e| e.at_seed(split.seed))?;
                Ok(PreparedSplit { split, train_x, test_x, ridge: OnceLock::new() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedSplits { items, features: source.describe(), plan: plan.clone() })
    }

    pub fn plan(&self) -> &SplitPlan {
        &self.plan
    }

    pub fn splits(&self) -> impl Iterator<Item = &Split> {
        self.items.iter().map(|p| &p.split)
    }

    fn ridge_predict(item: &PreparedSplit, y_train: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let model = match item.ridge.get() {
            Some((cached_alpha, solver)) if *cached_alpha == alpha => solver.solve(y_train)?,
            _ => {
                let solver = RidgeSolver::new(&item.train_x, alpha)?;
                let model = solver.solve(y_train)?;
                let _ = item.ridge.set((alpha, solver));
                model
            }
        };
        probes::predict_ridge(&model, &item.test_x)
    }

    fn regression_record(&self, item: &PreparedSplit, y: &[f64], probe: RegressionProbe, cfg: &ProbeConfig) -> Result<SplitRecord> {
        let y_train: Vec<f64> = item.split.train.iter().map(|&i| y[i]).collect();
        let y_test: Vec<f64> = item.split.test.iter().map(|&i| y[i]).collect();
        let pred = match probe {
            RegressionProbe::Ridge => Self::ridge_predict(item, &y_train, cfg.ridge.alpha)?,
            RegressionProbe::Mlp => {
                let fit = probes::fit_mlp(&item.train_x, &y_train, item.split.seed, &cfg.mlp)?;
                probes::predict_mlp(&fit.model, &item.test_x)?
            }
        };
        let score = metrics::r2_mse(&y_test, &pred)?;
        Ok(SplitRecord {
            seed: item.split.seed,
            n_train: y_train.len(),
            n_test: y_test.len(),
            metrics: BTreeMap::from([("r2".to_string(), score.r2), ("mse".to_string(), score.mse)]),
            converged: None,
            confusion: None,
        })
    }

    fn classification_record(&self, item: &PreparedSplit, tiers: &[usize], cfg: &ProbeConfig) -> Result<SplitRecord> {
        let t_train: Vec<usize> = item.split.train.iter().map(|&i| tiers[i]).collect();
        let t_test: Vec<usize> = item.split.test.iter().map(|&i| tiers[i]).collect();
        let mut present = [false; TIER_COUNT];
        for &t in &t_train {
            if t < TIER_COUNT {
                present[t] = true;
            }
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Degenerate("classifier requires at least 2 classes in the training split".into()));
        }
        let fit = probes::fit_logistic(&item.train_x, &t_train, &cfg.logistic)?;
        let pred = probes::predict_tier(&fit.model, &item.test_x)?;
        let cm = metrics::confusion(&t_test, &pred.tiers)?;
        let score = cm.score();
        Ok(SplitRecord {
            seed: item.split.seed,
            n_train: t_train.len(),
            n_test: t_test.len(),
            metrics: BTreeMap::from([
                ("accuracy".to_string(), score.accuracy),
                ("weighted_f1".to_string(), score.weighted_f1),
            ]),
            converged: Some(fit.converged),
            confusion: Some(cm),
        })
    }

    pub fn evaluate_regression(&self, y: &[f64], probe: RegressionProbe, cfg: &ProbeConfig) -> Result<Vec<SplitRecord>> {
        if y.len() != self.plan.n {
            return Err(Error::Dimension { context: "energy labels", expected: self.plan.n, actual: y.len() });
        }
        self.items
            .par_iter()
            .map(|item| self.regression_record(item, y, probe, cfg).map_err(|e| e.at_seed(item.split.seed)))
            .collect()
    }

    pub fn evaluate_classification(&self, tiers: &[usize], cfg: &ProbeConfig) -> Result<Vec<SplitRecord>> {
        if tiers.len() != self.plan.n {
            return Err(Error::Dimension { context: "tier labels", expected: self.plan.n, actual: tiers.len() });
        }
        self.items
            .par_iter()
            .map(|item| self.classification_record(item, tiers, cfg).map_err(|e| e.at_seed(item.split.seed)))
            .collect()
    }

    fn outcome(&self, task: Task, probe: &str, cfg: &ProbeConfig, records: Vec<SplitRecord>) -> AggregateOutcome {
        let (per_split, mean, std) = aggregate(records);
        let mut notes = Vec::new();
        let unconverged = per_split.iter().filter(|r| r.converged == Some(false)).count();
        if unconverged > 0 {
            notes.push(format!(
                "{unconverged} of {} logistic fits stopped at the iteration budget before reaching the gradient tolerance",
                per_split.len()
            ));
        }
        let representative_seed = (task == Task::TierClassification)
            .then(|| if self.plan.seeds.contains(&0) { 0 } else { self.plan.seeds[0] });
        AggregateOutcome {
            task,
            probe: probe.to_string(),
            features: self.features.clone(),
            config: *cfg,
            test_fraction: self.plan.test_fraction,
            stratified: self.plan.strata.is_some(),
            seeds: per_split.iter().map(|r| r.seed).collect(),
            prng: rng::PRNG_ALGORITHM.to_string(),
            per_split,
            mean,
            std,
            representative_seed,
            notes,
        }
    }

    pub fn regression_outcome(&self, y: &[f64], probe: RegressionProbe, cfg: &ProbeConfig) -> Result<AggregateOutcome> {
        let records = self.evaluate_regression(y, probe, cfg)?;
        Ok(self.outcome(Task::EnergyRegression, probe.name(), cfg, records))
    }

    pub fn classification_outcome(&self, tiers: &[usize], cfg: &ProbeConfig) -> Result<AggregateOutcome> {
        let records = self.evaluate_classification(tiers, cfg)?;
        Ok(self.outcome(Task::TierClassification, "logistic", cfg, records))
    }
}

pub fn run_regression_protocol(
    x: &dyn FeatureSource,
    y_energy: &[f64],
    plan: &SplitPlan,
    probe: RegressionProbe,
    cfg: &ProbeConfig,
) -> Result<AggregateOutcome> {
    PreparedSplits::new(x, plan)?.regression_outcome(y_energy, probe, cfg)
}

pub fn run_classification_protocol(
    x: &dyn FeatureSource,
    tiers: &[usize],
    plan: &SplitPlan,
    cfg: &ProbeConfig,
) -> Result<AggregateOutcome> {
    PreparedSplits::new(x, plan)?.classification_outcome(tiers, cfg)
}

//! Run configuration: every default hyperparameter in one TOML document.
//!
//! ```toml
//! [split]
//! splits = 30
//! test_fraction = 0.2
//! stratify = false
//!
//! [probes.ridge]
//! alpha = 1.0
//!
//! [permutation]
//! permutations = 200
//! ```
//!
//! Missing tables and keys take their defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexical::TfidfConfig;
use crate::permtest::{DEFAULT_HISTOGRAM_BINS, DEFAULT_PERMUTATIONS};
use crate::probes::ProbeConfig;
use crate::protocol::{SplitPlan, DEFAULT_SPLITS, DEFAULT_TEST_FRACTION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Number of split seeds, `first_seed..first_seed + splits`.
    pub splits: u64,
    pub first_seed: u64,
    pub test_fraction: f64,
    /// Split each tier separately.
    pub stratify: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { splits: DEFAULT_SPLITS, first_seed: 0, test_fraction: DEFAULT_TEST_FRACTION, stratify: false }
    }
}

impl SplitConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (self.first_seed..self.first_seed.saturating_add(self.splits)).collect()
    }

    pub fn plan(&self, tiers: &[usize]) -> SplitPlan {
        SplitPlan {
            n: tiers.len(),
            test_fraction: self.test_fraction,
            seeds: self.seeds(),
            strata: self.stratify.then(|| tiers.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermutationSettings {
    pub permutations: usize,
    pub rng_seed: u64,
    pub histogram_bins: usize,
    /// Permit the MLP as the permutation statistic (slow).
    pub allow_nonlinear: bool,
}

impl Default for PermutationSettings {
    fn default() -> Self {
        PermutationSettings {
            permutations: DEFAULT_PERMUTATIONS,
            rng_seed: 0,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            allow_nonlinear: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    /// L2-normalize rows on load unless the manifest says they already are.
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub split: SplitConfig,
    pub probes: ProbeConfig,
    pub permutation: PermutationSettings,
    pub tfidf: TfidfConfig,
    pub embeddings: EmbeddingSettings,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let s = &self.split;
        if s.splits == 0 {
            return bad("split.splits must be at least 1".into());
        }
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            return bad(format!("split.test_fraction {} not in (0, 1)", s.test_fraction));
        }
        let p = &self.probes;
        if !(p.ridge.alpha.is_finite() && p.ridge.alpha > 0.0) {
            return bad(format!("probes.ridge.alpha must be positive, got {}", p.ridge.alpha));
        }
        let l = &p.logistic;
        if !(l.reg.is_finite() && l.reg >= 0.0) || !(l.tol.is_finite() && l.tol > 0.0) || l.max_iter == 0 {
            return bad("probes.logistic needs reg ≥ 0, tol > 0 and max_iter ≥ 1".into());
        }
        let m = &p.mlp;
        if m.hidden.contains(&0) || m.epochs == 0 {
            return bad("probes.mlp needs non-zero hidden sizes and epochs".into());
        }
        if !(m.learning_rate.is_finite() && m.learning_rate > 0.0) || !(m.epsilon.is_finite() && m.epsilon > 0.0) {
            return bad("probes.mlp learning_rate and epsilon must be positive".into());
        }
        if !((0.0..1.0).contains(&m.beta1) && (0.0..1.0).contains(&m.beta2)) {
            return bad("probes.mlp beta1 and beta2 must lie in [0, 1)".into());
        }
        if self.permutation.permutations == 0 {
            return bad("permutation.permutations must be at least 1".into());
        }
        if self.permutation.histogram_bins == 0 {
            return bad("permutation.histogram_bins must be at least 1".into());
        }
        Ok(())
    }
}

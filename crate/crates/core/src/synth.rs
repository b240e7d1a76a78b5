//! Synthetic corpora with planted tier/energy structure.
//!
//! Tier `t` has mean energy `μ_t = (t - 3) * 5/3`. Record energies are `μ_t`
//! plus a truncated-normal jitter, and embeddings are
//! `s * f(μ_t) * u + σ * g` for a seeded unit axis `u` and isotropic noise
//! `g`. In linear mode `f` is the identity; in curved mode it
//! stretches the outer tiers, which a linear probe cannot undo.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SentenceRecord, Tier};
use crate::embedstore::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng;

pub const JITTER_BOUND: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    #[default]
    Linear,
    /// `f(μ) = c * sinh(μ / c)` with `c = CURVE_SCALE`.
    Curved,
}

pub const CURVE_SCALE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_per_tier: usize,
    pub dim: usize,
    pub signal: f64,
    pub noise: f64,
    /// Standard deviation of the energy jitter before truncation to ±0.3.
    pub jitter: f64,
    pub mode: SynthMode,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n_per_tier: 40, dim: 64, signal: 1.0, noise: 0.1, jitter: 0.1, mode: SynthMode::Linear, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_tier < 1 {
            return Err(Error::Config("synth needs at least one record per tier".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("synth dimension must be at least 2".into()));
        }
        for (name, v) in [("signal", self.signal), ("noise", self.noise), ("jitter", self.jitter)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("synth {name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn model_name(&self) -> String {
        let mode = match self.mode {
            SynthMode::Linear => "linear",
            SynthMode::Curved => "curved",
        };
        format!("synth-{mode}-s{}-n{}-seed{}", self.signal, self.noise, self.seed)
    }
}

pub fn tier_mean(t: Tier) -> f64 {
    (t.ordinal() as f64 - 3.0) * (5.0 / 3.0)
}

fn planted(mode: SynthMode, mu: f64) -> f64 {
    match mode {
        SynthMode::Linear => mu,
        SynthMode::Curved => CURVE_SCALE * (mu / CURVE_SCALE).sinh(),
    }
}

fn gaussian<R: RngCore>(r: &mut R) -> f64 {
    StandardNormal.sample(r)
}

fn jitter<R: RngCore>(r: &mut R, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    loop {
        let v = sd * gaussian(r);
        if v.abs() <= JITTER_BOUND {
            return v;
        }
    }
}

/// The planted unit axis for `seed`.
pub fn signal_axis(dim: usize, seed: u64) -> DVector<f64> {
    let mut r = rng::substream(seed, 0);
    loop {
        let v = DVector::from_fn(dim, |_, _| gaussian(&mut r));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Records are ordered tier by tier with ids `syn-<ordinal>-<index>`.
pub fn generate(cfg: &SynthConfig) -> Result<(Corpus, EmbeddingMatrix)> {
    cfg.validate()?;
    let n = cfg.n_per_tier * Tier::ALL.len();
    let u = signal_axis(cfg.dim, cfg.seed);
    let mut noise = rng::substream(cfg.seed, 1);
    let mut jit = rng::substream(cfg.seed, 2);

    let mut records = Vec::with_capacity(n);
    let mut data = DMatrix::zeros(n, cfg.dim);
    for (t, tier) in Tier::ALL.iter().enumerate() {
        let mu = tier_mean(*tier);
        let along = cfg.signal * planted(cfg.mode, mu);
        for i in 0..cfg.n_per_tier {
            let row = t * cfg.n_per_tier + i;
            let id = format!("syn-{t}-{i:04}");
            let energy = (mu + jitter(&mut jit, cfg.jitter)).clamp(-5.0, 5.0);
            records.push(SentenceRecord { text: format!("placeholder {id}"), id, tier: *tier, energy });
            for j in 0..cfg.dim {
                data[(row, j)] = along * u[j] + cfg.noise * gaussian(&mut noise);
            }
        }
    }
    let ids = records.iter().map(|r| r.id.clone()).collect();
    let corpus = Corpus::new(records, cfg.model_name())?;
    let matrix = EmbeddingMatrix::new(data, ids, cfg.model_name())?;
    Ok((corpus, matrix))
}

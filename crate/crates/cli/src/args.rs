use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tierprobe::probes::RegressionProbe;
use tierprobe::synth::SynthMode;

#[derive(Debug, Parser)]
#[command(name = "tierprobe", version, about = "Probe sentence embeddings for ordinal tier and energy structure")]
pub struct Cli {
    /// Worker threads for splits and permutations (output does not depend on it).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    /// TOML file with default hyperparameters; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a corpus and, optionally, its alignment with an embedding file.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Run the repeated-split probe protocol on embeddings.
    Probe {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Regression probe for the energy task: ridge or mlp.
        #[arg(long, default_value = "ridge")]
        probe: RegressionProbe,
        #[command(flatten)]
        protocol: ProtocolFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label-permutation significance test.
    Permtest {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        probe: Option<RegressionProbe>,
        /// Number of permutations (default 200).
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long)]
        rng_seed: Option<u64>,
        /// Histogram bins for the null distribution export.
        #[arg(long)]
        bins: Option<usize>,
        /// Allow the MLP as the permutation statistic.
        #[arg(long)]
        allow_nonlinear: bool,
        #[command(flatten)]
        protocol: ProtocolFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// TF-IDF lexical baseline through the same protocol.
    Baseline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, default_value = "ridge")]
        probe: RegressionProbe,
        /// Add word bigrams to the vocabulary.
        #[arg(long)]
        bigrams: bool,
        /// Also write the vocabulary fitted on this split seed's training texts.
        #[arg(long)]
        vocab_seed: Option<u64>,
        #[command(flatten)]
        protocol: ProtocolFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// PCA projection table colored by energy.
    Project {
        #[command(flatten)]
        inputs: Inputs,
        /// Number of components.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
        k: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Consolidated tables from one or more result bundles.
    Report {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        /// Also write the tables as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write a synthetic corpus and embedding file with planted structure.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 40)]
        n_per_tier: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, value_enum, default_value = "linear")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Embedding manifest (TOML).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// L2-normalize rows that are not already normalized.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct ProtocolFlags {
    /// Number of split seeds.
    #[arg(long)]
    pub splits: Option<u64>,
    #[arg(long)]
    pub first_seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Split each tier separately.
    #[arg(long)]
    pub stratify: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// MLP training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Energy,
    Tier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Linear,
    Curved,
}

impl From<ModeArg> for SynthMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Linear => SynthMode::Linear,
            ModeArg::Curved => SynthMode::Curved,
        }
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use log::warn;
use tierprobe::config::RunConfig;
use tierprobe::corpus::{load_corpus, Corpus, CorpusError, LabelKind};
use tierprobe::embedstore::{self, read_embeddings, sha256_hex, EmbeddingManifest, EmbeddingMatrix};
use tierprobe::lexical::TfidfSource;
use tierprobe::permtest::{export_null, run_permutation_test, PermutationConfig};
use tierprobe::probes::RegressionProbe;
use tierprobe::projection::{pca_fit, pca_project};
use tierprobe::protocol::{
    make_splits, run_classification_protocol, run_regression_protocol, AggregateOutcome, FeatureSource, SplitPlan, Task,
};
use tierprobe::report::{decision_notes, parse_bundle, report_tables, BundleLabel, ResultBundle, RunManifest};
use tierprobe::rng::PRNG_ALGORITHM;
use tierprobe::synth::{generate, SynthConfig};
use tierprobe::Error;

use crate::args::{Cli, Command, Inputs, ProtocolFlags, TaskArg};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, files or settings.
    Invalid(String),
    /// Numerical failure while fitting.
    Compute(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Compute(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Compute(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Compute(e.to_string())
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Error::from(e).into()
    }
}

impl From<embedstore::EmbedError> for Failure {
    fn from(e: embedstore::EmbedError) -> Self {
        Error::from(e).into()
    }
}

type Outcome = Result<(), Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Invalid(format!("{}: {e}", path.display()))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

struct Run {
    config: RunConfig,
    started: String,
    inputs: BTreeMap<String, String>,
}

impl Run {
    fn new(cli: &Cli) -> Result<Self, Failure> {
        let config = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(Run { config, started: now(), inputs: BTreeMap::new() })
    }

    fn apply(&mut self, flags: &ProtocolFlags) -> Outcome {
        let cfg = &mut self.config;
        if let Some(v) = flags.splits {
            cfg.split.splits = v;
        }
        if let Some(v) = flags.first_seed {
            cfg.split.first_seed = v;
        }
        if let Some(v) = flags.test_fraction {
            cfg.split.test_fraction = v;
        }
        if flags.stratify {
            cfg.split.stratify = true;
        }
        if let Some(v) = flags.alpha {
            cfg.probes.ridge.alpha = v;
        }
        if let Some(v) = flags.epochs {
            cfg.probes.mlp.epochs = v;
        }
        cfg.validate()?;
        Ok(())
    }

    fn record_input(&mut self, path: &Path) -> Result<Vec<u8>, Failure> {
        let bytes = fs::read(path).map_err(|e| io_failure(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn corpus(&mut self, path: &Path) -> Result<Corpus, Failure> {
        self.record_input(path)?;
        Ok(load_corpus(path)?)
    }

    fn embeddings(&mut self, inputs: &Inputs, corpus: &Corpus) -> Result<EmbeddingMatrix, Failure> {
        if inputs.normalize {
            self.config.embeddings.normalize = true;
        }
        let text = self.record_input(&inputs.embeddings)?;
        let manifest = EmbeddingManifest::from_toml_str(&String::from_utf8_lossy(&text))?;
        let dir = inputs.embeddings.parent().unwrap_or(Path::new("."));
        self.record_input(&dir.join(&manifest.payload))?;
        let mut x = read_embeddings(&inputs.embeddings)?;
        embedstore::align(&x, corpus)?;
        if self.config.embeddings.normalize && !x.is_normalized() {
            x = embedstore::l2_normalize(&x)?;
        }
        Ok(x)
    }

    fn plan(&self, corpus: &Corpus) -> SplitPlan {
        self.config.split.plan(&corpus.tiers())
    }

    /// Writes the bundle, its companion files and the run manifest.
    fn finish(self, out: &Path, mut bundle: ResultBundle, companions: Vec<(&str, String)>) -> Outcome {
        let stem = stem(out);
        let mut files = Vec::new();
        for (kind, content) in companions {
            let path = sibling(out, &format!("{stem}.{kind}.tsv"));
            bundle.exports.insert(kind.to_string(), file_name(&path));
            files.push((path, content));
        }
        files.push((out.to_path_buf(), bundle.to_json()?));
        self.write_all(out, files)
    }

    fn write_all(self, out: &Path, files: Vec<(PathBuf, String)>) -> Outcome {
        let mut outputs = BTreeMap::new();
        for (path, content) in &files {
            write_file(path, content)?;
            outputs.insert(path.display().to_string(), sha256_hex(content.as_bytes()));
        }
        let manifest = RunManifest {
            command: std::env::args().collect(),
            config: self.config,
            inputs: self.inputs,
            outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            prng: PRNG_ALGORITHM.to_string(),
            started: self.started,
            finished: now(),
        };
        write_file(&sibling(out, &format!("{}.manifest.json", stem(out))), &manifest.to_json()?)
    }
}

fn stem(path: &Path) -> String {
    let name = file_name(path);
    name.strip_suffix(".json").or_else(|| name.strip_suffix(".tsv")).unwrap_or(&name).to_string()
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.with_file_name(name)
}

fn write_file(path: &Path, content: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, content).map_err(|e| io_failure(path, e))
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Energy => Task::EnergyRegression,
        TaskArg::Tier => Task::TierClassification,
    }
}

fn run_protocol(
    x: &dyn FeatureSource,
    corpus: &Corpus,
    task: Task,
    probe: RegressionProbe,
    run: &Run,
) -> Result<AggregateOutcome, Failure> {
    let plan = run.plan(corpus);
    let outcome = match task {
        Task::EnergyRegression => run_regression_protocol(x, &corpus.energies(), &plan, probe, &run.config.probes)?,
        Task::TierClassification => run_classification_protocol(x, &corpus.tiers(), &plan, &run.config.probes)?,
    };
    let stalled: Vec<u64> = outcome.per_split.iter().filter(|r| r.converged == Some(false)).map(|r| r.seed).collect();
    if !stalled.is_empty() {
        warn!("logistic fit hit the iteration limit on split seeds {stalled:?}");
    }
    Ok(outcome)
}

fn probe_names(task: Task, probe: RegressionProbe) -> Vec<&'static str> {
    match task {
        Task::EnergyRegression => vec![probe.name()],
        Task::TierClassification => vec!["logistic"],
    }
}

fn summarize(o: &AggregateOutcome) {
    for (name, mean) in &o.mean {
        println!("{:<12} mean {:.3}  std {:.3}", name, mean, o.std[name]);
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let mut run = Run::new(cli)?;
    match &cli.command {
        Command::Validate { corpus, embeddings } => validate(corpus, embeddings.as_deref()),

        Command::Probe { inputs, task, probe, protocol, out } => {
            run.apply(protocol)?;
            let corpus = run.corpus(&inputs.corpus)?;
            let x = run.embeddings(inputs, &corpus)?;
            let task = task_of(*task);
            let outcome = run_protocol(x.data(), &corpus, task, *probe, &run)?;
            summarize(&outcome);
            let mut bundle = ResultBundle::new(BundleLabel::Embedding, task, x.model_name());
            bundle.decisions = decision_notes(task, &probe_names(task, *probe), &run.config.probes);
            let mut companions = Vec::new();
            if let Some(cm) = outcome.representative_confusion() {
                companions.push(("confusion", cm.to_tsv()));
            }
            bundle.outcomes.push(outcome);
            run.finish(out, bundle, companions)
        }

        Command::Permtest { inputs, task, probe, permutations, rng_seed, bins, allow_nonlinear, protocol, out } => {
            run.apply(protocol)?;
            let p = &mut run.config.permutation;
            if let Some(v) = permutations {
                p.permutations = *v;
            }
            if let Some(v) = rng_seed {
                p.rng_seed = *v;
            }
            if let Some(v) = bins {
                p.histogram_bins = *v;
            }
            if *allow_nonlinear {
                p.allow_nonlinear = true;
            }
            run.config.validate()?;
            let corpus = run.corpus(&inputs.corpus)?;
            let x = run.embeddings(inputs, &corpus)?;
            let task = task_of(*task);
            let settings = run.config.permutation.clone();
            let cfg = PermutationConfig {
                task,
                permutations: settings.permutations,
                rng_seed: settings.rng_seed,
                plan: run.plan(&corpus),
                probe: probe.unwrap_or(RegressionProbe::Ridge),
                allow_nonlinear: settings.allow_nonlinear,
            };
            let kind = match task {
                Task::EnergyRegression => LabelKind::Energy,
                Task::TierClassification => LabelKind::Tier,
            };
            let report = run_permutation_test(x.data(), &corpus.labels(kind), &cfg, &run.config.probes)?;
            println!("statistic    {}", report.statistic);
            println!("observed     {:.3}", report.observed);
            println!("exceedances  {} of {}", report.exceed_count, report.permutations);
            println!("p-value      {:.5}", report.p_value);
            let hist = export_null(&report, settings.histogram_bins);
            let mut bundle = ResultBundle::new(BundleLabel::Embedding, task, x.model_name());
            bundle.decisions = decision_notes(task, &probe_names(task, cfg.probe), &run.config.probes);
            bundle.permutation = Some(report);
            run.finish(out, bundle, vec![("null", hist.to_tsv())])
        }

        Command::Baseline { corpus, task, probe, bigrams, vocab_seed, protocol, out } => {
            run.apply(protocol)?;
            if *bigrams {
                run.config.tfidf.bigrams = true;
            }
            let corpus = run.corpus(corpus)?;
            let source = TfidfSource::new(corpus.texts(), run.config.tfidf);
            let task = task_of(*task);
            let outcome = run_protocol(&source, &corpus, task, *probe, &run)?;
            summarize(&outcome);
            let mut bundle = ResultBundle::new(BundleLabel::LexicalBaseline, task, source.describe());
            bundle.decisions = decision_notes(task, &probe_names(task, *probe), &run.config.probes);
            let mut companions = Vec::new();
            if let Some(cm) = outcome.representative_confusion() {
                companions.push(("confusion", cm.to_tsv()));
            }
            if let Some(seed) = vocab_seed {
                let plan = SplitPlan { seeds: vec![*seed], ..run.plan(&corpus) };
                let split = make_splits(&plan)?.remove(0);
                companions.push(("vocab", source.vocabulary_for(&split)?.to_tsv()));
            }
            bundle.outcomes.push(outcome);
            run.finish(out, bundle, companions)
        }

        Command::Project { inputs, k, out } => {
            let corpus = run.corpus(&inputs.corpus)?;
            let x = run.embeddings(inputs, &corpus)?;
            let model = pca_fit(x.data(), *k as usize)?;
            let ids: Vec<String> = corpus.ids().iter().map(|s| s.to_string()).collect();
            let table = pca_project(&model, x.data(), &ids, &corpus.energies())?;
            for (i, r) in model.explained_variance_ratio.iter().enumerate() {
                println!("component {}  explained variance {:.3}", i + 1, r);
            }
            println!("corr(coord_1, energy) = {:.3}", table.energy_correlation(0));
            run.write_all(out, vec![(out.to_path_buf(), table.to_tsv())])
        }

        Command::Report { bundles, json } => {
            let mut parsed = Vec::with_capacity(bundles.len());
            for path in bundles {
                let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
                let b = parse_bundle(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
                parsed.push(b);
            }
            let tables = report_tables(&parsed)?;
            print!("{tables}");
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&tables).map_err(|e| Failure::Compute(e.to_string()))?;
                write_file(path, &(text + "\n"))?;
            }
            Ok(())
        }

        Command::Synth { out_dir, n_per_tier, dim, signal, noise, mode, seed } => {
            let cfg = SynthConfig {
                n_per_tier: *n_per_tier,
                dim: *dim,
                signal: *signal,
                noise: *noise,
                mode: (*mode).into(),
                seed: *seed,
                ..SynthConfig::default()
            };
            let (corpus, x) = generate(&cfg)?;
            fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
            corpus.write(out_dir.join("corpus.tsv"))?;
            x.write(out_dir.join("embeddings.toml"))?;
            println!("wrote {} records ({} dims) to {}", corpus.len(), x.ncols(), out_dir.display());
            Ok(())
        }
    }
}

fn validate(corpus_path: &Path, embeddings: Option<&Path>) -> Outcome {
    let corpus = match load_corpus(corpus_path) {
        Ok(c) => c,
        Err(CorpusError::Invalid(findings)) => {
            for f in &findings {
                println!("{}: {f}", corpus_path.display());
            }
            return Err(Failure::Invalid(format!("{} invalid record(s)", findings.len())));
        }
        Err(e) => return Err(e.into()),
    };
    print!("{}", corpus.summary());
    for group in corpus.duplicate_texts() {
        println!("warning: identical text in records {}", group.join(", "));
    }
    if let Some(path) = embeddings {
        let x = read_embeddings(path)?;
        let report = embedstore::alignment_report(&x, &corpus);
        if !report.is_aligned() {
            for line in report.to_string().split("; ") {
                println!("{}: {line}", path.display());
            }
            return Err(Failure::Invalid("embeddings are not aligned with the corpus".into()));
        }
        println!("embeddings: {} × {} ({}), aligned", x.nrows(), x.ncols(), x.model_name());
    }
    println!("OK");
    Ok(())
}

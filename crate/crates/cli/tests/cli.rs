use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use tempfile::TempDir;
use tierprobe::embedstore::{read_embeddings, EmbeddingMatrix};
use tierprobe::report::parse_bundle;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tierprobe"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Synth {
    dir: TempDir,
}

impl Synth {
    fn new(extra: &[&str]) -> Synth {
        let dir = TempDir::new().unwrap();
        let mut args = vec!["synth", "--out-dir", p(dir.path()), "--n-per-tier", "20", "--dim", "16"];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        Synth { dir }
    }

    fn corpus(&self) -> String {
        self.path("corpus.tsv")
    }

    fn embeddings(&self) -> String {
        self.path("embeddings.toml")
    }

    fn path(&self, name: &str) -> String {
        p(&self.dir.path().join(name)).to_string()
    }

    fn run(&self, cmd: &str, more: &[&str]) -> Output {
        let (c, e) = (self.corpus(), self.embeddings());
        let mut args = vec![cmd, "--corpus", &c, "--embeddings", &e];
        args.extend_from_slice(more);
        run(&args)
    }
}

fn write_corpus(dir: &Path, rows: &[(&str, &str, &str, f64)]) -> PathBuf {
    let mut s = String::from("id\ttext\ttier\tenergy\n");
    for (id, text, tier, e) in rows {
        s.push_str(&format!("{id}\t{text}\t{tier}\t{e}\n"));
    }
    let path = dir.join("corpus.tsv");
    fs::write(&path, s).unwrap();
    path
}

#[test]
fn validate_clean_pair() {
    let s = Synth::new(&[]);
    let o = run(&["validate", "--corpus", &s.corpus(), "--embeddings", &s.embeddings()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).trim_end().ends_with("OK"));
}

#[test]
fn validate_reports_out_of_range_energy() {
    let dir = TempDir::new().unwrap();
    let path = write_corpus(dir.path(), &[("a", "calm", "Unity", 4.0), ("b", "tense", "Shadow", -6.0)]);
    let o = run(&["validate", "--corpus", p(&path)]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("line 3"), "{out}");
    assert!(out.contains("energy out of range"), "{out}");
}

#[test]
fn validate_reports_reordered_rows() {
    let s = Synth::new(&[]);
    let x = read_embeddings(s.embeddings()).unwrap();
    let n = x.nrows();
    let rev = DMatrix::from_fn(n, x.ncols(), |i, j| x.data()[(n - 1 - i, j)]);
    let ids: Vec<String> = x.row_ids().iter().rev().cloned().collect();
    let out = s.path("reversed.toml");
    EmbeddingMatrix::new(rev, ids, "reversed").unwrap().write(&out).unwrap();
    let o = run(&["validate", "--corpus", &s.corpus(), "--embeddings", &out]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("reordered"));
    let o = s.run("probe", &["--task", "energy", "--out", &s.path("x.json")]);
    assert_eq!(code(&o), 0);
    let o = run(&["probe", "--corpus", &s.corpus(), "--embeddings", &out, "--task", "energy", "--out", &s.path("y.json")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn energy_probe_bundle() {
    let s = Synth::new(&[]);
    let out = s.path("energy.json");
    let o = s.run("probe", &["--task", "energy", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = parse_bundle(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(b.outcomes.len(), 1);
    assert_eq!(b.outcomes[0].per_split.len(), 30);
    assert!(b.outcomes[0].mean["r2"] >= 0.9);
    assert!(!b.decisions.is_empty());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.path("energy.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["split"]["splits"], 30);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 3);
    assert!(manifest["prng"].as_str().unwrap().starts_with("chacha8"));
}

#[test]
fn tier_probe_exports_seed_zero_confusion() {
    let s = Synth::new(&[]);
    let out = s.path("tier.json");
    let o = s.run("probe", &["--task", "tier", "--splits", "4", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = parse_bundle(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(b.outcomes[0].representative_seed, Some(0));
    assert!(b.outcomes[0].representative_confusion().is_some());
    assert_eq!(b.exports["confusion"], "tier.confusion.tsv");
    let tsv = fs::read_to_string(s.path("tier.confusion.tsv")).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|l| l.split('\t').count() == 8));
}

#[test]
fn usage_errors_exit_one() {
    let s = Synth::new(&[]);
    let o = s.run("probe", &["--task", "energy", "--probe", "forest", "--out", &s.path("a.json")]);
    assert_eq!(code(&o), 1);
    let o = s.run("project", &["--k", "4", "--out", &s.path("p.tsv")]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["report"])), 1);
    let o = s.run("permtest", &["--task", "energy", "--permutations", "0", "--out", &s.path("n.json")]);
    assert_eq!(code(&o), 1);
    let o = s.run("probe", &["--task", "energy", "--test-fraction", "1.5", "--out", &s.path("b.json")]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn config_file_and_bad_config() {
    let s = Synth::new(&[]);
    let cfg = s.path("cfg.toml");
    fs::write(&cfg, "[split]\nsplits = 3\nfirst_seed = 7\n").unwrap();
    let out = s.path("c.json");
    let o = s.run("probe", &["--config", &cfg, "--task", "energy", "--out", &out]);
    assert_eq!(code(&o), 0);
    let b = parse_bundle(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(b.outcomes[0].seeds, vec![7, 8, 9]);
    let o = s.run("probe", &["--config", &cfg, "--splits", "2", "--task", "energy", "--out", &out]);
    assert_eq!(code(&o), 0);
    let b = parse_bundle(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(b.outcomes[0].seeds, vec![7, 8]);
    fs::write(&cfg, "[split]\nsplitz = 3\n").unwrap();
    assert_eq!(code(&s.run("probe", &["--config", &cfg, "--task", "energy", "--out", &out])), 1);
}

#[test]
fn divergence_exits_two() {
    let s = Synth::new(&[]);
    let cfg = s.path("wild.toml");
    fs::write(&cfg, "[probes.mlp]\nlearning_rate = 1e300\nepochs = 20\n").unwrap();
    let o = s.run("probe", &["--config", &cfg, "--task", "energy", "--probe", "mlp", "--splits", "2", "--out", &s.path("d.json")]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bundles_are_byte_identical_across_job_counts() {
    let s = Synth::new(&[]);
    let mut bundles = Vec::new();
    for (jobs, dir) in [("1", "j1"), ("4", "j4"), ("1", "again")] {
        let out = s.path(&format!("{dir}/run.json"));
        let o = s.run("probe", &["--jobs", jobs, "--task", "tier", "--splits", "6", "--out", &out]);
        assert_eq!(code(&o), 0);
        bundles.push(fs::read(&out).unwrap());
    }
    assert_eq!(bundles[0], bundles[1]);
    assert_eq!(bundles[0], bundles[2]);

    let mut perms = Vec::new();
    for (jobs, dir) in [("1", "p1"), ("3", "p3")] {
        let out = s.path(&format!("{dir}/perm.json"));
        let o = s.run("permtest", &["--jobs", jobs, "--task", "energy", "--permutations", "40", "--out", &out]);
        assert_eq!(code(&o), 0);
        perms.push(fs::read(&out).unwrap());
        perms.push(fs::read(s.path(&format!("{dir}/perm.null.tsv"))).unwrap());
    }
    assert_eq!(perms[0], perms[2]);
    assert_eq!(perms[1], perms[3]);
}

#[test]
fn strong_signal_hits_the_p_floor() {
    let s = Synth::new(&[]);
    let out = s.path("perm.json");
    let o = s.run("permtest", &["--task", "energy", "--out", &out]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("p-value      0.00498"));
    let b = parse_bundle(&fs::read_to_string(&out).unwrap()).unwrap();
    let r = b.permutation.unwrap();
    assert_eq!(r.permutations, 200);
    assert_eq!(r.exceed_count, 0);
    assert_eq!(r.p_value, 1.0 / 201.0);
    let hist = fs::read_to_string(s.path("perm.null.tsv")).unwrap();
    assert!(hist.starts_with("bin_left\tbin_right\tcount\n"));
    assert!(hist.lines().last().unwrap().starts_with("T_obs\t"));
}

#[test]
fn no_signal_permtest_still_reports() {
    let s = Synth::new(&["--signal", "0", "--noise", "1", "--seed", "3"]);
    let out = s.path("null.json");
    let o = s.run("permtest", &["--task", "energy", "--permutations", "99", "--out", &out]);
    assert_eq!(code(&o), 0);
    let b = parse_bundle(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(b.permutation.unwrap().p_value > 0.05);
}

#[test]
fn projection_table() {
    let s = Synth::new(&[]);
    let out = s.path("proj.tsv");
    let o = s.run("project", &["--k", "3", "--out", &out]);
    assert_eq!(code(&o), 0);
    let tsv = fs::read_to_string(&out).unwrap();
    assert_eq!(tsv.lines().next().unwrap(), "id\tx\ty\tz\tenergy");
    assert_eq!(tsv.lines().count(), 141);
    let line = stdout(&o).lines().find(|l| l.starts_with("corr(coord_1, energy)")).unwrap().to_string();
    let corr: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(corr.abs() >= 0.8, "{line}");
}

#[test]
fn baseline_detects_lexical_leakage() {
    let dir = TempDir::new().unwrap();
    let tiers = ["Shadow", "Striving", "Conflict", "Activation", "Growth", "Clarity", "Unity"];
    let mut rows = Vec::new();
    for (t, name) in tiers.iter().enumerate() {
        for i in 0..8 {
            let energy = (t as f64 - 3.0) * 5.0 / 3.0;
            rows.push((format!("r{t}-{i}"), format!("this sentence is {name} number {i}"), *name, energy));
        }
    }
    let refs: Vec<(&str, &str, &str, f64)> = rows.iter().map(|(a, b, c, d)| (a.as_str(), b.as_str(), *c, *d)).collect();
    let corpus = write_corpus(dir.path(), &refs);
    let out = dir.path().join("lex.json");
    let o = run(&["baseline", "--corpus", p(&corpus), "--task", "tier", "--splits", "5", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = parse_bundle(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(b.label).unwrap(), "lexical-baseline");
    assert!(b.outcomes[0].mean["accuracy"] >= 0.95);

    let o = run(&["baseline", "--corpus", p(&corpus), "--task", "energy", "--bigrams", "--vocab-seed", "0", "--splits", "5", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let manifest = fs::read_to_string(dir.path().join("lex.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["config"]["tfidf"]["bigrams"], true);
    let vocab = fs::read_to_string(dir.path().join("lex.vocab.tsv")).unwrap();
    assert!(vocab.contains("sentence is\t"));
}

#[test]
fn baseline_on_identical_texts_is_uninformative() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<(String, f64)> = (0..40).map(|i| (format!("r{i}"), (i % 7) as f64 - 3.0)).collect();
    let refs: Vec<(&str, &str, &str, f64)> = rows.iter().map(|(id, e)| (id.as_str(), "the same words", "Growth", *e)).collect();
    let corpus = write_corpus(dir.path(), &refs);
    let out = dir.path().join("same.json");
    let o = run(&["baseline", "--corpus", p(&corpus), "--task", "energy", "--splits", "10", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = parse_bundle(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(b.outcomes[0].mean["r2"] <= 0.0);
}

#[test]
fn report_table_shapes() {
    let mut bundles = Vec::new();
    let dirs: Vec<Synth> = (0..3).map(|seed| Synth::new(&["--seed", &seed.to_string(), "--noise", "0.5"])).collect();
    for s in &dirs {
        for probe in ["ridge", "mlp"] {
            let out = s.path(&format!("{probe}.json"));
            let o = s.run("probe", &["--task", "energy", "--probe", probe, "--splits", "2", "--epochs", "30", "--out", &out]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            bundles.push(out);
        }
    }
    let json = dirs[0].path("tables.json");
    let mut args: Vec<&str> = vec!["report", "--json", &json];
    args.extend(bundles.iter().map(String::as_str));
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tables: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let reg = &tables["regression"];
    assert_eq!(reg["rows"].as_array().unwrap().len(), 3);
    assert_eq!(reg["columns"].as_array().unwrap().len(), 4);

    // Displayed numbers agree with the bundle fields to display precision.
    let text = stdout(&o);
    let first = parse_bundle(&fs::read_to_string(&bundles[0]).unwrap()).unwrap();
    let r2 = first.outcomes[0].mean["r2"];
    let row = text.lines().find(|l| l.starts_with(&first.model_name)).unwrap();
    let shown: f64 = row.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((shown - r2).abs() <= 0.0005);

    let o = run(&["report", &dirs[0].corpus()]);
    assert_eq!(code(&o), 1);
}

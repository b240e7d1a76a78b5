//! Annotated sentence datasets: one tier label and one energy score per
//! sentence.
//!
//! The on-disk format is UTF-8, tab-separated, one record per line, with a
//! required header naming the `id`, `text`, `tier` and `energy` columns (in
//! any order). Tabs, newlines and backslashes inside free text are written as
//! `\t`, `\n`, `\r` and `\\`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENERGY_MIN: f64 = -5.0;
pub const ENERGY_MAX: f64 = 5.0;
pub const TIER_COUNT: usize = 7;

const COLUMNS: [&str; 4] = ["id", "text", "tier", "energy"];

/// The seven ordered cognitive tiers, lowest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Shadow,
    Striving,
    Conflict,
    Activation,
    Growth,
    Clarity,
    Unity,
}

impl Tier {
    pub const ALL: [Tier; TIER_COUNT] = [
        Tier::Shadow,
        Tier::Striving,
        Tier::Conflict,
        Tier::Activation,
        Tier::Growth,
        Tier::Clarity,
        Tier::Unity,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Tier> {
        Self::ALL.get(ordinal).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Shadow => "Shadow",
            Tier::Striving => "Striving",
            Tier::Conflict => "Conflict",
            Tier::Activation => "Activation",
            Tier::Growth => "Growth",
            Tier::Clarity => "Clarity",
            Tier::Unity => "Unity",
        }
    }

    /// Case-insensitive; surrounding whitespace ignored.
    pub fn from_name(name: &str) -> Option<Tier> {
        let name = name.trim();
        Self::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub tier: Tier,
    pub energy: f64,
}

/// A validated, non-empty, ordered list of records. Row order is the row
/// order of every aligned embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<SentenceRecord>,
    source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FindingKind {
    MissingField(&'static str),
    ExtraFields(usize),
    EmptyId,
    EmptyText,
    BadEscape,
    UnparsableEnergy(String),
    EnergyOutOfRange(f64),
    UnknownTier(String),
    DuplicateId { first_line: usize },
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FindingKind::MissingField(name) => write!(f, "missing field `{name}`"),
            FindingKind::ExtraFields(n) => write!(f, "{n} unexpected extra field(s)"),
            FindingKind::EmptyId => f.write_str("empty id"),
            FindingKind::EmptyText => f.write_str("empty text"),
            FindingKind::BadEscape => f.write_str("invalid escape sequence in text"),
            FindingKind::UnparsableEnergy(raw) => write!(f, "energy `{raw}` is not a number"),
            FindingKind::EnergyOutOfRange(v) => {
                write!(f, "energy out of range: {v} not in [{ENERGY_MIN}, {ENERGY_MAX}]")
            }
            FindingKind::UnknownTier(raw) => write!(f, "unknown tier `{raw}`"),
            FindingKind::DuplicateId { first_line } => {
                write!(f, "duplicate id (first seen on line {first_line})")
            }
        }
    }
}

/// One problem with one record. `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub line: usize,
    pub id: Option<String>,
    pub kind: FindingKind,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} (id {id}): {}", self.line, self.kind),
            None => write!(f, "line {}: {}", self.line, self.kind),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus header: {0}")]
    Header(String),
    #[error("corpus has no records")]
    Empty,
    #[error("corpus has {} invalid record(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Finding>),
}

impl CorpusError {
    pub fn findings(&self) -> &[Finding] {
        match self {
            CorpusError::Invalid(f) => f,
            _ => &[],
        }
    }
}

impl Corpus {
    /// Validates ids, energies and texts. Accepts records built in memory.
    pub fn new(records: Vec<SentenceRecord>, source: impl Into<String>) -> Result<Corpus, CorpusError> {
        if records.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut findings = Vec::new();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let line = i + 2;
            let id = Some(r.id.clone());
            if r.id.is_empty() {
                findings.push(Finding { line, id: None, kind: FindingKind::EmptyId });
            } else if let Some(&first) = seen.get(r.id.as_str()) {
                findings.push(Finding { line, id: id.clone(), kind: FindingKind::DuplicateId { first_line: first } });
            } else {
                seen.insert(&r.id, line);
            }
            if r.text.is_empty() {
                findings.push(Finding { line, id: id.clone(), kind: FindingKind::EmptyText });
            }
            if !(ENERGY_MIN..=ENERGY_MAX).contains(&r.energy) {
                findings.push(Finding { line, id, kind: FindingKind::EnergyOutOfRange(r.energy) });
            }
        }
        if !findings.is_empty() {
            return Err(CorpusError::Invalid(findings));
        }
        let corpus = Corpus { records, source: source.into() };
        for group in corpus.duplicate_texts() {
            log::warn!("identical text shared by ids {}", group.join(", "));
        }
        Ok(corpus)
    }

    pub fn records(&self) -> &[SentenceRecord] {
        &self.records
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.text.as_str()).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn tiers(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.tier.ordinal()).collect()
    }

    pub fn labels(&self, kind: LabelKind) -> LabelVector {
        match kind {
            LabelKind::Energy => LabelVector::Energy(self.energies()),
            LabelKind::Tier => LabelVector::Tier(self.tiers()),
        }
    }

    /// Groups of ids (two or more) that carry byte-identical text. Legal,
    /// but worth a warning.
    pub fn duplicate_texts(&self) -> Vec<Vec<String>> {
        let mut by_text: HashMap<&str, Vec<String>> = HashMap::new();
        let mut order = Vec::new();
        for r in &self.records {
            let entry = by_text.entry(r.text.as_str()).or_default();
            if entry.is_empty() {
                order.push(r.text.as_str());
            }
            entry.push(r.id.clone());
        }
        order
            .into_iter()
            .filter_map(|t| by_text.remove(t).filter(|ids| ids.len() > 1))
            .collect()
    }

    pub fn summary(&self) -> CorpusSummary {
        corpus_summary(self)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\ttext\ttier\tenergy\n");
        for r in &self.records {
            out.push_str(&escape(&r.id));
            out.push('\t');
            out.push_str(&escape(&r.text));
            out.push('\t');
            out.push_str(r.tier.name());
            out.push('\t');
            // Shortest representation that parses back to the same f64.
            out.push_str(&format!("{:?}", r.energy));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, path.display().to_string())
}

/// Parses the tab-separated corpus format, collecting every per-record
/// finding before failing.
pub fn parse_corpus(input: &str, source: impl Into<String>) -> Result<Corpus, CorpusError> {
    let input = input.strip_prefix('\u{feff}').unwrap_or(input);
    let mut lines = input.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(CorpusError::Empty),
        }
    };
    let positions = header_positions(header)?;
    let width = header.split('\t').count();

    let mut records = Vec::new();
    let mut findings = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |col: usize| fields.get(positions[col]).copied();
        let raw_id = get(0).map(str::trim);
        let id = raw_id.and_then(|s| unescape(s)).filter(|s| !s.is_empty());
        let mut push = |kind| findings.push(Finding { line: line_no, id: id.clone(), kind });

        if fields.len() > width {
            push(FindingKind::ExtraFields(fields.len() - width));
        }
        match raw_id {
            None => push(FindingKind::MissingField("id")),
            Some("") => push(FindingKind::EmptyId),
            Some(_) if id.is_none() => push(FindingKind::BadEscape),
            _ => {}
        }
        let text = match get(1) {
            None => {
                push(FindingKind::MissingField("text"));
                None
            }
            Some(raw) => match unescape(raw) {
                None => {
                    push(FindingKind::BadEscape);
                    None
                }
                Some(t) if t.is_empty() => {
                    push(FindingKind::EmptyText);
                    None
                }
                Some(t) => Some(t),
            },
        };
        let tier = match get(2) {
            None => {
                push(FindingKind::MissingField("tier"));
                None
            }
            Some(raw) => {
                let t = Tier::from_name(raw);
                if t.is_none() {
                    push(FindingKind::UnknownTier(raw.to_string()));
                }
                t
            }
        };
        let energy = match get(3) {
            None => {
                push(FindingKind::MissingField("energy"));
                None
            }
            Some(raw) => match raw.trim().parse::<f64>() {
                Ok(v) if !v.is_finite() => {
                    push(FindingKind::UnparsableEnergy(raw.to_string()));
                    None
                }
                Ok(v) if !(ENERGY_MIN..=ENERGY_MAX).contains(&v) => {
                    push(FindingKind::EnergyOutOfRange(v));
                    None
                }
                Ok(v) => Some(v),
                Err(_) => {
                    push(FindingKind::UnparsableEnergy(raw.to_string()));
                    None
                }
            },
        };
        if let Some(id) = &id {
            if let Some(&first) = seen.get(id) {
                push(FindingKind::DuplicateId { first_line: first });
            } else {
                seen.insert(id.clone(), line_no);
            }
        }
        if let (Some(id), Some(text), Some(tier), Some(energy)) = (id.clone(), text, tier, energy) {
            records.push(SentenceRecord { id, text, tier, energy });
        }
    }
    if !findings.is_empty() {
        return Err(CorpusError::Invalid(findings));
    }
    Corpus::new(records, source)
}

fn header_positions(header: &str) -> Result<[usize; 4], CorpusError> {
    let names: Vec<String> = header.trim_end_matches('\r').split('\t').map(|s| s.trim().to_ascii_lowercase()).collect();
    let mut positions = [0usize; 4];
    for (slot, col) in COLUMNS.iter().enumerate() {
        let mut hits = names.iter().enumerate().filter(|(_, n)| n == col);
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => positions[slot] = i,
            (None, _) => return Err(CorpusError::Header(format!("missing column `{col}`"))),
            (Some(_), Some(_)) => return Err(CorpusError::Header(format!("column `{col}` repeated"))),
        }
    }
    if names.len() != COLUMNS.len() {
        return Err(CorpusError::Header(format!(
            "expected exactly the columns id, text, tier, energy; found {}",
            names.len()
        )));
    }
    Ok(positions)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            't' => out.push('\t'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            _ => return None,
        }
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Energy,
    Tier,
}

/// One label view of a corpus, in corpus row order.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelVector {
    Energy(Vec<f64>),
    Tier(Vec<usize>),
}

impl LabelVector {
    pub fn len(&self) -> usize {
        match self {
            LabelVector::Energy(v) => v.len(),
            LabelVector::Tier(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> LabelKind {
        match self {
            LabelVector::Energy(_) => LabelKind::Energy,
            LabelVector::Tier(_) => LabelKind::Tier,
        }
    }
}

pub fn labels(c: &Corpus, kind: LabelKind) -> LabelVector {
    c.labels(kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TierStats {
    pub count: usize,
    pub min: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub total: usize,
    pub per_tier: [TierStats; TIER_COUNT],
}

pub fn corpus_summary(c: &Corpus) -> CorpusSummary {
    let mut buckets: [Vec<f64>; TIER_COUNT] = Default::default();
    for r in c.records() {
        buckets[r.tier.ordinal()].push(r.energy);
    }
    let per_tier = buckets.map(|b| {
        if b.is_empty() {
            return TierStats::default();
        }
        TierStats {
            count: b.len(),
            min: b.iter().copied().reduce(f64::min),
            mean: Some(crate::stats::mean(&b)),
            max: b.iter().copied().reduce(f64::max),
        }
    });
    CorpusSummary { total: c.len(), per_tier }
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} records", self.total)?;
        for (tier, s) in Tier::ALL.iter().zip(&self.per_tier) {
            match (s.min, s.mean, s.max) {
                (Some(lo), Some(mean), Some(hi)) => writeln!(
                    f,
                    "  {:<10} {:>5}  energy min {lo:>6.2} mean {mean:>6.2} max {hi:>6.2}",
                    tier.name(),
                    s.count
                )?,
                _ => writeln!(f, "  {:<10} {:>5}", tier.name(), s.count)?,
            }
        }
        Ok(())
    }
}

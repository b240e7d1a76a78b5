//! TF-IDF surface-lexical baseline.
//!
//! Tokens are lowercased alphanumeric runs. Term frequency is the raw count,
//! `idf(t) = ln((1 + D) / (1 + df(t))) + 1`, and every non-empty row is
//! scaled to unit L2 norm. Inside the protocol the vocabulary is refit on
//! each split's training texts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{FeatureSource, Split};

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfidfConfig {
    /// Add adjacent-token bigrams to the unigram terms.
    pub bigrams: bool,
}

fn terms(text: &str, cfg: &TfidfConfig) -> Vec<String> {
    let tokens = tokenize(text);
    let mut out = tokens.clone();
    if cfg.bigrams {
        out.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocabulary {
    /// Terms in column order (lexicographic).
    pub terms: Vec<String>,
    pub document_frequency: Vec<usize>,
    pub idf: Vec<f64>,
    pub documents: usize,
    pub config: TfidfConfig,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TfidfVocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// `term, index, df, idf` rows for auditing.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("term\tindex\tdf\tidf\n");
        for (i, t) in self.terms.iter().enumerate() {
            writeln!(out, "{t}\t{i}\t{}\t{:?}", self.document_frequency[i], self.idf[i]).unwrap();
        }
        out
    }
}

pub fn tfidf_fit(texts: &[&str], cfg: &TfidfConfig) -> Result<TfidfVocabulary> {
    if texts.is_empty() {
        return Err(Error::Degenerate("no documents to fit a vocabulary on".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        let mut seen: Vec<String> = terms(text, cfg);
        seen.sort();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(Error::Degenerate("every document tokenizes to nothing".into()));
    }
    let d = texts.len() as f64;
    let (terms, document_frequency): (Vec<String>, Vec<usize>) = df.into_iter().unzip();
    let idf = document_frequency.iter().map(|&f| ((1.0 + d) / (1.0 + f as f64)).ln() + 1.0).collect();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(TfidfVocabulary { terms, document_frequency, idf, documents: texts.len(), config: *cfg, index })
}

/// Sparse rows of (column, value), unit-normalized where non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfMatrix {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub ncols: usize,
    /// Rows with no in-vocabulary term, left as zeros.
    pub zero_rows: Vec<usize>,
}

impl TfidfMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }
}

pub fn tfidf_transform(v: &TfidfVocabulary, texts: &[&str]) -> TfidfMatrix {
    let mut rows = Vec::with_capacity(texts.len());
    let mut zero_rows = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in terms(text, &v.config) {
            if let Some(col) = v.column(&t) {
                *counts.entry(col).or_default() += 1;
            }
        }
        let mut row: Vec<(usize, f64)> = counts.into_iter().map(|(c, n)| (c, n as f64 * v.idf[c])).collect();
        let norm = row.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
        } else {
            for (_, x) in row.iter_mut() {
                *x /= norm;
            }
        }
        rows.push(row);
    }
    TfidfMatrix { rows, ncols: v.len(), zero_rows }
}

/// Feature source that refits the vocabulary on each split's training
/// texts, so no test-set term statistics leak into the features.
pub struct TfidfSource<'a> {
    pub texts: Vec<&'a str>,
    pub config: TfidfConfig,
}

impl<'a> TfidfSource<'a> {
    pub fn new(texts: Vec<&'a str>, config: TfidfConfig) -> Self {
        TfidfSource { texts, config }
    }

    pub fn vocabulary_for(&self, split: &Split) -> Result<TfidfVocabulary> {
        let train: Vec<&str> = split.train.iter().map(|&i| self.texts[i]).collect();
        tfidf_fit(&train, &self.config)
    }
}

impl FeatureSource for TfidfSource<'_> {
    fn len(&self) -> usize {
        self.texts.len()
    }

    fn features(&self, split: &Split) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let vocab = self.vocabulary_for(split)?;
        let pick = |idx: &[usize]| idx.iter().map(|&i| self.texts[i]).collect::<Vec<_>>();
        let train = tfidf_transform(&vocab, &pick(&split.train)).to_dense();
        let test = tfidf_transform(&vocab, &pick(&split.test)).to_dense();
        Ok((train, test))
    }

    fn describe(&self) -> String {
        if self.config.bigrams {
            "tfidf(unigram+bigram, per-split refit)".into()
        } else {
            "tfidf(unigram, per-split refit)".into()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("I feel calm."), vec!["i", "feel", "calm"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("self-blame"), vec!["self", "blame"]);
        assert_eq!(tokenize("Don't  STOP"), vec!["don", "t", "stop"]);
    }

    #[test]
    fn idf_values() {
        let v = tfidf_fit(&["calm mind", "calm heart"], &TfidfConfig::default()).unwrap();
        assert_eq!(v.idf[v.column("calm").unwrap()], 1.0);
        assert!((v.idf[v.column("mind").unwrap()] - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
        assert_eq!(v.len(), 3);
        assert_eq!(v.documents, 2);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(tfidf_fit(&["...", "!!"], &TfidfConfig::default()).is_err());
    }

    #[test]
    fn zero_and_single_term_rows() {
        let v = tfidf_fit(&["alpha beta", "beta"], &TfidfConfig::default()).unwrap();
        let m = tfidf_transform(&v, &["gamma", "alpha"]);
        assert_eq!(m.zero_rows, vec![0]);
        assert!(m.rows[0].is_empty());
        assert_eq!(m.rows[1].len(), 1);
        assert!((m.rows[1][0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_three_documents() {
        let docs = ["a b a", "b c", "c c d"];
        let v = tfidf_fit(&docs, &TfidfConfig::default()).unwrap();
        assert_eq!(v.terms, vec!["a", "b", "c", "d"]);
        let m = tfidf_transform(&v, &docs).to_dense();
        let (hi, lo) = ((4.0f64 / 2.0).ln() + 1.0, (4.0f64 / 3.0).ln() + 1.0);
        let raw = [[2.0 * hi, lo, 0.0, 0.0], [0.0, lo, lo, 0.0], [0.0, 0.0, 2.0 * lo, hi]];
        for (i, r) in raw.iter().enumerate() {
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            for j in 0..4 {
                assert!((m[(i, j)] - r[j] / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bigrams_extend_the_vocabulary() {
        let cfg = TfidfConfig { bigrams: true };
        let v = tfidf_fit(&["quiet sense of connection"], &cfg).unwrap();
        assert!(v.column("quiet sense").is_some());
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn dump_format() {
        let v = tfidf_fit(&["x y", "y"], &TfidfConfig::default()).unwrap();
        let tsv = v.to_tsv();
        assert_eq!(tsv.lines().next(), Some("term\tindex\tdf\tidf"));
        assert_eq!(tsv.lines().nth(2), Some("y\t1\t2\t1.0"));
    }

    proptest! {
        #[test]
        fn transform_invariants(docs in prop::collection::vec("[a-e ]{0,12}", 2..8)) {
            let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
            prop_assume!(refs.iter().any(|d| !tokenize(d).is_empty()));
            let v = tfidf_fit(&refs, &TfidfConfig::default()).unwrap();
            let m = tfidf_transform(&v, &refs);
            for row in &m.rows {
                prop_assert!(row.iter().all(|&(c, _)| c < v.len()));
                let norm = row.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                prop_assert!(norm.abs() < 1e-9 || (norm - 1.0).abs() < 1e-9);
            }
            prop_assert!(v.document_frequency.iter().all(|&f| f >= 1 && f <= refs.len()));
            let mut rev = refs.clone();
            rev.reverse();
            let w = tfidf_fit(&rev, &TfidfConfig::default()).unwrap();
            prop_assert_eq!(&w.terms, &v.terms);
            prop_assert_eq!(&w.idf, &v.idf);
        }
    }
}

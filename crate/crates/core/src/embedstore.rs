//! Fixed sentence-embedding matrices produced by external encoders.
//!
//! A store is two files: a TOML manifest and a raw payload of row-major,
//! little-endian `f32` values. The manifest carries the shape, the row ids
//! (corpus ids in row order), the normalization flag and the SHA-256 of the
//! payload bytes. Values are widened to `f64` on load.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Corpus;

pub const MANIFEST_FORMAT: &str = "tierprobe-embeddings/1";
pub const ENCODING_F32LE: &str = "f32le";
/// Unit-norm tolerance for stored rows; covers f32 round-trip error.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("payload checksum mismatch: manifest says {expected}, payload hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("payload has {actual} bytes, manifest shape needs {expected}")]
    Shape { expected: usize, actual: usize },
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },
    #[error("manifest declares normalized rows but row {row} has norm {norm}")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("embeddings are not aligned with the corpus: {0}")]
    Misaligned(AlignmentReport),
}

fn io_err(path: &Path, source: std::io::Error) -> EmbedError {
    EmbedError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub format: String,
    pub model_name: String,
    pub dimension: usize,
    pub count: usize,
    pub encoding: String,
    pub normalized: bool,
    /// Hex SHA-256 of the payload bytes.
    pub sha256: String,
    /// Payload path, relative to the manifest's directory.
    pub payload: String,
    pub row_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl EmbeddingManifest {
    pub fn from_toml_str(s: &str) -> Result<Self, EmbedError> {
        let m: EmbeddingManifest = toml::from_str(s).map_err(|e| EmbedError::Manifest(e.message().to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    fn validate(&self) -> Result<(), EmbedError> {
        if self.format != MANIFEST_FORMAT {
            return Err(EmbedError::Manifest(format!("unsupported format `{}`", self.format)));
        }
        if self.encoding != ENCODING_F32LE {
            return Err(EmbedError::Manifest(format!("unsupported encoding `{}`", self.encoding)));
        }
        if self.dimension == 0 || self.count == 0 {
            return Err(EmbedError::Manifest("dimension and count must be at least 1".into()));
        }
        if self.row_ids.len() != self.count {
            return Err(EmbedError::Manifest(format!(
                "{} row ids for count {}",
                self.row_ids.len(),
                self.count
            )));
        }
        if self.count.checked_mul(self.dimension).and_then(|n| n.checked_mul(4)).is_none() {
            return Err(EmbedError::Manifest("shape overflows".into()));
        }
        Ok(())
    }
}

/// N×d embeddings, row `i` belonging to `row_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: DMatrix<f64>,
    row_ids: Vec<String>,
    model_name: String,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(data: DMatrix<f64>, row_ids: Vec<String>, model_name: impl Into<String>) -> Result<Self, EmbedError> {
        if data.nrows() != row_ids.len() {
            return Err(EmbedError::Manifest(format!(
                "{} rows but {} row ids",
                data.nrows(),
                row_ids.len()
            )));
        }
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(EmbedError::Manifest("empty matrix".into()));
        }
        if let Some(row) = first_non_finite_row(&data) {
            return Err(EmbedError::NonFinite { row });
        }
        Ok(EmbeddingMatrix { data, row_ids, model_name: model_name.into(), normalized: false })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// Writes the manifest at `manifest_path` and the payload next to it.
    /// Values are narrowed to f32.
    pub fn write(&self, manifest_path: impl AsRef<Path>) -> Result<EmbeddingManifest, EmbedError> {
        let manifest_path = manifest_path.as_ref();
        let payload = encode_payload(&self.data);
        let stem = manifest_path.file_stem().and_then(|s| s.to_str()).unwrap_or("embeddings");
        let payload_name = format!("{stem}.f32");
        let manifest = EmbeddingManifest {
            format: MANIFEST_FORMAT.into(),
            model_name: self.model_name.clone(),
            dimension: self.ncols(),
            count: self.nrows(),
            encoding: ENCODING_F32LE.into(),
            normalized: self.normalized,
            sha256: sha256_hex(&payload),
            payload: payload_name.clone(),
            row_ids: self.row_ids.clone(),
            provenance: BTreeMap::new(),
        };
        let payload_path = sibling(manifest_path, &payload_name);
        std::fs::write(&payload_path, &payload).map_err(|e| io_err(&payload_path, e))?;
        std::fs::write(manifest_path, manifest.to_toml_string()).map_err(|e| io_err(manifest_path, e))?;
        Ok(manifest)
    }
}

fn sibling(manifest_path: &Path, name: &str) -> PathBuf {
    manifest_path.parent().map(|p| p.join(name)).unwrap_or_else(|| PathBuf::from(name))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode_payload(data: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 4);
    for row in data.row_iter() {
        for &v in row.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes a row-major f32le payload of `count` rows by `dim` columns,
/// rejecting non-finite values.
pub fn decode_payload(bytes: &[u8], count: usize, dim: usize) -> Result<DMatrix<f64>, EmbedError> {
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| EmbedError::Manifest("shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(EmbedError::Shape { expected, actual: bytes.len() });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let data = DMatrix::from_row_slice(count, dim, &values);
    if let Some(row) = first_non_finite_row(&data) {
        return Err(EmbedError::NonFinite { row });
    }
    Ok(data)
}

fn first_non_finite_row(data: &DMatrix<f64>) -> Option<usize> {
    data.row_iter().position(|r| r.iter().any(|v| !v.is_finite()))
}

pub fn read_embeddings(manifest_path: impl AsRef<Path>) -> Result<EmbeddingMatrix, EmbedError> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest = EmbeddingManifest::from_toml_str(&text)?;
    let payload_path = sibling(manifest_path, &manifest.payload);
    let bytes = std::fs::read(&payload_path).map_err(|e| io_err(&payload_path, e))?;
    let actual = sha256_hex(&bytes);
    if !actual.eq_ignore_ascii_case(&manifest.sha256) {
        return Err(EmbedError::Checksum { expected: manifest.sha256, actual });
    }
    let data = decode_payload(&bytes, manifest.count, manifest.dimension)?;
    if manifest.normalized {
        for (row, r) in data.row_iter().enumerate() {
            let norm = r.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(EmbedError::NotUnitNorm { row, norm });
            }
        }
    }
    Ok(EmbeddingMatrix {
        data,
        row_ids: manifest.row_ids,
        model_name: manifest.model_name,
        normalized: manifest.normalized,
    })
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(x: &EmbeddingMatrix) -> Result<EmbeddingMatrix, EmbedError> {
    let mut data = x.data.clone();
    for (row, mut r) in data.row_iter_mut().enumerate() {
        let norm = r.norm();
        if norm == 0.0 {
            return Err(EmbedError::ZeroNorm { row });
        }
        // Leave rows that are already unit length bit-for-bit unchanged.
        if (norm - 1.0).abs() > f64::EPSILON * 4.0 {
            r /= norm;
        }
    }
    Ok(EmbeddingMatrix {
        data,
        row_ids: x.row_ids.clone(),
        model_name: x.model_name.clone(),
        normalized: true,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AlignmentReport {
    /// Corpus ids with no embedding row.
    pub missing: Vec<String>,
    /// Embedding row ids that are not in the corpus.
    pub extra: Vec<String>,
    /// Ids repeated within the embedding rows.
    pub duplicated: Vec<String>,
    /// Same id set, different order.
    pub reordered: bool,
    /// First row where the orders disagree.
    pub first_mismatch: Option<usize>,
}

impl AlignmentReport {
    pub fn is_aligned(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.duplicated.is_empty() && !self.reordered
    }
}

impl fmt::Display for AlignmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_aligned() {
            return f.write_str("aligned");
        }
        let mut parts = Vec::new();
        if !self.missing.is_empty() {
            parts.push(format!("missing ids: {}", self.missing.join(", ")));
        }
        if !self.extra.is_empty() {
            parts.push(format!("extra ids: {}", self.extra.join(", ")));
        }
        if !self.duplicated.is_empty() {
            parts.push(format!("duplicated ids: {}", self.duplicated.join(", ")));
        }
        if self.reordered {
            match self.first_mismatch {
                Some(row) => parts.push(format!("reordered (first difference at row {row})")),
                None => parts.push("reordered".into()),
            }
        }
        f.write_str(&parts.join("; "))
    }
}

pub fn alignment_report(x: &EmbeddingMatrix, c: &Corpus) -> AlignmentReport {
    use std::collections::{BTreeSet, HashSet};
    let corpus_ids = c.ids();
    let corpus_set: HashSet<&str> = corpus_ids.iter().copied().collect();
    let mut seen = HashSet::new();
    let mut duplicated = BTreeSet::new();
    for id in &x.row_ids {
        if !seen.insert(id.as_str()) {
            duplicated.insert(id.clone());
        }
    }
    let missing: Vec<String> = corpus_ids.iter().filter(|id| !seen.contains(**id)).map(|s| s.to_string()).collect();
    let extra: Vec<String> = x.row_ids.iter().filter(|id| !corpus_set.contains(id.as_str())).cloned().collect();
    let first_mismatch = x
        .row_ids
        .iter()
        .zip(&corpus_ids)
        .position(|(a, b)| a != b)
        .or_else(|| (x.row_ids.len() != corpus_ids.len()).then(|| x.row_ids.len().min(corpus_ids.len())));
    let reordered = missing.is_empty() && extra.is_empty() && duplicated.is_empty() && first_mismatch.is_some();
    AlignmentReport {
        missing,
        extra,
        duplicated: duplicated.into_iter().collect(),
        reordered,
        first_mismatch,
    }
}

/// Ok iff the row ids equal the corpus ids in identical order.
pub fn align(x: &EmbeddingMatrix, c: &Corpus) -> Result<AlignmentReport, EmbedError> {
    let report = alignment_report(x, c);
    if report.is_aligned() {
        Ok(report)
    } else {
        Err(EmbedError::Misaligned(report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SentenceRecord, Tier};
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn corpus(ids: &[&str]) -> Corpus {
        let records = ids
            .iter()
            .map(|id| SentenceRecord { id: id.to_string(), text: "t".into(), tier: Tier::Growth, energy: 1.0 })
            .collect();
        Corpus::new(records, "mem").unwrap()
    }

    #[test]
    fn write_read_shape() {
        let dir = tempfile::tempdir().unwrap();
        let x = EmbeddingMatrix::new(DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]), ids(2), "toy").unwrap();
        let path = dir.path().join("toy.toml");
        let m = x.write(&path).unwrap();
        assert_eq!((m.count, m.dimension), (2, 3));
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn large_shape() {
        let dir = tempfile::tempdir().unwrap();
        let data = DMatrix::from_fn(480, 1024, |i, j| ((i * 1024 + j) % 97) as f64 * 0.25 - 12.0);
        let x = EmbeddingMatrix::new(data, ids(480), "bge-like").unwrap();
        let path = dir.path().join("big.toml");
        x.write(&path).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!((back.nrows(), back.ncols()), (480, 1024));
    }

    #[test]
    fn nan_row_is_reported() {
        let mut bytes = encode_payload(&DMatrix::from_row_slice(3, 2, &[1., 2., 3., 4., 5., 6.]));
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_payload(&bytes, 3, 2) {
            Err(EmbedError::NonFinite { row }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn checksum_and_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let x = EmbeddingMatrix::new(DMatrix::from_row_slice(2, 2, &[1., 2., 3., 4.]), ids(2), "toy").unwrap();
        let path = dir.path().join("e.toml");
        x.write(&path).unwrap();
        std::fs::write(dir.path().join("e.f32"), [0u8; 16]).unwrap();
        assert!(matches!(read_embeddings(&path), Err(EmbedError::Checksum { .. })));
        assert!(matches!(decode_payload(&[0u8; 12], 2, 2), Err(EmbedError::Shape { expected: 16, actual: 12 })));
    }

    #[test]
    fn normalized_flag_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.toml");
        let x = EmbeddingMatrix::new(DMatrix::from_row_slice(1, 2, &[3., 4.]), ids(1), "toy").unwrap();
        let mut m = x.write(&path).unwrap();
        m.normalized = true;
        std::fs::write(&path, m.to_toml_string()).unwrap();
        assert!(matches!(read_embeddings(&path), Err(EmbedError::NotUnitNorm { row: 0, .. })));
    }

    #[test]
    fn normalize_examples() {
        let x = EmbeddingMatrix::new(DMatrix::from_row_slice(2, 2, &[3., 4., 0.6, 0.8]), ids(2), "t").unwrap();
        let n = l2_normalize(&x).unwrap();
        assert!(n.is_normalized());
        assert!((n.data()[(0, 0)] - 0.6).abs() < 1e-15 && (n.data()[(0, 1)] - 0.8).abs() < 1e-15);
        assert!((n.data()[(1, 0)] - 0.6).abs() < 1e-12);

        let z = EmbeddingMatrix::new(DMatrix::from_row_slice(2, 2, &[1., 0., 0., 0.]), ids(2), "t").unwrap();
        assert!(matches!(l2_normalize(&z), Err(EmbedError::ZeroNorm { row: 1 })));
    }

    #[test]
    fn alignment_cases() {
        let c = corpus(&["a", "b", "c"]);
        let mk = |ids: &[&str]| {
            EmbeddingMatrix::new(DMatrix::zeros(ids.len(), 2), ids.iter().map(|s| s.to_string()).collect(), "t").unwrap()
        };
        assert!(align(&mk(&["a", "b", "c"]), &c).is_ok());
        let r = alignment_report(&mk(&["a", "c"]), &c);
        assert_eq!(r.missing, vec!["b".to_string()]);
        assert!(!r.reordered);
        let r = alignment_report(&mk(&["b", "a", "c"]), &c);
        assert!(r.reordered);
        assert!(r.to_string().contains("reordered"));
        let r = alignment_report(&mk(&["a", "b", "c", "d"]), &c);
        assert_eq!(r.extra, vec!["d".to_string()]);
    }

    #[test]
    fn manifest_rejects_bad_fields() {
        let x = EmbeddingMatrix::new(DMatrix::zeros(1, 1), ids(1), "t").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = x.write(dir.path().join("m.toml")).unwrap();
        let mut bad = m.clone();
        bad.dimension = 0;
        assert!(EmbeddingManifest::from_toml_str(&bad.to_toml_string()).is_err());
        let mut bad = m.clone();
        bad.row_ids.push("extra".into());
        assert!(EmbeddingManifest::from_toml_str(&bad.to_toml_string()).is_err());
        assert!(EmbeddingManifest::from_toml_str("not = [toml").is_err());
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
    }

    proptest! {
        #[test]
        fn normalization_properties(m in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
            prop_assume!(m.row_iter().all(|r| r.norm() > 1e-3));
            let x = EmbeddingMatrix::new(m.clone(), ids(m.nrows()), "p").unwrap();
            let once = l2_normalize(&x).unwrap();
            let twice = l2_normalize(&once).unwrap();
            for (a, b) in once.data().iter().zip(twice.data().iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            for r in once.data().row_iter() {
                prop_assert!((r.norm() - 1.0).abs() <= 1e-6);
            }
            for i in 0..m.nrows() {
                for j in 0..m.nrows() {
                    let cos = m.row(i).dot(&m.row(j)) / (m.row(i).norm() * m.row(j).norm());
                    prop_assert!((once.data().row(i).dot(&once.data().row(j)) - cos).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn payload_round_trip_is_bit_exact(v in prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 1..40)) {
            let data = DMatrix::from_row_slice(v.len(), 1, &v.iter().map(|&x| x as f64).collect::<Vec<_>>());
            let back = decode_payload(&encode_payload(&data), v.len(), 1).unwrap();
            prop_assert_eq!(back, data);
        }
    }
}

//! Deterministic PCA projection of embeddings, colored by energy score.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// k×d, orthonormal rows.
    pub components: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    fn centered(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Dimension { context: "pca features", expected: self.mean.len(), actual: x.ncols() });
        }
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(c)
    }

    /// N×k coordinates.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.centered(x)? * self.components.transpose())
    }

    /// Mean squared distance between rows and their rank-k reconstruction.
    pub fn reconstruction_error(&self, x: &DMatrix<f64>) -> Result<f64> {
        let c = self.centered(x)?;
        let back = (&c * self.components.transpose()) * &self.components;
        Ok((c - back).norm_squared() / x.nrows() as f64)
    }
}

/// Top-`k` principal components of mean-centered `x`. Each component is
/// signed so that its largest-magnitude coordinate is positive.
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if k == 0 || k > d || n <= k {
        return Err(Error::Degenerate(format!("cannot take {k} components from {n}×{d} data")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pca input"));
    }
    let mean = x.row_mean().transpose();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    let scale = 1.0 / (n - 1) as f64;
    let total_variance = c.norm_squared() * scale;
    if total_variance == 0.0 {
        return Err(Error::Degenerate("all rows are identical".into()));
    }

    // Eigendecompose whichever of XᵀX (d×d) and XXᵀ (n×n) is smaller.
    let (values, vectors, gram) = if d <= n {
        let eig = SymmetricEigen::new(c.tr_mul(&c) * scale);
        (eig.eigenvalues, eig.eigenvectors, false)
    } else {
        let eig = SymmetricEigen::new(&c * c.transpose() * scale);
        (eig.eigenvalues, eig.eigenvectors, true)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut components = DMatrix::zeros(k, d);
    let mut ratios = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let mut v: DVector<f64> = if gram { c.tr_mul(&vectors.column(idx)) } else { vectors.column(idx).into_owned() };
        // Gram-Schmidt against earlier components keeps near-null
        // directions orthonormal.
        for prev in 0..row {
            let p = components.row(prev).transpose();
            let proj = p.dot(&v);
            v -= p * proj;
        }
        let norm = v.norm();
        if norm < 1e-12 {
            return Err(Error::Degenerate(format!("data has rank below {k}")));
        }
        v /= norm;
        let lead = v.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        components.set_row(row, &v.transpose());
        ratios.push((values[idx].max(0.0) / total_variance).clamp(0.0, 1.0));
    }
    Ok(PcaModel { mean, components, explained_variance_ratio: ratios })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionTable {
    pub ids: Vec<String>,
    /// N×k coordinates.
    pub coords: DMatrix<f64>,
    pub energy: Vec<f64>,
}

impl ProjectionTable {
    pub fn k(&self) -> usize {
        self.coords.ncols()
    }

    /// Pearson correlation between coordinate `axis` and the energy score.
    pub fn energy_correlation(&self, axis: usize) -> f64 {
        let col: Vec<f64> = self.coords.column(axis).iter().copied().collect();
        stats::pearson(&col, &self.energy)
    }

    /// Header `id, x, y[, z], energy`; later axes are named c4, c5, ...
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id");
        for a in 0..self.k() {
            match a {
                0 => out.push_str("\tx"),
                1 => out.push_str("\ty"),
                2 => out.push_str("\tz"),
                _ => write!(out, "\tc{}", a + 1).unwrap(),
            }
        }
        out.push_str("\tenergy\n");
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for a in 0..self.k() {
                write!(out, "\t{:?}", self.coords[(i, a)]).unwrap();
            }
            writeln!(out, "\t{:?}", self.energy[i]).unwrap();
        }
        out
    }
}

pub fn pca_project(m: &PcaModel, x: &DMatrix<f64>, ids: &[String], scores: &[f64]) -> Result<ProjectionTable> {
    if scores.len() != x.nrows() {
        return Err(Error::Dimension { context: "projection scores", expected: x.nrows(), actual: scores.len() });
    }
    if ids.len() != x.nrows() {
        return Err(Error::Dimension { context: "projection ids", expected: x.nrows(), actual: ids.len() });
    }
    Ok(ProjectionTable { ids: ids.to_vec(), coords: m.transform(x)?, energy: scores.to_vec() })
}

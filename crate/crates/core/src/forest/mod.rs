//! Random forests over dense feature matrices.
//!
//! [`BatchForest`] is a bagged ensemble of CART trees (Gini impurity,
//! bootstrap rows, random feature candidates per node). [`IncrementalForest`]
//! is an ensemble of Hoeffding trees fed by online bagging; it exposes
//! [`IncrementalForest::update`], which folds new labelled rows into the
//! existing trees without retraining.
//!
//! Both predict the mean over trees of the Laplace-smoothed positive fraction
//! at the reached leaf, `(pos + 1) / (n + 2)`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};

mod binning;
mod cart;
mod hoeffding;
mod io;

pub use binning::BinnedMatrix;
pub use cart::{BatchForest, BatchOptions, CartNode, CartTree};
pub use hoeffding::{HoeffdingTree, IncrementalForest};
pub use io::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("feature width {got} does not match model width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("matrix data length {len} is not a multiple of width {width} with {rows} labels")]
    Shape {
        len: usize,
        width: usize,
        rows: usize,
    },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("batch models have no update function")]
    NotIncremental,
    #[error("model format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt model payload: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Domain(String),
}

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    width: usize,
    data: Vec<f64>,
    labels: Vec<bool>,
}

impl Matrix {
    pub fn new(width: usize, data: Vec<f64>, labels: Vec<bool>) -> Result<Self, ForestError> {
        if data.len() != width * labels.len() || (width == 0 && !labels.is_empty()) {
            return Err(ForestError::Shape {
                len: data.len(),
                width,
                rows: labels.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite {
                row: i / width,
                col: i % width,
            });
        }
        Ok(Matrix {
            width,
            data,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<bool>) -> Result<Self, ForestError> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(ForestError::WidthMismatch {
                expected: width,
                got: r.len(),
            });
        }
        Matrix::new(width, rows.concat(), labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data
            .chunks_exact(self.width.max(1))
            .take(self.labels.len())
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    /// Rows `range` as a new matrix.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Matrix {
        Matrix {
            width: self.width,
            data: self.data[range.start * self.width..range.end * self.width].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), ForestError> {
    if cond {
        Ok(())
    } else {
        Err(ForestError::Hyperparameter(msg()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchHyperparameters {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub max_features_fraction: f64,
}

impl Default for BatchHyperparameters {
    fn default() -> Self {
        BatchHyperparameters {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 1,
            max_features_fraction: 0.3,
        }
    }
}

impl BatchHyperparameters {
    pub fn validate(&self) -> Result<(), ForestError> {
        check(self.n_trees >= 1, || "n_trees must be >= 1".into())?;
        check(self.max_depth >= 1, || "max_depth must be >= 1".into())?;
        check(self.min_samples_leaf >= 1, || {
            "min_samples_leaf must be >= 1".into()
        })?;
        check(
            self.max_features_fraction > 0.0 && self.max_features_fraction <= 1.0,
            || {
                format!(
                    "max_features_fraction {} not in (0,1]",
                    self.max_features_fraction
                )
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IncHyperparameters {
    pub n_trees: usize,
    /// Weight a leaf must accumulate between split attempts.
    pub grace_period: usize,
    /// δ in the Hoeffding bound.
    pub split_confidence: f64,
    /// τ: split anyway once the bound drops below this.
    pub tie_threshold: f64,
    pub max_features_fraction: f64,
}

impl Default for IncHyperparameters {
    fn default() -> Self {
        IncHyperparameters {
            n_trees: 20,
            grace_period: 200,
            split_confidence: 1e-4,
            tie_threshold: 0.05,
            max_features_fraction: 0.3,
        }
    }
}

impl IncHyperparameters {
    pub fn validate(&self) -> Result<(), ForestError> {
        check(self.n_trees >= 1, || "n_trees must be >= 1".into())?;
        check(self.grace_period >= 1, || {
            "grace_period must be >= 1".into()
        })?;
        check(
            self.split_confidence > 0.0 && self.split_confidence < 1.0,
            || format!("split_confidence {} not in (0,1)", self.split_confidence),
        )?;
        check((0.0..1.0).contains(&self.tie_threshold), || {
            format!("tie_threshold {} not in [0,1)", self.tie_threshold)
        })?;
        check(
            self.max_features_fraction > 0.0 && self.max_features_fraction <= 1.0,
            || {
                format!(
                    "max_features_fraction {} not in (0,1]",
                    self.max_features_fraction
                )
            },
        )
    }
}

/// `1 - Σ p_c²` over the class counts.
pub fn gini(class_counts: &[f64]) -> Result<f64, ForestError> {
    let total: f64 = class_counts.iter().sum();
    if class_counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(ForestError::Domain(
            "class counts must be finite and non-negative".into(),
        ));
    }
    if total <= 0.0 {
        return Err(ForestError::Domain("class counts are all zero".into()));
    }
    Ok(1.0
        - class_counts
            .iter()
            .map(|c| (c / total).powi(2))
            .sum::<f64>())
}

/// Binary Gini from weighted counts; 0 for an empty node.
#[inline]
pub(crate) fn gini2(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        0.0
    } else {
        let p = pos / total;
        2.0 * p * (1.0 - p)
    }
}

/// ε = sqrt(R² ln(1/δ) / 2n).
pub fn hoeffding_bound(range: f64, delta: f64, n: f64) -> Result<f64, ForestError> {
    if !(range > 0.0) || !(delta > 0.0 && delta < 1.0) || !(n >= 1.0) {
        return Err(ForestError::Domain(format!(
            "hoeffding bound needs R > 0, δ in (0,1), n >= 1 (got R={range}, δ={delta}, n={n})"
        )));
    }
    Ok((range * range * (1.0 / delta).ln() / (2.0 * n)).sqrt())
}

#[inline]
pub(crate) fn laplace(pos: f64, total: f64) -> f64 {
    (pos + 1.0) / (total + 2.0)
}

pub(crate) fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ tree as u64)
}

pub(crate) fn n_candidate_features(fraction: f64, width: usize) -> usize {
    ((fraction * width as f64).ceil() as usize).clamp(1, width.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Batch,
    Incremental,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Batch => "batch",
            Family::Incremental => "incremental",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Batch(BatchForest),
    Incremental(IncrementalForest),
}

impl Model {
    pub fn family(&self) -> Family {
        match self {
            Model::Batch(_) => Family::Batch,
            Model::Incremental(_) => Family::Incremental,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Model::Batch(m) => m.width(),
            Model::Incremental(m) => m.width(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Model::Batch(m) => m.seed(),
            Model::Incremental(m) => m.seed(),
        }
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<f64, ForestError> {
        match self {
            Model::Batch(m) => m.predict_proba(features),
            Model::Incremental(m) => m.predict_proba(features),
        }
    }

    pub fn predict_matrix(&self, data: &Matrix) -> Result<Vec<f64>, ForestError> {
        self.predict_matrix_with(Execution::default(), data)
    }

    pub fn predict_matrix_with(
        &self,
        exec: Execution,
        data: &Matrix,
    ) -> Result<Vec<f64>, ForestError> {
        if data.width() != self.width() {
            return Err(ForestError::WidthMismatch {
                expected: self.width(),
                got: data.width(),
            });
        }
        let rows: Vec<&[f64]> = data.rows().collect();
        par::map_with(exec, &rows, |r| self.predict_proba(r))
            .into_iter()
            .collect()
    }

    /// Folds `data` into an incremental model; batch models refuse.
    pub fn update(&mut self, data: &Matrix) -> Result<(), ForestError> {
        match self {
            Model::Batch(_) => Err(ForestError::NotIncremental),
            Model::Incremental(m) => m.update(data),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        io::serialize(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ForestError> {
        io::deserialize(bytes)
    }
}

pub fn train_batch(
    data: &Matrix,
    hp: &BatchHyperparameters,
    seed: u64,
) -> Result<Model, ForestError> {
    BatchForest::fit(data, hp, seed).map(Model::Batch)
}

pub fn train_incremental_initial(
    data: &Matrix,
    hp: &IncHyperparameters,
    seed: u64,
) -> Result<Model, ForestError> {
    IncrementalForest::fit(data, hp, seed).map(Model::Incremental)
}

pub fn update(mut model: Model, data: &Matrix) -> Result<Model, ForestError> {
    model.update(data)?;
    Ok(model)
}

pub fn serialize(model: &Model) -> Vec<u8> {
    io::serialize(model)
}

pub fn deserialize(bytes: &[u8]) -> Result<Model, ForestError> {
    io::deserialize(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[10.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini(&[5.0, 5.0]).unwrap(), 0.5);
        // 1 - (0.75² + 0.25²)
        assert!((gini(&[3.0, 1.0]).unwrap() - 0.375).abs() < 1e-15);
        assert!(gini(&[0.0, 0.0]).is_err());
        assert!(gini(&[-1.0, 2.0]).is_err());
        assert_eq!(gini2(3.0, 4.0), gini(&[1.0, 3.0]).unwrap());
    }

    #[test]
    fn hoeffding_bound_values() {
        let e = hoeffding_bound(1.0, (-1.0f64).exp(), 50.0).unwrap();
        assert!((e - 0.1).abs() < 1e-12);
        let e = hoeffding_bound(1.0, 0.05, 1000.0).unwrap();
        assert!((e - (20f64.ln() / 2000.0).sqrt()).abs() < 1e-15);
        let a = hoeffding_bound(1.0, 0.05, 100.0).unwrap();
        let b = hoeffding_bound(1.0, 0.05, 200.0).unwrap();
        assert!((b / a - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(hoeffding_bound(1.0, 0.0, 10.0).is_err());
        assert!(hoeffding_bound(1.0, 0.5, 0.0).is_err());
        assert!(hoeffding_bound(0.0, 0.5, 10.0).is_err());
    }

    #[test]
    fn laplace_smoothing() {
        assert!((laplace(10.0, 10.0) - 11.0 / 12.0).abs() < 1e-15);
        assert_eq!(laplace(0.0, 0.0), 0.5);
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(Matrix::new(2, vec![1.0; 3], vec![true]).is_err());
        assert!(Matrix::new(1, vec![f64::NAN], vec![true]).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], vec![true, false]).unwrap();
        assert_eq!(m.row(1), [3.0, 4.0]);
        assert_eq!(m.rows().count(), 2);
        assert_eq!(m.slice(1..2).row(0), [3.0, 4.0]);
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(BatchHyperparameters::default().validate().is_ok());
        let bad = BatchHyperparameters {
            max_features_fraction: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(IncHyperparameters::default().validate().is_ok());
        let bad = IncHyperparameters {
            tie_threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

//! Dataset containers for the two-sample setting: a labeled training sample
//! and an unlabeled test sample over the same feature space.

use crate::error::{Error, Result};

/// Dense row-major matrix of finite feature values (also used for evaluated
/// statistic and posterior tables).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(
                "feature matrix must have at least one row and one column".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "feature matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!(
                    "feature matrix entry at row {}, column {}",
                    pos / cols + 1,
                    pos % cols + 1
                ),
            });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("feature matrix must be non-empty".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("feature rows have inconsistent lengths".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(data, rows.len(), cols)
    }

    /// Single-column matrix from a slice of scalar features.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), values.len(), 1)
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mean of one column.
    pub fn column_mean(&self, col: usize) -> f64 {
        let mut sum = 0.0;
        for r in 0..self.rows {
            sum += self.data[r * self.cols + col];
        }
        sum / self.rows as f64
    }
}

/// Training sample: features plus observed class labels in `1..=class_count`.
///
/// Every class must occur at least once so that empirical class-conditional
/// quantities are well defined.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: FeatureMatrix,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(features: FeatureMatrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidInput("at least two classes are required".into()));
        }
        if labels.len() != features.n_rows() {
            return Err(Error::InvalidInput(format!(
                "label count {} does not match feature row count {}",
                labels.len(),
                features.n_rows()
            )));
        }
        let mut counts = vec![0usize; class_count];
        for (i, &y) in labels.iter().enumerate() {
            if y == 0 || y > class_count {
                return Err(Error::InvalidInput(format!(
                    "label {y} at row {} is outside 1..={class_count}",
                    i + 1
                )));
            }
            counts[y - 1] += 1;
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::MissingClass {
                class: missing + 1,
                class_count,
            });
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    /// Builds the dataset taking the class count from the largest label.
    pub fn with_inferred_classes(features: FeatureMatrix, labels: Vec<usize>) -> Result<Self> {
        let class_count = labels.iter().copied().max().unwrap_or(0);
        Self::new(features, labels, class_count.max(2))
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of rows carrying each label, indexed by `label - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for &y in &self.labels {
            counts[y - 1] += 1;
        }
        counts
    }
}

/// Test sample: features only, labels unobserved.
#[derive(Debug, Clone)]
pub struct UnlabeledDataset {
    features: FeatureMatrix,
}

impl UnlabeledDataset {
    pub fn new(features: FeatureMatrix) -> Result<Self> {
        // FeatureMatrix already guarantees at least one row of finite values.
        Ok(Self { features })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_features() {
        let err = FeatureMatrix::new(vec![0.1, f64::NAN], 2, 1).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        let msg = format!("{err}");
        assert!(msg.contains("row 2"), "diagnostic should name the row: {msg}");
    }

    #[test]
    fn rejects_missing_class() {
        let features = FeatureMatrix::from_column(&[0.0, 1.0, 2.0]).unwrap();
        let err = LabeledDataset::new(features, vec![1, 1, 3], 3).unwrap_err();
        assert!(matches!(err, Error::MissingClass { class: 2, .. }));
    }

    #[test]
    fn class_counts_match_labels() {
        let features = FeatureMatrix::from_column(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let ds = LabeledDataset::new(features, vec![1, 2, 2, 2], 2).unwrap();
        assert_eq!(ds.class_counts(), vec![1, 3]);
    }
}

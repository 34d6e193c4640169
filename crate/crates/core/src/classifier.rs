//! Crisp per-class indicator classifiers computable from features alone.

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use std::sync::Arc;

/// How the classifier was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierMode {
    OneVsAll,
    FriedmanThreshold,
    CostSensitive,
}

type Indicator = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A bundle of hard one-vs-all indicators, one per class. Outputs are
/// exactly zero or one and depend on the features only.
#[derive(Clone)]
pub struct HardClassifier {
    mode: ClassifierMode,
    indicators: Vec<Indicator>,
}

impl HardClassifier {
    pub fn new(mode: ClassifierMode, indicators: Vec<Indicator>) -> Result<Self> {
        if indicators.len() < 2 {
            return Err(Error::InvalidInput(
                "a hard classifier needs one indicator per class (at least two)".into(),
            ));
        }
        Ok(Self { mode, indicators })
    }

    pub fn mode(&self) -> ClassifierMode {
        self.mode
    }

    pub fn class_count(&self) -> usize {
        self.indicators.len()
    }

    /// Indicator of the 1-based class `label` at `x`, as 0.0 or 1.0.
    pub fn indicate(&self, label: usize, x: &[f64]) -> f64 {
        if (self.indicators[label - 1])(x) {
            1.0
        } else {
            0.0
        }
    }

    pub fn indicator(&self, label: usize) -> Indicator {
        self.indicators[label - 1].clone()
    }

    /// Evaluates every indicator on every row, producing an
    /// `n x class_count` 0/1 table.
    pub fn indicator_table(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        let n = features.n_rows();
        let l = self.class_count();
        let mut data = vec![0.0; n * l];
        for (i, row) in features.rows_iter().enumerate() {
            for (j, f) in self.indicators.iter().enumerate() {
                data[i * l + j] = if f(row) { 1.0 } else { 0.0 };
            }
        }
        FeatureMatrix::new(data, n, l)
    }

    /// Binary classifier from a single positive-class indicator; the second
    /// class gets the complement.
    pub fn binary<F>(mode: ClassifierMode, positive: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        let positive: Indicator = Arc::new(positive);
        let complement = {
            let positive = positive.clone();
            Arc::new(move |x: &[f64]| !positive(x)) as Indicator
        };
        Self {
            mode,
            indicators: vec![positive, complement],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_are_zero_or_one() {
        let clf = HardClassifier::binary(ClassifierMode::OneVsAll, |x| x[0] > 0.5);
        assert_eq!(clf.indicate(1, &[0.6]), 1.0);
        assert_eq!(clf.indicate(1, &[0.5]), 0.0);
        assert_eq!(clf.indicate(2, &[0.5]), 1.0);
    }

    #[test]
    fn table_matches_pointwise_eval() {
        let clf = HardClassifier::binary(ClassifierMode::OneVsAll, |x| x[0] > 0.0);
        let features = FeatureMatrix::from_column(&[-1.0, 1.0]).unwrap();
        let table = clf.indicator_table(&features).unwrap();
        assert_eq!(table.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }
}

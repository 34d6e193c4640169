//! Points on the probability simplex and the projection policy used to turn
//! raw estimates into valid prevalence vectors.

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Tolerance for the sum-to-one invariant of a prevalence vector.
pub const SIMPLEX_SUM_TOLERANCE: f64 = 1e-12;

/// Class prior probabilities over `len() >= 2` classes. Entry `k` is the
/// prior of class label `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceVector {
    probs: Vec<f64>,
}

impl PrevalenceVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidInput(
                "a prevalence vector needs at least two classes".into(),
            ));
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: "prevalence vector".into(),
            });
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidInput(
                "prevalence entries must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "prevalence entries sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Uniform vector over `class_count` classes.
    ///
    /// Panics if `class_count < 2`; the count comes from an already
    /// validated dataset or model.
    pub fn uniform(class_count: usize) -> Self {
        assert!(class_count >= 2, "need at least two classes");
        Self {
            probs: vec![1.0 / class_count as f64; class_count],
        }
    }

    /// Binary vector `(q1, 1 - q1)`.
    pub fn binary(q1: f64) -> Result<Self> {
        Self::new(vec![q1, 1.0 - q1])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Prior of the 1-based class `label`.
    pub fn class_prob(&self, label: usize) -> f64 {
        self.probs[label - 1]
    }

    /// True when every entry is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}

/// Result of projecting a raw estimate onto the simplex.
#[derive(Debug, Clone)]
pub struct Projection {
    pub prevalence: PrevalenceVector,
    /// Set when any entry had to be clipped into [0, 1].
    pub clipped: bool,
    /// Set when every entry clipped to zero and the uniform fallback was used.
    pub degenerate: bool,
}

/// Clips the entries of `raw` into `[0, 1]` and renormalizes them to sum to
/// one. If everything clips to zero the uniform vector is returned and the
/// degeneracy is flagged. Idempotent: a vector already on the simplex passes
/// through unchanged.
pub fn make_prevalence(raw: &[f64]) -> Result<Projection> {
    if raw.len() < 2 {
        return Err(Error::InvalidInput(
            "a prevalence vector needs at least two classes".into(),
        ));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "raw prevalence estimate".into(),
        });
    }
    let mut clipped = false;
    let mut probs: Vec<f64> = raw
        .iter()
        .map(|&v| {
            let c = v.clamp(0.0, 1.0);
            if c != v {
                clipped = true;
            }
            c
        })
        .collect();
    let sum: f64 = probs.iter().sum();
    if sum <= 0.0 {
        return Ok(Projection {
            prevalence: PrevalenceVector::uniform(raw.len()),
            clipped,
            degenerate: true,
        });
    }
    if (sum - 1.0).abs() > SIMPLEX_SUM_TOLERANCE {
        for p in &mut probs {
            *p /= sum;
        }
    }
    Ok(Projection {
        prevalence: PrevalenceVector::new(probs)?,
        clipped,
        degenerate: false,
    })
}

/// Class relative frequencies of a labeled sample.
pub fn empirical_priors(data: &LabeledDataset) -> PrevalenceVector {
    let n = data.len() as f64;
    let probs: Vec<f64> = data
        .class_counts()
        .into_iter()
        .map(|c| c as f64 / n)
        .collect();
    PrevalenceVector::new(probs).expect("class frequencies form a prevalence vector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMatrix;

    #[test]
    fn passes_through_simplex_points() {
        let proj = make_prevalence(&[0.3, 0.7]).unwrap();
        assert_eq!(proj.prevalence.probs(), &[0.3, 0.7]);
        assert!(!proj.clipped);
        assert!(!proj.degenerate);
    }

    #[test]
    fn clips_out_of_range_entries() {
        let proj = make_prevalence(&[-0.1, 1.1]).unwrap();
        assert_eq!(proj.prevalence.probs(), &[0.0, 1.0]);
        assert!(proj.clipped);
    }

    #[test]
    fn renormalizes_without_flagging() {
        let proj = make_prevalence(&[0.2, 0.2, 0.1]).unwrap();
        assert_eq!(proj.prevalence.probs(), &[0.4, 0.4, 0.2]);
        assert!(!proj.clipped);
    }

    #[test]
    fn all_zero_input_falls_back_to_uniform() {
        let proj = make_prevalence(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(proj.prevalence.probs(), &[1.0 / 3.0; 3]);
        assert!(proj.degenerate);
        assert!(!proj.clipped);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            make_prevalence(&[f64::INFINITY, 0.5]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn idempotent_projection() {
        let first = make_prevalence(&[1.7, -0.3, 0.4]).unwrap();
        let second = make_prevalence(first.prevalence.probs()).unwrap();
        assert_eq!(first.prevalence.probs(), second.prevalence.probs());
        assert!(!second.clipped);
    }

    #[test]
    fn empirical_priors_are_frequencies() {
        let features = FeatureMatrix::from_column(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let ds = LabeledDataset::new(features, vec![1, 2, 2, 2], 2).unwrap();
        assert_eq!(empirical_priors(&ds).probs(), &[0.25, 0.75]);

        let features = FeatureMatrix::from_column(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let ds = LabeledDataset::new(features, vec![1, 2, 3, 3], 3).unwrap();
        assert_eq!(empirical_priors(&ds).probs(), &[0.25, 0.25, 0.5]);
    }
}

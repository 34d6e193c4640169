//! Synthetic data generation under prior probability shift: class labels are
//! drawn from the test priors while the class-conditional feature
//! distributions stay fixed at their training versions.

use crate::dataset::{FeatureMatrix, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::prevalence::PrevalenceVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Draws feature vectors for one class-conditional distribution.
pub trait FeatureSampler: Send + Sync {
    fn feature_dim(&self) -> usize;
    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]);
}

/// Univariate Gaussian class-conditional.
#[derive(Debug, Clone)]
pub struct NormalSampler {
    dist: Normal<f64>,
}

impl NormalSampler {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self> {
        if !mean.is_finite() || !std_dev.is_finite() || std_dev <= 0.0 {
            return Err(Error::InvalidInput(
                "normal sampler needs a finite mean and a positive standard deviation".into(),
            ));
        }
        Ok(Self {
            dist: Normal::new(mean, std_dev).expect("validated parameters"),
        })
    }
}

impl FeatureSampler for NormalSampler {
    fn feature_dim(&self) -> usize {
        1
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        out[0] = self.dist.sample(rng);
    }
}

/// Finite-support class-conditional over a fixed set of feature points.
#[derive(Debug, Clone)]
pub struct DiscreteSampler {
    points: FeatureMatrix,
    cumulative: Vec<f64>,
}

impl DiscreteSampler {
    pub fn new(points: FeatureMatrix, probs: &[f64]) -> Result<Self> {
        if probs.len() != points.n_rows() {
            return Err(Error::InvalidInput(
                "one probability per support point is required".into(),
            ));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(
                "support probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("support probabilities sum to zero".into()));
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in probs {
            acc += p / total;
            cumulative.push(acc);
        }
        *cumulative.last_mut().expect("non-empty") = 1.0;
        Ok(Self { points, cumulative })
    }

    fn draw_index(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.gen();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1)
    }
}

impl FeatureSampler for DiscreteSampler {
    fn feature_dim(&self) -> usize {
        self.points.n_cols()
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        let idx = self.draw_index(rng);
        out.copy_from_slice(self.points.row(idx));
    }
}

/// A test sample drawn under prior probability shift. The labels are the
/// hidden ground truth, available to validation harnesses only.
#[derive(Debug, Clone)]
pub struct ShiftedSample {
    pub features: UnlabeledDataset,
    pub true_labels: Vec<usize>,
}

/// Draws `n` examples: labels i.i.d. from `test_priors`, features from the
/// matching class-conditional sampler. Deterministic for a fixed seed.
pub fn sample_prior_shift(
    samplers: &[&dyn FeatureSampler],
    test_priors: &PrevalenceVector,
    n: usize,
    seed: u64,
) -> Result<ShiftedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (features, labels) = sample_mixture_with_rng(&mut rng, samplers, test_priors, n)?;
    Ok(ShiftedSample {
        features: UnlabeledDataset::new(features)?,
        true_labels: labels,
    })
}

/// Mixture sampling against a caller-provided stream; used by the Monte
/// Carlo harness so each replication gets its own counter-based stream.
pub(crate) fn sample_mixture_with_rng(
    rng: &mut dyn RngCore,
    samplers: &[&dyn FeatureSampler],
    test_priors: &PrevalenceVector,
    n: usize,
) -> Result<(FeatureMatrix, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidInput("cannot draw an empty sample".into()));
    }
    if samplers.is_empty() || samplers.len() != test_priors.len() {
        return Err(Error::InvalidInput(format!(
            "got {} samplers for {} classes",
            samplers.len(),
            test_priors.len()
        )));
    }
    let dim = samplers[0].feature_dim();
    if samplers.iter().any(|s| s.feature_dim() != dim) {
        return Err(Error::InvalidInput(
            "class-conditional samplers disagree on the feature dimension".into(),
        ));
    }
    let mut cumulative = Vec::with_capacity(test_priors.len());
    let mut acc = 0.0;
    for &p in test_priors.probs() {
        acc += p;
        cumulative.push(acc);
    }
    *cumulative.last_mut().expect("non-empty") = 1.0;

    let mut data = vec![0.0; n * dim];
    let mut labels = Vec::with_capacity(n);
    for row in data.chunks_mut(dim) {
        let u: f64 = rng.gen();
        let class = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(test_priors.len() - 1);
        samplers[class].sample_into(rng, row);
        labels.push(class + 1);
    }
    let features = FeatureMatrix::new(data, n, dim)?;
    Ok((features, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binormal_samplers() -> (NormalSampler, NormalSampler) {
        (
            NormalSampler::new(1.5, 1.0).unwrap(),
            NormalSampler::new(0.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn rejects_empty_sample() {
        let (s1, s2) = binormal_samplers();
        let q = PrevalenceVector::binary(0.5).unwrap();
        let err = sample_prior_shift(&[&s1, &s2], &q, 0, 7).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn degenerate_prior_draws_from_single_class() {
        let points1 = FeatureMatrix::from_column(&[10.0]).unwrap();
        let points2 = FeatureMatrix::from_column(&[-10.0]).unwrap();
        let s1 = DiscreteSampler::new(points1, &[1.0]).unwrap();
        let s2 = DiscreteSampler::new(points2, &[1.0]).unwrap();
        let q = PrevalenceVector::new(vec![1.0, 0.0]).unwrap();
        let sample = sample_prior_shift(&[&s1, &s2], &q, 200, 3).unwrap();
        assert!(sample.true_labels.iter().all(|&y| y == 1));
        assert!(sample.features.features().as_slice().iter().all(|&x| x == 10.0));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (s1, s2) = binormal_samplers();
        let q = PrevalenceVector::binary(0.3).unwrap();
        let a = sample_prior_shift(&[&s1, &s2], &q, 500, 42).unwrap();
        let b = sample_prior_shift(&[&s1, &s2], &q, 500, 42).unwrap();
        assert_eq!(a.features.features().as_slice(), b.features.features().as_slice());
        assert_eq!(a.true_labels, b.true_labels);
    }

    #[test]
    fn mixture_mean_matches_analytic_value() {
        // Mixture mean oracle: 0.5 * 1.5 + 0.5 * 0.0 = 0.75.
        let (s1, s2) = binormal_samplers();
        let q = PrevalenceVector::binary(0.5).unwrap();
        let sample = sample_prior_shift(&[&s1, &s2], &q, 1_000_000, 11).unwrap();
        let mean = sample.features.features().column_mean(0);
        assert!(
            (mean - 0.75).abs() < 0.005,
            "empirical mixture mean {mean} too far from 0.75"
        );
    }

    #[test]
    fn hidden_labels_match_test_priors() {
        let (s1, s2) = binormal_samplers();
        let q = PrevalenceVector::binary(0.3).unwrap();
        let sample = sample_prior_shift(&[&s1, &s2], &q, 100_000, 5).unwrap();
        let rate = sample.true_labels.iter().filter(|&&y| y == 1).count() as f64 / 100_000.0;
        // three binomial standard errors
        assert!((rate - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / 100_000.0).sqrt());
    }
}

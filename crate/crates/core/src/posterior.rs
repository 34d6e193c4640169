//! Posterior class-probability models evaluated on feature points.

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::prevalence::PrevalenceVector;
use std::sync::Arc;

/// Largest tolerated deviation of the raw posterior sum from one; outputs
/// within the tolerance are renormalized exactly.
pub const POSTERIOR_SUM_TOLERANCE: f64 = 1e-9;

/// Maps a feature point to the vector of training posterior probabilities
/// `P[Y = y | X = x]`, and carries the training priors the model was built
/// under.
pub trait PosteriorModel: Send + Sync {
    fn class_count(&self) -> usize;

    fn train_priors(&self) -> &PrevalenceVector;

    /// Writes the raw posterior vector for `x` into `out`
    /// (`out.len() == class_count()`).
    fn eval_raw(&self, x: &[f64], out: &mut [f64]);

    /// Validated posterior evaluation: entries must be finite, nonnegative
    /// and sum to one within [`POSTERIOR_SUM_TOLERANCE`]; the result is then
    /// renormalized so downstream covariance identities hold to machine
    /// precision.
    fn posterior_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval_raw(x, out);
        let mut sum = 0.0;
        for &v in out.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "posterior model produced an invalid probability {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > POSTERIOR_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "posterior probabilities sum to {sum}, not 1"
            )));
        }
        for v in out.iter_mut() {
            *v /= sum;
        }
        Ok(())
    }

    /// Posterior of a single 1-based class label.
    fn class_posterior(&self, x: &[f64], label: usize) -> Result<f64> {
        let mut buf = vec![0.0; self.class_count()];
        self.posterior_into(x, &mut buf)?;
        Ok(buf[label - 1])
    }

    /// Evaluates the model on every row of `features`, producing an
    /// `n x class_count` table.
    fn posterior_table(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        let n = features.n_rows();
        let l = self.class_count();
        let mut data = vec![0.0; n * l];
        for (i, row) in features.rows_iter().enumerate() {
            self.posterior_into(row, &mut data[i * l..(i + 1) * l])?;
        }
        FeatureMatrix::new(data, n, l)
    }
}

/// Posterior model backed by a closure; used for exact oracle posteriors of
/// synthetic generators and for hand-built discrete toys.
#[derive(Clone)]
pub struct FnPosterior {
    priors: PrevalenceVector,
    eval: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
}

impl FnPosterior {
    pub fn new<F>(priors: PrevalenceVector, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            priors,
            eval: Arc::new(eval),
        }
    }

    /// Convenience constructor from a vector-returning closure.
    pub fn from_fn<F>(priors: PrevalenceVector, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::new(priors, move |x, out| {
            let v = f(x);
            out.copy_from_slice(&v);
        })
    }
}

impl PosteriorModel for FnPosterior {
    fn class_count(&self) -> usize {
        self.priors.len()
    }

    fn train_priors(&self) -> &PrevalenceVector {
        &self.priors
    }

    fn eval_raw(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renormalizes_within_tolerance() {
        let priors = PrevalenceVector::binary(0.5).unwrap();
        let model = FnPosterior::from_fn(priors, |_| vec![0.6 + 2e-10, 0.4]);
        let mut out = [0.0; 2];
        model.posterior_into(&[0.0], &mut out).unwrap();
        let sum: f64 = out.iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn rejects_bad_sums_and_negatives() {
        let priors = PrevalenceVector::binary(0.5).unwrap();
        let model = FnPosterior::from_fn(priors.clone(), |_| vec![0.7, 0.4]);
        let mut out = [0.0; 2];
        assert!(model.posterior_into(&[0.0], &mut out).is_err());

        let model = FnPosterior::from_fn(priors, |_| vec![-0.1, 1.1]);
        assert!(model.posterior_into(&[0.0], &mut out).is_err());
    }
}

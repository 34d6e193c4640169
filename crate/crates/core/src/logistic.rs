//! Minimal multinomial logistic regression.
//!
//! The estimators treat posterior models as given; this learner exists so
//! the toolkit runs end-to-end on real CSV data. Full-batch gradient
//! descent with a backtracking step on standardized features, L2-penalized,
//! deterministically initialized at zero.

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::posterior::PosteriorModel;
use crate::prevalence::{empirical_priors, PrevalenceVector};

#[derive(Debug, Clone, Copy)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 2000,
            grad_tol: 1e-7,
        }
    }
}

/// Fitted multinomial logistic posterior model.
#[derive(Debug, Clone)]
pub struct MultinomialLogistic {
    // class-major weights, each row [w_1 .. w_d, bias] on standardized inputs
    weights: Vec<f64>,
    feature_means: Vec<f64>,
    feature_scales: Vec<f64>,
    class_count: usize,
    priors: PrevalenceVector,
}

impl MultinomialLogistic {
    pub fn fit(train: &LabeledDataset, config: &LogisticConfig) -> Result<Self> {
        let n = train.len();
        let d = train.features().n_cols();
        let l = train.class_count();

        let mut means = vec![0.0; d];
        for row in train.features().rows_iter() {
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut scales = vec![0.0; d];
        for row in train.features().rows_iter() {
            for (s, (&v, &m)) in scales.iter_mut().zip(row.iter().zip(&means)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scales {
            *s = (*s / n as f64).sqrt();
            if *s < 1e-12 {
                *s = 1.0; // constant column, leave it centered
            }
        }

        // standardized design with a trailing bias column
        let p = d + 1;
        let mut design = vec![0.0; n * p];
        for (i, row) in train.features().rows_iter().enumerate() {
            for j in 0..d {
                design[i * p + j] = (row[j] - means[j]) / scales[j];
            }
            design[i * p + d] = 1.0;
        }

        let mut weights = vec![0.0; l * p];
        let mut step = 1.0;
        let mut objective = Self::objective(&design, train.labels(), &weights, n, l, p, config.l2);

        for _ in 0..config.max_iter {
            let gradient =
                Self::gradient(&design, train.labels(), &weights, n, l, p, config.l2);
            let grad_norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
            if grad_norm < config.grad_tol {
                break;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let candidate: Vec<f64> = weights
                    .iter()
                    .zip(&gradient)
                    .map(|(w, g)| w - step * g)
                    .collect();
                let cand_obj =
                    Self::objective(&design, train.labels(), &candidate, n, l, p, config.l2);
                if cand_obj <= objective {
                    weights = candidate;
                    objective = cand_obj;
                    step *= 1.1;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break; // at numerical resolution
            }
        }

        Ok(Self {
            weights,
            feature_means: means,
            feature_scales: scales,
            class_count: l,
            priors: empirical_priors(train),
        })
    }

    fn logits_standardized(design_row: &[f64], weights: &[f64], l: usize, p: usize) -> Vec<f64> {
        (0..l)
            .map(|k| {
                let w = &weights[k * p..(k + 1) * p];
                w.iter().zip(design_row).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    fn softmax(logits: &mut [f64]) {
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in logits.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in logits.iter_mut() {
            *v /= sum;
        }
    }

    fn objective(
        design: &[f64],
        labels: &[usize],
        weights: &[f64],
        n: usize,
        l: usize,
        p: usize,
        l2: f64,
    ) -> f64 {
        let mut nll = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &design[i * p..(i + 1) * p];
            let logits = Self::logits_standardized(row, weights, l, p);
            let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            nll += lse - logits[y - 1];
        }
        let mut penalty = 0.0;
        for k in 0..l {
            for j in 0..p - 1 {
                let w = weights[k * p + j];
                penalty += w * w;
            }
        }
        nll / n as f64 + 0.5 * l2 * penalty
    }

    fn gradient(
        design: &[f64],
        labels: &[usize],
        weights: &[f64],
        n: usize,
        l: usize,
        p: usize,
        l2: f64,
    ) -> Vec<f64> {
        let mut grad = vec![0.0; l * p];
        for (i, &y) in labels.iter().enumerate() {
            let row = &design[i * p..(i + 1) * p];
            let mut probs = Self::logits_standardized(row, weights, l, p);
            Self::softmax(&mut probs);
            probs[y - 1] -= 1.0;
            for k in 0..l {
                let gk = &mut grad[k * p..(k + 1) * p];
                for j in 0..p {
                    gk[j] += probs[k] * row[j];
                }
            }
        }
        for g in &mut grad {
            *g /= n as f64;
        }
        for k in 0..l {
            for j in 0..p - 1 {
                grad[k * p + j] += l2 * weights[k * p + j];
            }
        }
        grad
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        let d = self.feature_means.len();
        let mut row = vec![0.0; d + 1];
        for j in 0..d {
            row[j] = (x[j] - self.feature_means[j]) / self.feature_scales[j];
        }
        row[d] = 1.0;
        row
    }

    /// Per-class linear scores (pre-softmax).
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let row = self.standardize(x);
        let p = self.feature_means.len() + 1;
        Self::logits_standardized(&row, &self.weights, self.class_count, p)
    }

    /// Score of one class against the best competitor; a natural scorer for
    /// one-vs-all threshold rules.
    pub fn logit_margin(&self, x: &[f64], label: usize) -> f64 {
        let logits = self.logits(x);
        let own = logits[label - 1];
        let best_other = logits
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != label - 1)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        own - best_other
    }
}

impl PosteriorModel for MultinomialLogistic {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn train_priors(&self) -> &PrevalenceVector {
        &self.priors
    }

    fn eval_raw(&self, x: &[f64], out: &mut [f64]) {
        let mut probs = self.logits(x);
        Self::softmax(&mut probs);
        out.copy_from_slice(&probs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMatrix;

    fn separable_train() -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            rows.push(vec![2.0 + 0.05 * i as f64]);
            labels.push(1);
            rows.push(vec![-2.0 - 0.05 * i as f64]);
            labels.push(2);
        }
        LabeledDataset::new(FeatureMatrix::from_rows(&rows).unwrap(), labels, 2).unwrap()
    }

    #[test]
    fn separable_data_gets_confident_posteriors() {
        let model = MultinomialLogistic::fit(&separable_train(), &LogisticConfig::default()).unwrap();
        let mut out = [0.0; 2];
        model.posterior_into(&[3.0], &mut out).unwrap();
        assert!(out[0] > 0.9, "class 1 posterior {} too low", out[0]);
        model.posterior_into(&[-3.0], &mut out).unwrap();
        assert!(out[1] > 0.9, "class 2 posterior {} too low", out[1]);
    }

    #[test]
    fn posteriors_sum_to_one() {
        let model = MultinomialLogistic::fit(&separable_train(), &LogisticConfig::default()).unwrap();
        let mut out = [0.0; 2];
        for x in [-5.0, -0.3, 0.0, 0.7, 4.2] {
            model.posterior_into(&[x], &mut out).unwrap();
            assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn margin_increases_with_feature_for_upper_class() {
        let model = MultinomialLogistic::fit(&separable_train(), &LogisticConfig::default()).unwrap();
        assert!(model.logit_margin(&[2.0], 1) > model.logit_margin(&[-2.0], 1));
    }
}

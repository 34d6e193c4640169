//! The named prevalence estimators behind a uniform reporting interface.
//!
//! All of them are instances of the linear-system framework in
//! [`crate::moments`]: Adjusted Count inverts hard-classifier rates,
//! Friedman's method uses the posterior-threshold classifier that maximizes
//! the rate gap, DeBias and PAC replace indicators with training
//! posteriors, the covariance estimator inverts the posterior covariance
//! matrix, and the EM baseline iterates the maximum-likelihood fixed point.

use crate::classifier::{ClassifierMode, HardClassifier};
use crate::dataset::{FeatureMatrix, LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::moments::{
    build_conditional_mean_system, solve_full_system, solve_reduced, CovarianceTarget,
    ReducedOptions, StatisticProfile,
};
use crate::posterior::PosteriorModel;
use crate::prevalence::{empirical_priors, make_prevalence, PrevalenceVector};
use crate::report::{Diagnostics, EstimateReport, Method};
use std::sync::Arc;

/// Training posterior variance below this is treated as uninformative.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Denominators below this count as a zero rate gap.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

pub const EM_DEFAULT_TOL: f64 = 1e-8;
pub const EM_DEFAULT_MAX_ITER: usize = 10_000;

/// Real-valued scoring function over feature points.
pub type ScoreFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Adjusted Count: one-vs-all indicator statistics, conditional-mean
/// system, constrained least squares.
pub fn adjusted_count(
    classifier: &HardClassifier,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
) -> Result<EstimateReport> {
    if classifier.class_count() != train.class_count() {
        return Err(Error::InvalidInput(format!(
            "classifier covers {} classes but the training data has {}",
            classifier.class_count(),
            train.class_count()
        )));
    }
    let stats = StatisticProfile::from_classifier(classifier);
    let system = build_conditional_mean_system(&stats, train, test)?;
    Ok(solve_full_system(&system)?.with_method(Method::AdjustedCount))
}

/// The posterior-threshold classifier: class `y` fires iff
/// `P[Y=y|X=x] > p_y`, with ties mapping to zero.
pub fn friedman_classifier(model: &Arc<dyn PosteriorModel>) -> HardClassifier {
    let indicators = (1..=model.class_count())
        .map(|label| {
            let model = model.clone();
            let prior = model.train_priors().class_prob(label);
            Arc::new(move |x: &[f64]| {
                model.class_posterior(x, label).unwrap_or(f64::NAN) > prior
            }) as Arc<dyn Fn(&[f64]) -> bool + Send + Sync>
        })
        .collect();
    HardClassifier::new(ClassifierMode::FriedmanThreshold, indicators)
        .expect("posterior models have at least two classes")
}

/// Cost weights for the positive-vs-rest classification problem whose
/// minimizer is the complement of the posterior-threshold classifier.
#[derive(Debug, Clone, Copy)]
pub struct CostSensitiveSpec {
    /// 1-based label treated as the positive class.
    pub positive_class: usize,
    /// `(w_pos, w_neg)`: weight on covering a positive, weight on missing a
    /// negative.
    pub weights: (f64, f64),
}

impl CostSensitiveSpec {
    pub fn new(positive_class: usize, w_pos: f64, w_neg: f64) -> Result<Self> {
        if positive_class == 0 {
            return Err(Error::InvalidInput("class labels are 1-based".into()));
        }
        if !(w_pos.is_finite() && w_neg.is_finite()) || w_pos < 0.0 || w_neg < 0.0 {
            return Err(Error::InvalidInput(
                "cost weights must be finite and nonnegative".into(),
            ));
        }
        if w_pos == 0.0 && w_neg == 0.0 {
            return Err(Error::InvalidInput("cost weights must not both be zero".into()));
        }
        Ok(Self {
            positive_class,
            weights: (w_pos, w_neg),
        })
    }

    /// The weighting `(1 - p_pos, p_pos)` derived from the training priors.
    pub fn from_priors(positive_class: usize, priors: &PrevalenceVector) -> Result<Self> {
        let p = priors.class_prob(positive_class);
        Self::new(positive_class, 1.0 - p, p)
    }
}

/// Outcome of the cost-sensitive threshold search.
#[derive(Debug, Clone)]
pub struct CostSensitiveFit {
    /// Learned threshold on the score scale.
    pub threshold: f64,
    /// Whether the positive indicator is `score > threshold` (else `<=`).
    pub positive_above: bool,
    /// Weighted empirical cost attained by the fitted rule.
    pub empirical_cost: f64,
}

fn threshold_search(
    scored: &mut Vec<(f64, bool)>,
    w_pos: f64,
    w_neg: f64,
) -> CostSensitiveFit {
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scored.len() as f64;
    let pos_total: usize = scored.iter().filter(|s| s.1).count();
    let neg_total = scored.len() - pos_total;

    // Candidate cuts sit before index 0, between distinct scores, and after
    // the last index. `g = 1{score > t}` covers the suffix; its complement
    // is returned as the positive rule, so the search minimizes the cost of
    // covering positives with g and missing negatives.
    let mut best_cost = f64::INFINITY;
    let mut best_threshold = 0.0;
    let mut best_above = true;
    let mut pos_below = 0usize;
    let mut neg_below = 0usize;

    let mut consider = |cut_idx: usize, pos_below: usize, neg_below: usize,
                        best_cost: &mut f64, best_threshold: &mut f64, best_above: &mut bool| {
        let threshold = if cut_idx == 0 {
            scored[0].0 - 1.0
        } else if cut_idx == scored.len() {
            scored[scored.len() - 1].0 + 1.0
        } else {
            0.5 * (scored[cut_idx - 1].0 + scored[cut_idx].0)
        };
        // g = 1{score > t}
        let cost_upper = (w_pos * (pos_total - pos_below) as f64 + w_neg * neg_below as f64) / n;
        // g = 1{score <= t}
        let cost_lower =
            (w_pos * pos_below as f64 + w_neg * (neg_total - neg_below) as f64) / n;
        if cost_upper < *best_cost {
            *best_cost = cost_upper;
            *best_threshold = threshold;
            // g covers the upper region, the positive rule is its complement
            *best_above = false;
        }
        if cost_lower < *best_cost {
            *best_cost = cost_lower;
            *best_threshold = threshold;
            *best_above = true;
        }
    };

    consider(0, 0, 0, &mut best_cost, &mut best_threshold, &mut best_above);
    let mut i = 0;
    while i < scored.len() {
        let v = scored[i].0;
        while i < scored.len() && scored[i].0 == v {
            if scored[i].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        consider(i, pos_below, neg_below, &mut best_cost, &mut best_threshold, &mut best_above);
    }

    CostSensitiveFit {
        threshold: best_threshold,
        positive_above: best_above,
        empirical_cost: best_cost,
    }
}

/// Fits the cost-sensitive threshold rule on the training scores and
/// returns the details of the learned cut. `spec.weights = (1 - p, p)`
/// makes the population optimum coincide with the posterior-threshold
/// classifier without ever evaluating a posterior estimate.
pub fn cost_sensitive_fit(
    train: &LabeledDataset,
    spec: &CostSensitiveSpec,
    scorer: &ScoreFn,
) -> Result<CostSensitiveFit> {
    if spec.positive_class > train.class_count() {
        return Err(Error::InvalidInput(format!(
            "positive class {} is outside 1..={}",
            spec.positive_class,
            train.class_count()
        )));
    }
    let mut scored = Vec::with_capacity(train.len());
    for (i, (row, &label)) in train
        .features()
        .rows_iter()
        .zip(train.labels())
        .enumerate()
    {
        let s = scorer(row);
        if !s.is_finite() {
            return Err(Error::NonFinite {
                context: format!("score on training row {}", i + 1),
            });
        }
        scored.push((s, label == spec.positive_class));
    }
    let pos = scored.iter().filter(|s| s.1).count();
    if pos == 0 || pos == scored.len() {
        return Err(Error::InvalidInput(
            "training data has a single class after the one-vs-all reduction".into(),
        ));
    }
    Ok(threshold_search(&mut scored, spec.weights.0, spec.weights.1))
}

/// Fits the cost-sensitive rule and wraps it as a binary classifier whose
/// first indicator is the positive class and whose second is the rest.
pub fn cost_sensitive_classifier(
    train: &LabeledDataset,
    spec: &CostSensitiveSpec,
    scorer: ScoreFn,
) -> Result<HardClassifier> {
    let fit = cost_sensitive_fit(train, spec, &scorer)?;
    let threshold = fit.threshold;
    let above = fit.positive_above;
    Ok(HardClassifier::binary(
        ClassifierMode::CostSensitive,
        move |x: &[f64]| {
            let s = scorer(x);
            if above {
                s > threshold
            } else {
                s <= threshold
            }
        },
    ))
}

/// Assembles one cost-sensitive indicator per class into a multi-class hard
/// classifier; `scorers` provides one score function per 1-based class.
pub fn one_vs_all_cost_sensitive(
    train: &LabeledDataset,
    scorers: &[ScoreFn],
) -> Result<HardClassifier> {
    let l = train.class_count();
    if scorers.len() != l {
        return Err(Error::InvalidInput(format!(
            "got {} scorers for {l} classes",
            scorers.len()
        )));
    }
    let priors = empirical_priors(train);
    let mut indicators = Vec::with_capacity(l);
    for (idx, scorer) in scorers.iter().enumerate() {
        let spec = CostSensitiveSpec::from_priors(idx + 1, &priors)?;
        let fit = cost_sensitive_fit(train, &spec, scorer)?;
        let scorer = scorer.clone();
        let threshold = fit.threshold;
        let above = fit.positive_above;
        indicators.push(Arc::new(move |x: &[f64]| {
            let s = scorer(x);
            if above {
                s > threshold
            } else {
                s <= threshold
            }
        }) as Arc<dyn Fn(&[f64]) -> bool + Send + Sync>);
    }
    HardClassifier::new(ClassifierMode::CostSensitive, indicators)
}

fn class_conditional_mean(
    values: impl Iterator<Item = f64>,
    labels: &[usize],
    class: usize,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (v, &y) in values.zip(labels) {
        if y == class {
            sum += v;
            count += 1;
        }
    }
    sum / count as f64
}

/// Friedman's estimator. Binary: the closed-form rate inversion of the
/// class-1 indicator. Multi-class: the conditional-mean system over all
/// per-class indicators, solved by constrained least squares.
pub fn friedman_estimate(
    train: &LabeledDataset,
    test: &UnlabeledDataset,
    classifier: &HardClassifier,
) -> Result<EstimateReport> {
    if classifier.class_count() != train.class_count() {
        return Err(Error::InvalidInput(format!(
            "classifier covers {} classes but the training data has {}",
            classifier.class_count(),
            train.class_count()
        )));
    }
    let method = match classifier.mode() {
        ClassifierMode::CostSensitive => Method::FriedmanCostSensitive,
        _ => Method::Friedman,
    };
    if train.class_count() == 2 {
        let train_ind: Vec<f64> = train
            .features()
            .rows_iter()
            .map(|row| classifier.indicate(1, row))
            .collect();
        let rate_pos = class_conditional_mean(train_ind.iter().copied(), train.labels(), 1);
        let rate_neg = class_conditional_mean(train_ind.iter().copied(), train.labels(), 2);
        let denom = rate_pos - rate_neg;
        if denom.abs() <= DENOMINATOR_FLOOR {
            return Err(Error::ZeroDenominator {
                method: method.as_str(),
            });
        }
        let mean_test = test
            .features()
            .rows_iter()
            .map(|row| classifier.indicate(1, row))
            .sum::<f64>()
            / test.len() as f64;
        let raw1 = (mean_test - rate_neg) / denom;
        let raw = vec![raw1, 1.0 - raw1];
        let projection = make_prevalence(&raw)?;
        Ok(EstimateReport {
            method,
            estimate: projection.prevalence,
            raw_estimate: raw,
            diagnostics: Diagnostics {
                clipped: projection.clipped,
                degenerate_projection: projection.degenerate,
                ..Diagnostics::default()
            },
            seed: None,
        })
    } else {
        let stats = StatisticProfile::from_classifier(classifier);
        let system = build_conditional_mean_system(&stats, train, test)?;
        Ok(solve_full_system(&system)?.with_method(method))
    }
}

/// DeBias: scales the shift of the mean training posterior by
/// `p1 (1 - p1) / var_P[posterior]`. Binary only; the training priors and
/// the posterior variance are taken from the training sample.
pub fn debias_estimate(
    model: &Arc<dyn PosteriorModel>,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
) -> Result<EstimateReport> {
    if train.class_count() != 2 || model.class_count() != 2 {
        return Err(Error::InvalidInput(
            "the DeBias estimator is defined for the binary case".into(),
        ));
    }
    let p1 = empirical_priors(train).class_prob(1);
    let train_post = model.posterior_table(train.features())?;
    let n = train_post.n_rows() as f64;
    let mean_p = train_post.column_mean(0);
    let var_p = train_post
        .rows_iter()
        .map(|row| (row[0] - mean_p) * (row[0] - mean_p))
        .sum::<f64>()
        / n;
    if var_p < VARIANCE_FLOOR {
        return Err(Error::DegenerateVariance {
            variance: var_p,
            floor: VARIANCE_FLOOR,
        });
    }
    let test_post = model.posterior_table(test.features())?;
    let mean_q = test_post.column_mean(0);
    let raw1 = p1 * (1.0 - p1) / var_p * (mean_q - p1) + p1;
    let raw = vec![raw1, 1.0 - raw1];
    let projection = make_prevalence(&raw)?;
    Ok(EstimateReport {
        method: Method::DeBias,
        estimate: projection.prevalence,
        raw_estimate: raw,
        diagnostics: Diagnostics {
            clipped: projection.clipped,
            degenerate_projection: projection.degenerate,
            ..Diagnostics::default()
        },
        seed: None,
    })
}

/// PAC: the rate inversion of Adjusted Count with the training posterior in
/// place of the hard indicator. Multi-class inputs are delegated to
/// [`gpac_estimate`].
pub fn pac_estimate(
    model: &Arc<dyn PosteriorModel>,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
) -> Result<EstimateReport> {
    if model.class_count() != train.class_count() {
        return Err(Error::InvalidInput(
            "posterior model and training data disagree on the class count".into(),
        ));
    }
    if train.class_count() > 2 {
        return gpac_estimate(model, train, test);
    }
    let train_post = model.posterior_table(train.features())?;
    let rate_pos =
        class_conditional_mean(train_post.rows_iter().map(|r| r[0]), train.labels(), 1);
    let rate_neg =
        class_conditional_mean(train_post.rows_iter().map(|r| r[0]), train.labels(), 2);
    let denom = rate_pos - rate_neg;
    if denom.abs() <= DENOMINATOR_FLOOR {
        return Err(Error::ZeroDenominator { method: "pac" });
    }
    let test_post = model.posterior_table(test.features())?;
    let mean_q = test_post.column_mean(0);
    let raw1 = (mean_q - rate_neg) / denom;
    let raw = vec![raw1, 1.0 - raw1];
    let projection = make_prevalence(&raw)?;
    Ok(EstimateReport {
        method: Method::Pac,
        estimate: projection.prevalence,
        raw_estimate: raw,
        diagnostics: Diagnostics {
            clipped: projection.clipped,
            degenerate_projection: projection.degenerate,
            ..Diagnostics::default()
        },
        seed: None,
    })
}

/// GPAC: the conditional-mean system with the posterior statistics,
/// solved by constrained least squares. Works for any `l >= 2`.
pub fn gpac_estimate(
    model: &Arc<dyn PosteriorModel>,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
) -> Result<EstimateReport> {
    if model.class_count() != train.class_count() {
        return Err(Error::InvalidInput(
            "posterior model and training data disagree on the class count".into(),
        ));
    }
    let stats = StatisticProfile::from_posterior(model.clone());
    let system = build_conditional_mean_system(&stats, train, test)?;
    Ok(solve_full_system(&system)?.with_method(Method::Gpac))
}

/// Multi-class covariance estimator: inverts the covariance matrix of the
/// first `l - 1` training posteriors. Coincides with DeBias when `l = 2`.
pub fn covariance_debias_multiclass(
    model: &Arc<dyn PosteriorModel>,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
) -> Result<EstimateReport> {
    if model.class_count() != train.class_count() {
        return Err(Error::InvalidInput(
            "posterior model and training data disagree on the class count".into(),
        ));
    }
    let l = train.class_count();
    let kept: Vec<usize> = (1..l).collect();
    let stats = StatisticProfile::from_posterior_classes(model.clone(), &kept);
    let report = solve_reduced(
        &stats,
        train,
        test,
        CovarianceTarget::Posteriors,
        Some(model.as_ref()),
        &ReducedOptions::default(),
    )?;
    Ok(report.with_method(Method::CovarianceDeBias))
}

/// Outcome of the EM fixed-point iteration.
#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub prevalence: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Test log-likelihood at each visited iterate, up to an additive
    /// constant; EM theory guarantees it is non-decreasing.
    pub log_likelihood_trace: Vec<f64>,
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// The maximum-likelihood fixed point on a precomputed posterior table:
/// reweight each row's posteriors by `q_y / p_y`, renormalize per row,
/// average into the next iterate. Log-likelihood deltas are accumulated
/// from per-row mixture ratios so the monotonicity of the trace is not
/// drowned in summation noise.
pub fn em_fixed_point(
    posteriors: &FeatureMatrix,
    train_priors: &[f64],
    init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<EmOutcome> {
    let l = posteriors.n_cols();
    let n = posteriors.n_rows();
    if train_priors.len() != l || init.len() != l {
        return Err(Error::InvalidInput(
            "prior and initializer lengths must match the posterior table".into(),
        ));
    }
    if train_priors.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidInput(
            "EM needs strictly positive training priors".into(),
        ));
    }
    if max_iter == 0 || !(tol > 0.0) {
        return Err(Error::InvalidInput(
            "EM needs max_iter >= 1 and a positive tolerance".into(),
        ));
    }

    let mut q: Vec<f64> = init.to_vec();
    let mut mixture = vec![0.0; n];
    let mut mixture_prev = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for step in 0..max_iter {
        let weights: Vec<f64> = q.iter().zip(train_priors).map(|(&qy, &py)| qy / py).collect();
        let mut next = vec![0.0; l];
        for (i, row) in posteriors.rows_iter().enumerate() {
            let mut m = 0.0;
            for y in 0..l {
                m += weights[y] * row[y];
            }
            if m <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "test point {} has zero likelihood under the current prevalence",
                    i + 1
                )));
            }
            mixture[i] = m;
            let inv = 1.0 / m;
            for y in 0..l {
                next[y] += weights[y] * row[y] * inv;
            }
        }
        let ll = if step == 0 {
            neumaier_sum(mixture.iter().map(|&m| m.ln()))
        } else {
            let prev_ll = *trace.last().expect("trace is non-empty after step 0");
            let delta = neumaier_sum(
                mixture
                    .iter()
                    .zip(mixture_prev.iter())
                    .map(|(&m, &mp)| (m / mp).ln()),
            );
            prev_ll + delta
        };
        trace.push(ll);
        std::mem::swap(&mut mixture, &mut mixture_prev);

        for v in &mut next {
            *v /= n as f64;
        }
        let delta_q: f64 = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        q = next;
        iterations = step + 1;
        if delta_q < tol {
            converged = true;
            break;
        }
    }

    Ok(EmOutcome {
        prevalence: q,
        iterations,
        converged,
        log_likelihood_trace: trace,
    })
}

/// EM maximum-likelihood estimate of the test priors from the training
/// posteriors of the test sample. Non-convergence within `max_iter` is
/// flagged, not an error; the last iterate is returned.
pub fn em_ml_estimate(
    model: &Arc<dyn PosteriorModel>,
    test: &UnlabeledDataset,
    init: &PrevalenceVector,
    max_iter: usize,
    tol: f64,
) -> Result<EstimateReport> {
    if init.len() != model.class_count() {
        return Err(Error::InvalidInput(
            "initializer and posterior model disagree on the class count".into(),
        ));
    }
    let table = model.posterior_table(test.features())?;
    let outcome = em_fixed_point(
        &table,
        model.train_priors().probs(),
        init.probs(),
        max_iter,
        tol,
    )?;
    let projection = make_prevalence(&outcome.prevalence)?;
    Ok(EstimateReport {
        method: Method::EmMaxLikelihood,
        estimate: projection.prevalence,
        raw_estimate: outcome.prevalence,
        diagnostics: Diagnostics {
            clipped: projection.clipped,
            degenerate_projection: projection.degenerate,
            iterations: Some(outcome.iterations),
            converged: Some(outcome.converged),
            log_likelihood_trace: Some(outcome.log_likelihood_trace),
            ..Diagnostics::default()
        },
        seed: None,
    })
}

//! Linear moment systems for prevalence estimation.
//!
//! Under prior probability shift, any feature-measurable statistic `Z`
//! satisfies a linear identity connecting its test expectation to the
//! unknown class priors. Three empirical forms are built here:
//!
//! * conditional-mean: rows `E_P[Z_i | Y = j]`, right-hand side `E_Q[Z_i]`;
//! * indicator-covariance: rows `cov_P(Z_i, 1{Y=j})`, right-hand side
//!   `E_Q[Z_i] - E_P[Z_i]`;
//! * posterior-covariance: same with the training posteriors in place of
//!   the label indicators.
//!
//! Both covariance forms annihilate the all-ones vector, so their full
//! matrices have rank at most `l - 1` and must be solved through the
//! reduced system that drops one class.

use crate::classifier::HardClassifier;
use crate::dataset::{FeatureMatrix, LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::posterior::PosteriorModel;
use crate::prevalence::{empirical_priors, make_prevalence, PrevalenceVector};
use crate::report::{Diagnostics, EstimateReport, Method};
use crate::solver::{self, ConstraintMode, DEFAULT_CONDITION_THRESHOLD};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Which identity generated the system matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemForm {
    ConditionalMean,
    IndicatorCovariance,
    PosteriorCovariance,
}

/// Whether covariance rows pair the statistics with label indicators or
/// with the training posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceTarget {
    Indicators,
    Posteriors,
}

type StatFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One named feature-measurable statistic.
#[derive(Clone)]
pub struct Statistic {
    name: String,
    eval: StatFn,
}

impl Statistic {
    pub fn new<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// An ordered bundle of statistics evaluated on both samples.
#[derive(Clone)]
pub struct StatisticProfile {
    stats: Vec<Statistic>,
}

impl StatisticProfile {
    pub fn new(stats: Vec<Statistic>) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::InvalidInput("at least one statistic is required".into()));
        }
        Ok(Self { stats })
    }

    /// One indicator statistic per class of a hard classifier.
    pub fn from_classifier(classifier: &HardClassifier) -> Self {
        let stats = (1..=classifier.class_count())
            .map(|label| {
                let indicator = classifier.indicator(label);
                Statistic::new(format!("indicator_{label}"), move |x| {
                    if indicator(x) {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Self { stats }
    }

    /// One posterior statistic per class of a posterior model.
    pub fn from_posterior(model: Arc<dyn PosteriorModel>) -> Self {
        Self::from_posterior_classes(model.clone(), &(1..=model.class_count()).collect::<Vec<_>>())
    }

    /// Posterior statistics for a chosen subset of 1-based class labels.
    pub fn from_posterior_classes(model: Arc<dyn PosteriorModel>, labels: &[usize]) -> Self {
        let stats = labels
            .iter()
            .map(|&label| {
                let model = model.clone();
                Statistic::new(format!("posterior_{label}"), move |x| {
                    model.class_posterior(x, label).unwrap_or(f64::NAN)
                })
            })
            .collect();
        Self { stats }
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.stats.iter().map(|s| s.name.clone()).collect()
    }

    /// Evaluates every statistic on every row, returning an `n x r` table.
    /// A non-finite evaluation is rejected naming the statistic and row.
    pub fn evaluate(&self, features: &FeatureMatrix, context: &str) -> Result<FeatureMatrix> {
        let n = features.n_rows();
        let r = self.stats.len();
        let mut data = vec![0.0; n * r];
        for (i, row) in features.rows_iter().enumerate() {
            for (j, stat) in self.stats.iter().enumerate() {
                let v = (stat.eval)(row);
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("statistic `{}` on {context} row {}", stat.name, i + 1),
                    });
                }
                data[i * r + j] = v;
            }
        }
        FeatureMatrix::new(data, n, r)
    }
}

/// An `r x l` linear system whose unknowns are the test class priors
/// (conditional-mean form) or their ratios to the training priors
/// (covariance forms).
#[derive(Debug, Clone)]
pub struct MomentSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub form: SystemForm,
    pub train_priors: PrevalenceVector,
    pub constraint_mode: ConstraintMode,
    pub statistic_names: Vec<String>,
}

impl MomentSystem {
    pub fn class_count(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn equation_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn with_constraint_mode(mut self, mode: ConstraintMode) -> Self {
        self.constraint_mode = mode;
        self
    }
}

/// Singular-value diagnostics of a system matrix.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub numerical_rank: usize,
    /// Descending singular values.
    pub singular_values: Vec<f64>,
    /// `max |(A v)_i|` for the all-ones vector `v`.
    pub kernel_witness_residual: f64,
}

/// Reduced `(l-1) x (l-1)` covariance system with one class dropped.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// Covariance matrix over the kept classes.
    pub matrix: DMatrix<f64>,
    /// Mean shifts `E_Q[f_i] - E_P[f_i]`.
    pub shift: DVector<f64>,
    pub condition_number: f64,
    /// `C^{-1} shift`; present only when the matrix passed the
    /// invertibility gate.
    pub solution: Option<DVector<f64>>,
    /// 1-based label of the dropped class.
    pub dropped_class: usize,
    pub rank_report: RankReport,
}

fn column_means(table: &FeatureMatrix) -> Vec<f64> {
    (0..table.n_cols()).map(|c| table.column_mean(c)).collect()
}

/// Builds the conditional-mean system: `A[i][j] = mean of Z_i over training
/// rows of class j`, `b[i] = mean of Z_i over the test sample`.
pub fn build_conditional_mean_system(
    stats: &StatisticProfile,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
) -> Result<MomentSystem> {
    let r = stats.len();
    let l = train.class_count();
    let train_eval = stats.evaluate(train.features(), "training")?;
    let test_eval = stats.evaluate(test.features(), "test")?;

    let counts = train.class_counts();
    let mut sums = vec![0.0; r * l];
    for (row, &label) in train_eval.rows_iter().zip(train.labels()) {
        let j = label - 1;
        for i in 0..r {
            sums[i * l + j] += row[i];
        }
    }
    let mut matrix = DMatrix::zeros(r, l);
    for i in 0..r {
        for j in 0..l {
            matrix[(i, j)] = sums[i * l + j] / counts[j] as f64;
        }
    }
    let rhs = DVector::from_iterator(r, column_means(&test_eval));
    Ok(MomentSystem {
        matrix,
        rhs,
        form: SystemForm::ConditionalMean,
        train_priors: empirical_priors(train),
        constraint_mode: ConstraintMode::default(),
        statistic_names: stats.names(),
    })
}

fn covariance_columns(
    train: &LabeledDataset,
    target: CovarianceTarget,
    posterior: Option<&dyn PosteriorModel>,
) -> Result<FeatureMatrix> {
    match target {
        CovarianceTarget::Indicators => {
            let n = train.len();
            let l = train.class_count();
            let mut data = vec![0.0; n * l];
            for (i, &label) in train.labels().iter().enumerate() {
                data[i * l + (label - 1)] = 1.0;
            }
            FeatureMatrix::new(data, n, l)
        }
        CovarianceTarget::Posteriors => {
            let model = posterior.ok_or(Error::MissingPosterior)?;
            model.posterior_table(train.features())
        }
    }
}

/// Empirical covariance (population `1/n` normalization, centered two-pass)
/// between the columns of two equally long tables.
fn covariance_matrix(left: &FeatureMatrix, right: &FeatureMatrix) -> DMatrix<f64> {
    let n = left.n_rows();
    let r = left.n_cols();
    let c = right.n_cols();
    let left_means = column_means(left);
    let right_means = column_means(right);
    let mut cov = DMatrix::zeros(r, c);
    for k in 0..n {
        let lrow = left.row(k);
        let rrow = right.row(k);
        for i in 0..r {
            let dl = lrow[i] - left_means[i];
            for j in 0..c {
                cov[(i, j)] += dl * (rrow[j] - right_means[j]);
            }
        }
    }
    cov / n as f64
}

/// Builds a covariance-form system: `A[i][j] = cov_P(Z_i, W_j)` with `W`
/// either the class indicators or the training posteriors, and
/// `b[i] = E_Q[Z_i] - E_P[Z_i]`. The unknowns of the underlying identity
/// are the ratios `q_y / p_y`.
pub fn build_covariance_system(
    stats: &StatisticProfile,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
    target: CovarianceTarget,
    posterior: Option<&dyn PosteriorModel>,
) -> Result<MomentSystem> {
    let train_eval = stats.evaluate(train.features(), "training")?;
    let test_eval = stats.evaluate(test.features(), "test")?;
    let targets = covariance_columns(train, target, posterior)?;

    let matrix = covariance_matrix(&train_eval, &targets);
    let train_means = column_means(&train_eval);
    let test_means = column_means(&test_eval);
    let rhs = DVector::from_iterator(
        stats.len(),
        test_means.iter().zip(&train_means).map(|(q, p)| q - p),
    );
    Ok(MomentSystem {
        matrix,
        rhs,
        form: match target {
            CovarianceTarget::Indicators => SystemForm::IndicatorCovariance,
            CovarianceTarget::Posteriors => SystemForm::PosteriorCovariance,
        },
        train_priors: empirical_priors(train),
        constraint_mode: ConstraintMode::default(),
        statistic_names: stats.names(),
    })
}

/// Numerical rank of the system matrix at a relative singular-value
/// threshold, plus the all-ones kernel witness.
pub fn rank_diagnostic(system: &MomentSystem, relative_tolerance: f64) -> RankReport {
    solver::rank_report_of(&system.matrix, relative_tolerance)
}

/// Solves a conditional-mean system for the test priors by constrained
/// least squares (sum-to-one equality, nonnegativity bounds).
///
/// Covariance-form systems are rejected: their full matrices are
/// structurally rank-deficient and must go through [`solve_reduced`].
pub fn solve_full_system(system: &MomentSystem) -> Result<EstimateReport> {
    if system.form != SystemForm::ConditionalMean {
        return Err(Error::InvalidInput(
            "covariance-form systems are rank-deficient at full size; use solve_reduced".into(),
        ));
    }
    let solution = solver::solve_simplex_ls(
        &system.matrix,
        &system.rhs,
        system.constraint_mode,
        DEFAULT_CONDITION_THRESHOLD,
    )?;
    let estimate = PrevalenceVector::new(solution.solution.clone())?;
    Ok(EstimateReport {
        method: Method::LinearSystem,
        estimate,
        raw_estimate: solution.solution,
        diagnostics: Diagnostics {
            condition_number: Some(solution.condition_number),
            clipped: false,
            degenerate_projection: false,
            iterations: None,
            converged: None,
            rank_report: Some(solution.rank_report),
            active_bounds: solution.active_bounds,
            log_likelihood_trace: None,
        },
        seed: None,
    })
}

/// Options for the reduced covariance solve.
#[derive(Debug, Clone)]
pub struct ReducedOptions {
    /// 1-based label of the class to drop; defaults to the last class.
    pub dropped_class: Option<usize>,
    pub condition_threshold: f64,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        Self {
            dropped_class: None,
            condition_threshold: DEFAULT_CONDITION_THRESHOLD,
        }
    }
}

/// Builds the reduced system `C s = z` over the kept classes without
/// solving it. `stats` must provide exactly `l - 1` statistics.
pub fn build_reduced_system(
    stats: &StatisticProfile,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
    target: CovarianceTarget,
    posterior: Option<&dyn PosteriorModel>,
    options: &ReducedOptions,
) -> Result<ReducedSystem> {
    let l = train.class_count();
    if stats.len() != l - 1 {
        return Err(Error::InvalidInput(format!(
            "the reduced system needs {} statistics for {l} classes, got {}",
            l - 1,
            stats.len()
        )));
    }
    let dropped = options.dropped_class.unwrap_or(l);
    if dropped == 0 || dropped > l {
        return Err(Error::InvalidInput(format!(
            "dropped class {dropped} is outside 1..={l}"
        )));
    }
    let kept: Vec<usize> = (1..=l).filter(|&y| y != dropped).collect();

    let train_eval = stats.evaluate(train.features(), "training")?;
    let test_eval = stats.evaluate(test.features(), "test")?;
    let targets_full = covariance_columns(train, target, posterior)?;
    let full_cov = covariance_matrix(&train_eval, &targets_full);
    let mut matrix = DMatrix::zeros(l - 1, l - 1);
    for (j, &label) in kept.iter().enumerate() {
        for i in 0..l - 1 {
            matrix[(i, j)] = full_cov[(i, label - 1)];
        }
    }

    let train_means = column_means(&train_eval);
    let test_means = column_means(&test_eval);
    let shift = DVector::from_iterator(
        l - 1,
        test_means.iter().zip(&train_means).map(|(q, p)| q - p),
    );

    let rank_report = solver::rank_report_of(&matrix, 1.0 / options.condition_threshold);
    let sigma = &rank_report.singular_values;
    let condition_number = if sigma.last().copied().unwrap_or(0.0) > 0.0 {
        sigma[0] / sigma[sigma.len() - 1]
    } else {
        f64::INFINITY
    };

    let solution = if rank_report.numerical_rank == l - 1 {
        matrix.clone().lu().solve(&shift)
    } else {
        None
    };

    Ok(ReducedSystem {
        matrix,
        shift,
        condition_number,
        solution,
        dropped_class: dropped,
        rank_report,
    })
}

/// Solves the reduced covariance system and recovers all `l` priors:
/// for kept classes `q_y = p_y (s_y + 1 - sum_i p_i s_i)` and for the
/// dropped class `q_d = p_d (1 - sum_i p_i s_i)`, with `p` the empirical
/// training priors. The recovered vector is projected onto the simplex.
pub fn solve_reduced(
    stats: &StatisticProfile,
    train: &LabeledDataset,
    test: &UnlabeledDataset,
    target: CovarianceTarget,
    posterior: Option<&dyn PosteriorModel>,
    options: &ReducedOptions,
) -> Result<EstimateReport> {
    let reduced = build_reduced_system(stats, train, test, target, posterior, options)?;
    let solution = match (&reduced.solution, reduced.condition_number) {
        (Some(s), cond) if cond <= options.condition_threshold => s.clone(),
        _ => {
            return Err(Error::IllConditioned {
                condition: reduced.condition_number,
                threshold: options.condition_threshold,
                report: reduced.rank_report,
            });
        }
    };

    let l = train.class_count();
    let priors = empirical_priors(train);
    let kept: Vec<usize> = (1..=l).filter(|&y| y != reduced.dropped_class).collect();
    let mut weighted_sum = 0.0;
    for (i, &label) in kept.iter().enumerate() {
        weighted_sum += priors.class_prob(label) * solution[i];
    }
    let mut raw = vec![0.0; l];
    for (i, &label) in kept.iter().enumerate() {
        raw[label - 1] = priors.class_prob(label) * (solution[i] + 1.0 - weighted_sum);
    }
    raw[reduced.dropped_class - 1] =
        priors.class_prob(reduced.dropped_class) * (1.0 - weighted_sum);

    let projection = make_prevalence(&raw)?;
    Ok(EstimateReport {
        method: Method::LinearSystem,
        estimate: projection.prevalence,
        raw_estimate: raw,
        diagnostics: Diagnostics {
            condition_number: Some(reduced.condition_number),
            clipped: projection.clipped,
            degenerate_projection: projection.degenerate,
            iterations: None,
            converged: None,
            rank_report: Some(reduced.rank_report),
            active_bounds: Vec::new(),
            log_likelihood_trace: None,
        },
        seed: None,
    })
}

//! Error type shared across the crate.

use crate::moments::RankReport;
use thiserror::Error;

/// Errors raised by dataset construction, system building and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("class {class} does not occur in the training data (classes 1..={class_count})")]
    MissingClass { class: usize, class_count: usize },

    #[error("a posterior model is required when the covariance target is the posteriors")]
    MissingPosterior,

    #[error(
        "design matrix is numerically rank-deficient: rank {} < {needed}",
        report.numerical_rank
    )]
    RankDeficient { needed: usize, report: RankReport },

    #[error("matrix condition number {condition:.3e} exceeds invertibility threshold {threshold:.3e}")]
    IllConditioned {
        condition: f64,
        threshold: f64,
        report: RankReport,
    },

    #[error("zero denominator in {method} estimate: class-conditional rates coincide")]
    ZeroDenominator { method: &'static str },

    #[error(
        "training posterior variance {variance:.3e} is below {floor:.3e}: posterior is uninformative"
    )]
    DegenerateVariance { variance: f64, floor: f64 },

    #[error("quadrature failed to reach the requested tolerance after {subdivisions} subdivisions")]
    QuadratureFailure { subdivisions: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Rank report attached to the error, when the failure carries one.
    pub fn rank_report(&self) -> Option<&RankReport> {
        match self {
            Error::RankDeficient { report, .. } | Error::IllConditioned { report, .. } => {
                Some(report)
            }
            _ => None,
        }
    }
}

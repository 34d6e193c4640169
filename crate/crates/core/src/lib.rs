//! Estimation of test-set class prior probabilities (quantification) under
//! prior probability shift.
//!
//! The crate provides the family of linear-equation estimators — Adjusted
//! Count, Friedman's method (posterior-threshold and cost-sensitive),
//! DeBias, PAC/GPAC, a multi-class covariance-inversion estimator — and an
//! EM maximum-likelihood baseline, all behind a uniform reporting
//! interface. A companion analytic laboratory for the equal-variance
//! binormal model computes asymptotic variances of the competing
//! estimators and validates them by Monte Carlo.

pub mod binormal;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod logistic;
pub mod moments;
pub mod posterior;
pub mod prevalence;
pub mod quad;
pub mod quantify;
pub mod report;
pub mod sampling;
pub mod solver;

pub use classifier::{ClassifierMode, HardClassifier};
pub use dataset::{FeatureMatrix, LabeledDataset, UnlabeledDataset};
pub use error::{Error, Result};
pub use posterior::{FnPosterior, PosteriorModel};
pub use prevalence::{empirical_priors, make_prevalence, PrevalenceVector, Projection};
pub use report::{Diagnostics, EstimateReport, Method};
pub use sampling::{sample_prior_shift, DiscreteSampler, FeatureSampler, NormalSampler, ShiftedSample};

//! Uniform estimator output: the projected prevalence estimate together with
//! the raw pre-projection vector and solver diagnostics.

use crate::moments::RankReport;
use crate::prevalence::PrevalenceVector;
use std::fmt;
use std::str::FromStr;

/// Named estimation methods exposed by the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    AdjustedCount,
    Friedman,
    FriedmanCostSensitive,
    DeBias,
    Pac,
    Gpac,
    CovarianceDeBias,
    EmMaxLikelihood,
    /// Generic constrained linear-system solve not tied to a named method.
    LinearSystem,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::AdjustedCount => "ac",
            Method::Friedman => "friedman",
            Method::FriedmanCostSensitive => "friedman-cs",
            Method::DeBias => "debias",
            Method::Pac => "pac",
            Method::Gpac => "gpac",
            Method::CovarianceDeBias => "cov-debias",
            Method::EmMaxLikelihood => "em",
            Method::LinearSystem => "linear-system",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ac" => Ok(Method::AdjustedCount),
            "friedman" => Ok(Method::Friedman),
            "friedman-cs" => Ok(Method::FriedmanCostSensitive),
            "debias" => Ok(Method::DeBias),
            "pac" => Ok(Method::Pac),
            "gpac" => Ok(Method::Gpac),
            "cov-debias" => Ok(Method::CovarianceDeBias),
            "em" => Ok(Method::EmMaxLikelihood),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Numerical context recorded alongside an estimate.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub condition_number: Option<f64>,
    /// Whether the raw estimate left [0, 1] and was clipped.
    pub clipped: bool,
    /// Whether the projection degenerated to the uniform fallback.
    pub degenerate_projection: bool,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub rank_report: Option<RankReport>,
    /// Zero-based coordinates pinned at the lower bound by the solver.
    pub active_bounds: Vec<usize>,
    /// Test log-likelihood per EM iterate, up to an additive constant.
    pub log_likelihood_trace: Option<Vec<f64>>,
}

/// Result of running one estimator on one train/test pair.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub method: Method,
    pub estimate: PrevalenceVector,
    /// Estimate before clipping and renormalization, recorded unmodified.
    pub raw_estimate: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub seed: Option<u64>,
}

impl EstimateReport {
    /// Rebrands the report with the user-facing method name.
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }
}

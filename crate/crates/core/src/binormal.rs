//! Analytic laboratory for the equal-variance univariate binormal model:
//! exact posteriors, asymptotic variances of the maximum-likelihood,
//! Friedman and DeBias estimators, the variance sweep over the test prior,
//! and a Monte Carlo validator of the central-limit claims.
//!
//! The setting is semi-asymptotic: every training-distribution quantity is
//! evaluated analytically, only the finite test sample contributes noise.

use crate::classifier::{ClassifierMode, HardClassifier};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::posterior::FnPosterior;
use crate::prevalence::PrevalenceVector;
use crate::quad::integrate;
use crate::quantify::em_fixed_point;
use crate::sampling::{sample_mixture_with_rng, NormalSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc;
use std::fmt;
use std::str::FromStr;

/// Internal quadrature target; well below the documented 1e-8 guarantee so
/// that analytic identities (no-shift equality of the ML and DeBias
/// variances) survive with nanodigit slack.
pub const QUAD_REL_TOL: f64 = 1e-12;

const QUAD_RANGE_SIGMAS: f64 = 10.0;

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// The equal-variance two-Gaussian generative model: class-conditional
/// densities `N(mu1, sigma^2)` and `N(mu2, sigma^2)` with `mu2 < mu1`, and
/// a training prior `p1` for class 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinormalSpec {
    mu1: f64,
    mu2: f64,
    sigma: f64,
    p1: f64,
}

impl Default for BinormalSpec {
    fn default() -> Self {
        Self {
            mu1: 1.5,
            mu2: 0.0,
            sigma: 1.0,
            p1: 0.15,
        }
    }
}

impl BinormalSpec {
    pub fn new(mu1: f64, mu2: f64, sigma: f64, p1: f64) -> Result<Self> {
        if !(mu1.is_finite() && mu2.is_finite() && sigma.is_finite() && p1.is_finite()) {
            return Err(Error::NonFinite {
                context: "binormal specification".into(),
            });
        }
        if mu2 >= mu1 {
            return Err(Error::InvalidInput(
                "the class-1 mean must exceed the class-2 mean".into(),
            ));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        if !(0.0 < p1 && p1 < 1.0) {
            return Err(Error::InvalidInput("p1 must lie strictly inside (0, 1)".into()));
        }
        Ok(Self { mu1, mu2, sigma, p1 })
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn train_priors(&self) -> PrevalenceVector {
        PrevalenceVector::binary(self.p1).expect("p1 is interior")
    }

    /// Class-conditional density `g_1` or `g_2`.
    pub fn class_density(&self, label: usize, x: f64) -> f64 {
        match label {
            1 => normal_pdf(x, self.mu1, self.sigma),
            2 => normal_pdf(x, self.mu2, self.sigma),
            _ => panic!("binormal model has classes 1 and 2"),
        }
    }

    /// Training mixture density.
    pub fn train_density(&self, x: f64) -> f64 {
        self.p1 * self.class_density(1, x) + (1.0 - self.p1) * self.class_density(2, x)
    }

    /// Test mixture density under test prior `q1`.
    pub fn test_density(&self, q1: f64, x: f64) -> f64 {
        q1 * self.class_density(1, x) + (1.0 - q1) * self.class_density(2, x)
    }

    /// Exact training posterior of class 1.
    pub fn posterior_exact(&self, x: f64) -> f64 {
        let num = self.p1 * self.class_density(1, x);
        num / (num + (1.0 - self.p1) * self.class_density(2, x))
    }

    /// Density-comparison threshold `(mu1 + mu2) / 2`; with equal variances,
    /// the posterior of class 1 exceeds `p1` exactly above this point, for
    /// every value of `p1`.
    pub fn threshold(&self) -> f64 {
        0.5 * (self.mu1 + self.mu2)
    }

    /// `P[X > threshold | Y = label]`, a Gaussian tail probability.
    pub fn rate_above_threshold(&self, label: usize) -> f64 {
        let mean = match label {
            1 => self.mu1,
            2 => self.mu2,
            _ => panic!("binormal model has classes 1 and 2"),
        };
        normal_cdf(mean - self.threshold(), 0.0, self.sigma)
    }

    /// Oracle posterior model carrying the training priors.
    pub fn oracle_posterior(&self) -> FnPosterior {
        let spec = *self;
        FnPosterior::new(self.train_priors(), move |x, out| {
            let p = spec.posterior_exact(x[0]);
            out[0] = p;
            out[1] = 1.0 - p;
        })
    }

    /// The posterior-threshold classifier in its density-comparison form
    /// `x > (mu1 + mu2) / 2`, which never reads `p1`.
    pub fn friedman_hard_classifier(&self) -> HardClassifier {
        let threshold = self.threshold();
        HardClassifier::binary(ClassifierMode::FriedmanThreshold, move |x: &[f64]| {
            x[0] > threshold
        })
    }

    /// Class-conditional samplers for synthetic data generation.
    pub fn class_samplers(&self) -> Result<(NormalSampler, NormalSampler)> {
        Ok((
            NormalSampler::new(self.mu1, self.sigma)?,
            NormalSampler::new(self.mu2, self.sigma)?,
        ))
    }

    fn quad_bounds(&self) -> (f64, f64) {
        (
            self.mu2 - QUAD_RANGE_SIGMAS * self.sigma,
            self.mu1 + QUAD_RANGE_SIGMAS * self.sigma,
        )
    }

    fn check_q1(&self, q1: f64) -> Result<()> {
        if !(q1.is_finite() && 0.0 < q1 && q1 < 1.0) {
            return Err(Error::InvalidInput(format!(
                "test prior q1 = {q1} must lie strictly inside (0, 1)"
            )));
        }
        Ok(())
    }

    /// Mean and variance of the training posterior under the `q1`-mixture,
    /// by adaptive quadrature.
    fn posterior_moments_under(&self, q1: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.quad_bounds();
        let mean = integrate(
            |x| self.posterior_exact(x) * self.test_density(q1, x),
            lo,
            hi,
            QUAD_REL_TOL,
            0.0,
        )?
        .value;
        let var = integrate(
            |x| {
                let d = self.posterior_exact(x) - mean;
                d * d * self.test_density(q1, x)
            },
            lo,
            hi,
            QUAD_REL_TOL,
            0.0,
        )?
        .value;
        Ok((mean, var))
    }
}

/// Asymptotic variance of the maximum-likelihood estimator of `q1`:
/// the inverse Fisher information `E_Q[((g1 - g2) / g_Q)^2]^{-1}`,
/// evaluated by adaptive quadrature. Depends on `q1` only, never on `p1`.
pub fn sigma2_ml(spec: &BinormalSpec, q1: f64) -> Result<f64> {
    spec.check_q1(q1)?;
    let (lo, hi) = spec.quad_bounds();
    let info = integrate(
        |x| {
            let diff = spec.class_density(1, x) - spec.class_density(2, x);
            diff * diff / spec.test_density(q1, x)
        },
        lo,
        hi,
        QUAD_REL_TOL,
        0.0,
    )?
    .value;
    Ok(1.0 / info)
}

/// Asymptotic variance of the Friedman estimator in closed form:
/// `E_Q[f](1 - E_Q[f]) / (E_P[f|1] - E_P[f|2])^2` with `f` the threshold
/// classifier, whose class-conditional rates are Gaussian tails.
pub fn sigma2_friedman(spec: &BinormalSpec, q1: f64) -> Result<f64> {
    spec.check_q1(q1)?;
    let rate1 = spec.rate_above_threshold(1);
    let rate2 = spec.rate_above_threshold(2);
    let mean_q = q1 * rate1 + (1.0 - q1) * rate2;
    let gap = rate1 - rate2;
    Ok(mean_q * (1.0 - mean_q) / (gap * gap))
}

/// Asymptotic variance of the DeBias estimator:
/// `(p1 (1 - p1) / var_P[posterior])^2 * var_Q[posterior]`, both variances
/// by adaptive quadrature.
pub fn sigma2_debias(spec: &BinormalSpec, q1: f64) -> Result<f64> {
    spec.check_q1(q1)?;
    let (_, var_p) = spec.posterior_moments_under(spec.p1)?;
    let (_, var_q) = spec.posterior_moments_under(q1)?;
    let scale = spec.p1 * (1.0 - spec.p1) / var_p;
    Ok(scale * scale * var_q)
}

/// Asymptotic variances of the three estimators on a grid of test priors.
#[derive(Debug, Clone)]
pub struct AsymptoticVarianceCurve {
    pub q1_grid: Vec<f64>,
    pub var_ml: Vec<f64>,
    pub var_fried: Vec<f64>,
    pub var_debias: Vec<f64>,
}

/// The default sweep grid `0.01, 0.02, ..., 0.99`.
pub fn default_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

/// Evaluates all three asymptotic variances on a strictly increasing grid
/// inside `(0, 1)`.
pub fn variance_sweep(spec: &BinormalSpec, grid: &[f64]) -> Result<AsymptoticVarianceCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("the sweep grid must be non-empty".into()));
    }
    for pair in grid.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidInput(
                "the sweep grid must be strictly increasing".into(),
            ));
        }
    }
    let mut var_ml = Vec::with_capacity(grid.len());
    let mut var_fried = Vec::with_capacity(grid.len());
    let mut var_debias = Vec::with_capacity(grid.len());
    for &q1 in grid {
        let ml = sigma2_ml(spec, q1)?;
        let fried = sigma2_friedman(spec, q1)?;
        let debias = sigma2_debias(spec, q1)?;
        for (name, v) in [("ml", ml), ("friedman", fried), ("debias", debias)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "asymptotic {name} variance at q1 = {q1} is not a positive finite number"
                )));
            }
        }
        var_ml.push(ml);
        var_fried.push(fried);
        var_debias.push(debias);
    }
    Ok(AsymptoticVarianceCurve {
        q1_grid: grid.to_vec(),
        var_ml,
        var_fried,
        var_debias,
    })
}

/// Estimator driven by the Monte Carlo harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonteCarloMethod {
    Friedman,
    DeBias,
    Pac,
    EmMl,
}

impl MonteCarloMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MonteCarloMethod::Friedman => "friedman",
            MonteCarloMethod::DeBias => "debias",
            MonteCarloMethod::Pac => "pac",
            MonteCarloMethod::EmMl => "em",
        }
    }

    /// The analytic asymptotic variance this method converges to. The PAC
    /// estimator shares the DeBias variance because every training quantity
    /// is deterministic here, and EM realizes the maximum-likelihood bound.
    pub fn analytic_sigma2(self, spec: &BinormalSpec, q1: f64) -> Result<f64> {
        match self {
            MonteCarloMethod::Friedman => sigma2_friedman(spec, q1),
            MonteCarloMethod::DeBias | MonteCarloMethod::Pac => sigma2_debias(spec, q1),
            MonteCarloMethod::EmMl => sigma2_ml(spec, q1),
        }
    }
}

impl fmt::Display for MonteCarloMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MonteCarloMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "friedman" => Ok(MonteCarloMethod::Friedman),
            "debias" => Ok(MonteCarloMethod::DeBias),
            "pac" => Ok(MonteCarloMethod::Pac),
            "em" | "em-ml" => Ok(MonteCarloMethod::EmMl),
            other => Err(format!("unknown simulation method `{other}`")),
        }
    }
}

/// Replication summary of the Monte Carlo run.
#[derive(Debug, Clone)]
pub struct CltSummary {
    pub method: MonteCarloMethod,
    pub q1: f64,
    pub sample_size: usize,
    pub replications: usize,
    pub seed: u64,
    pub mean_estimate: f64,
    /// `n * sample variance` across replications; absent for a single
    /// replication.
    pub scaled_variance: Option<f64>,
}

fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Draws `replications` independent test samples of size `n` under the
/// `q1`-mixture and runs the chosen estimator with exact analytic training
/// quantities. Replication `i` uses stream `i` of the seeded counter-based
/// generator, so results are bit-identical for any parallelism degree.
pub fn monte_carlo_clt(
    spec: &BinormalSpec,
    q1: f64,
    n: usize,
    replications: usize,
    method: MonteCarloMethod,
    seed: u64,
) -> Result<CltSummary> {
    spec.check_q1(q1)?;
    if n == 0 || replications == 0 {
        return Err(Error::InvalidInput(
            "the Monte Carlo run needs n >= 1 and at least one replication".into(),
        ));
    }
    let (lo, hi) = spec.quad_bounds();
    let q = PrevalenceVector::binary(q1)?;
    let (sampler1, sampler2) = spec.class_samplers()?;

    // Every training quantity is precomputed analytically.
    enum Plan {
        Friedman { threshold: f64, rate1: f64, rate2: f64 },
        DeBias { p1: f64, var_p: f64 },
        Pac { rate1: f64, rate2: f64 },
        EmMl { p1: f64 },
    }
    let plan = match method {
        MonteCarloMethod::Friedman => Plan::Friedman {
            threshold: spec.threshold(),
            rate1: spec.rate_above_threshold(1),
            rate2: spec.rate_above_threshold(2),
        },
        MonteCarloMethod::DeBias => {
            let (_, var_p) = spec.posterior_moments_under(spec.p1)?;
            Plan::DeBias { p1: spec.p1, var_p }
        }
        MonteCarloMethod::Pac => {
            let rate1 = integrate(
                |x| spec.posterior_exact(x) * spec.class_density(1, x),
                lo,
                hi,
                QUAD_REL_TOL,
                0.0,
            )?
            .value;
            let rate2 = integrate(
                |x| spec.posterior_exact(x) * spec.class_density(2, x),
                lo,
                hi,
                QUAD_REL_TOL,
                0.0,
            )?
            .value;
            Plan::Pac { rate1, rate2 }
        }
        MonteCarloMethod::EmMl => Plan::EmMl { p1: spec.p1 },
    };

    let estimates: Vec<Result<f64>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let (features, _) =
                sample_mixture_with_rng(&mut rng, &[&sampler1, &sampler2], &q, n)?;
            let xs = features.as_slice();
            let estimate = match &plan {
                Plan::Friedman { threshold, rate1, rate2 } => {
                    let mean = xs.iter().filter(|&&x| x > *threshold).count() as f64 / n as f64;
                    clamp_unit((mean - rate2) / (rate1 - rate2))
                }
                Plan::DeBias { p1, var_p } => {
                    let mean = xs.iter().map(|&x| spec.posterior_exact(x)).sum::<f64>()
                        / n as f64;
                    clamp_unit(p1 * (1.0 - p1) / var_p * (mean - p1) + p1)
                }
                Plan::Pac { rate1, rate2 } => {
                    let mean = xs.iter().map(|&x| spec.posterior_exact(x)).sum::<f64>()
                        / n as f64;
                    clamp_unit((mean - rate2) / (rate1 - rate2))
                }
                Plan::EmMl { p1 } => {
                    let mut table = vec![0.0; 2 * n];
                    for (i, &x) in xs.iter().enumerate() {
                        let post = spec.posterior_exact(x);
                        table[2 * i] = post;
                        table[2 * i + 1] = 1.0 - post;
                    }
                    let table = FeatureMatrix::new(table, n, 2)?;
                    let priors = [*p1, 1.0 - *p1];
                    let outcome =
                        em_fixed_point(&table, &priors, &priors, EM_MAX_ITER, EM_TOL)?;
                    clamp_unit(outcome.prevalence[0])
                }
            };
            Ok(estimate)
        })
        .collect();

    // Fixed-order reduction over the replicate estimates.
    let mut values = Vec::with_capacity(replications);
    for e in estimates {
        values.push(e?);
    }
    let mean = values.iter().sum::<f64>() / replications as f64;
    let scaled_variance = if replications >= 2 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Some(n as f64 * ss / (replications - 1) as f64)
    } else {
        None
    };

    Ok(CltSummary {
        method,
        q1,
        sample_size: n,
        replications,
        seed,
        mean_estimate: mean,
        scaled_variance,
    })
}

const EM_TOL: f64 = 1e-8;
const EM_MAX_ITER: usize = 10_000;

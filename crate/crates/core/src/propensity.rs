//! Propensity score estimation: logistic regression, probit sum-of-trees,
//! a supplied column, or the exact Bayes-rule score of a known mixture.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::bart::{BartHyperParams, BartSampler, Design, ResponseKind};
use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{self, std_normal};

/// Scores are clipped to `[PS_EPS, 1 - PS_EPS]`.
pub const PS_EPS: f64 = 1e-6;

pub fn clip_ps(p: f64) -> f64 {
    p.clamp(PS_EPS, 1.0 - PS_EPS)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateLaw {
    Bernoulli(f64),
    Gaussian { mean: f64, variance: f64 },
}

impl CovariateLaw {
    fn log_density(&self, x: f64) -> f64 {
        match *self {
            CovariateLaw::Bernoulli(p) => {
                if x == 1.0 {
                    p.ln()
                } else if x == 0.0 {
                    (1.0 - p).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            CovariateLaw::Gaussian { mean, variance } => {
                let z = x - mean;
                -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + z * z / variance)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateLaw::Bernoulli(p) => (rng.random::<f64>() < p) as u8 as f64,
            CovariateLaw::Gaussian { mean, variance } => mean + variance.sqrt() * std_normal(rng),
        }
    }
}

/// Two-group generative law with independent covariates within group.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDensitySpec {
    prevalence: f64,
    exposed: Vec<CovariateLaw>,
    unexposed: Vec<CovariateLaw>,
}

impl MixtureDensitySpec {
    pub fn new(prevalence: f64, exposed: Vec<CovariateLaw>, unexposed: Vec<CovariateLaw>) -> Result<Self> {
        if !(prevalence > 0.0 && prevalence < 1.0) {
            return Err(Error::Config(format!("prevalence {prevalence} outside (0, 1)")));
        }
        if exposed.len() != unexposed.len() {
            return Err(Error::Config("group laws must cover the same covariates".into()));
        }
        for law in exposed.iter().chain(&unexposed) {
            match *law {
                CovariateLaw::Bernoulli(p) if !(0.0..=1.0).contains(&p) => {
                    return Err(Error::Config(format!("Bernoulli probability {p} outside [0, 1]")))
                }
                CovariateLaw::Gaussian { variance, .. } if !(variance > 0.0) => {
                    return Err(Error::Config(format!("variance {variance} must be positive")))
                }
                _ => {}
            }
        }
        Ok(Self { prevalence, exposed, unexposed })
    }

    pub fn prevalence(&self) -> f64 {
        self.prevalence
    }

    pub fn p(&self) -> usize {
        self.exposed.len()
    }

    pub fn law(&self, exposed: bool) -> &[CovariateLaw] {
        if exposed {
            &self.exposed
        } else {
            &self.unexposed
        }
    }

    pub fn sample_covariates<R: Rng + ?Sized>(&self, exposed: bool, rng: &mut R) -> Vec<f64> {
        self.law(exposed).iter().map(|l| l.sample(rng)).collect()
    }

    /// P(E=1 | x) by Bayes rule, evaluated in log space and clipped.
    pub fn true_ps(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p() {
            return Err(Error::DesignWidth { expected: self.p(), found: x.len() });
        }
        let l1: f64 = self.exposed.iter().zip(x).map(|(l, &v)| l.log_density(v)).sum::<f64>() + self.prevalence.ln();
        let l0: f64 =
            self.unexposed.iter().zip(x).map(|(l, &v)| l.log_density(v)).sum::<f64>() + (1.0 - self.prevalence).ln();
        if l1 == f64::NEG_INFINITY && l0 == f64::NEG_INFINITY {
            return Err(Error::Config(format!("covariate vector {x:?} has zero density under both groups")));
        }
        Ok(clip_ps(stats::logistic(l1 - l0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropensityModelSpec {
    Logistic,
    BartProbit(BartHyperParams),
    Provided,
    TrueBayesRule(MixtureDensitySpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub max_iterations: usize,
    /// Relative deviance change at which IRLS stops.
    pub tolerance: f64,
    /// Ridge penalty on the slopes; 0 gives the maximum-likelihood fit.
    pub ridge: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-8, ridge: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    /// Intercept first, then one slope per covariate.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Unclipped fitted probabilities.
    pub fitted: Vec<f64>,
    pub iterations: usize,
    pub deviance: f64,
}

fn deviance(y: &[f64], p: &[f64]) -> f64 {
    -2.0 * y
        .iter()
        .zip(p)
        .map(|(&y, &p)| if y == 1.0 { p.max(1e-300).ln() } else { (1.0 - p).max(1e-300).ln() })
        .sum::<f64>()
}

/// Logistic regression of `y` on `columns` (plus intercept) by IRLS.
pub fn fit_logistic(columns: &[Vec<f64>], y: &[f64], opts: &LogisticOptions) -> Result<LogisticFit> {
    let n = y.len();
    let k = columns.len() + 1;
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    for (j, c) in columns.iter().enumerate() {
        if c.len() != n {
            return Err(Error::LengthMismatch { column: format!("covariate {j}"), expected: n, found: c.len() });
        }
    }
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let mut beta = DVector::zeros(k);
    let mut dev_old = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut p = vec![0.5; n];
    let mut info = DMatrix::zeros(k, k);
    while iterations < opts.max_iterations {
        iterations += 1;
        let eta = &x * &beta;
        let mut xtwx = DMatrix::<f64>::zeros(k, k);
        let mut xtwz = DVector::<f64>::zeros(k);
        for i in 0..n {
            let pi = stats::logistic(eta[i]);
            let w = (pi * (1.0 - pi)).max(1e-12);
            let z = eta[i] + (y[i] - pi) / w;
            let row = x.row(i);
            for a in 0..k {
                xtwz[a] += row[a] * w * z;
                for b in a..k {
                    xtwx[(a, b)] += row[a] * w * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                xtwx[(a, b)] = xtwx[(b, a)];
            }
            if a > 0 {
                xtwx[(a, a)] += opts.ridge;
            }
        }
        let Some(chol) = xtwx.clone().cholesky() else {
            return Err(Error::LogisticNonConvergence { iterations });
        };
        beta = chol.solve(&xtwz);
        let eta = &x * &beta;
        p = eta.iter().map(|&v| stats::logistic(v)).collect();
        info = xtwx;
        let dev = deviance(y, &p);
        if (dev - dev_old).abs() / (dev.abs() + 0.1) < opts.tolerance {
            converged = true;
            break;
        }
        dev_old = dev;
    }
    if !converged {
        if opts.ridge > 0.0 {
            warn!("ridge-stabilized logistic fit stopped after {iterations} iterations");
        } else {
            return Err(Error::LogisticNonConvergence { iterations });
        }
    }
    if opts.ridge == 0.0 && p.iter().any(|&v| !(1e-10..=1.0 - 1e-10).contains(&v)) {
        return Err(Error::Separation);
    }
    let cov = info.try_inverse().unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        standard_errors: (0..k).map(|j| cov[(j, j)].sqrt()).collect(),
        deviance: deviance(y, &p),
        fitted: p,
        iterations,
    })
}

fn exposure_response(data: &ObservationalDataset) -> Vec<f64> {
    data.e().iter().map(|&e| e as f64).collect()
}

/// Main-effects logistic propensity score, clipped.
pub fn fit_logistic_ps(data: &ObservationalDataset) -> Result<Vec<f64>> {
    let fit = fit_logistic(data.covariates(), &exposure_response(data), &LogisticOptions::default())?;
    Ok(fit.fitted.into_iter().map(clip_ps).collect())
}

/// As [`fit_logistic_ps`], falling back to a ridge penalty of 1e-6 when the
/// unpenalized fit fails. The flag reports whether the fallback was used.
pub fn fit_logistic_ps_stabilized(data: &ObservationalDataset) -> Result<(Vec<f64>, bool)> {
    match fit_logistic_ps(data) {
        Ok(ps) => Ok((ps, false)),
        Err(Error::LogisticNonConvergence { .. } | Error::Separation) => {
            warn!("logistic propensity fit failed; refitting with ridge penalty 1e-6");
            let opts = LogisticOptions { ridge: 1e-6, ..Default::default() };
            let fit = fit_logistic(data.covariates(), &exposure_response(data), &opts)?;
            Ok((fit.fitted.into_iter().map(clip_ps).collect(), true))
        }
        Err(e) => Err(e),
    }
}

/// Posterior mean of Φ(sum of trees) from a probit ensemble of exposure on
/// the covariates.
pub fn fit_bart_probit_ps<R: Rng + ?Sized>(
    data: &ObservationalDataset,
    hyper: &BartHyperParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let design = Design::from_columns(data.covariates().to_vec())?;
    let mut sampler = BartSampler::new(&design, &exposure_response(data), hyper, ResponseKind::Probit)?;
    let draws = sampler.collect_draws(&design, rng)?;
    let m = draws.len().max(1) as f64;
    let mut mean = vec![0.0; data.n()];
    for draw in &draws {
        for (acc, &g) in mean.iter_mut().zip(draw) {
            *acc += stats::normal_cdf(g) / m;
        }
    }
    Ok(mean.into_iter().map(clip_ps).collect())
}

/// Scores for every unit under `spec`; `seed` feeds the probit sampler.
pub fn estimate_ps(data: &ObservationalDataset, spec: &PropensityModelSpec, seed: u64) -> Result<Vec<f64>> {
    match spec {
        PropensityModelSpec::Logistic => fit_logistic_ps_stabilized(data).map(|(ps, _)| ps),
        PropensityModelSpec::BartProbit(hyper) => {
            fit_bart_probit_ps(data, hyper, &mut rng::stream(seed, rng::tag::PROPENSITY, 0))
        }
        PropensityModelSpec::Provided => match data.provided_ps() {
            Some(ps) => Ok(ps.to_vec()),
            None => Err(Error::MissingColumn("ps".into())),
        },
        PropensityModelSpec::TrueBayesRule(mix) => (0..data.n())
            .map(|i| {
                let x: Vec<f64> = (0..data.p()).map(|j| data.covariate(j)[i]).collect();
                mix.true_ps(&x)
            })
            .collect(),
    }
}

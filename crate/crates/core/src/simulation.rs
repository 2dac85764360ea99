//! Simulated data settings, ground-truth oracles and replication studies.

use std::fmt;
use std::io::Write;

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{ObservationalDataset, OutcomeType};
use crate::error::{Error, Result};
use crate::estimator::{prepare, run_method, BartSplConfig, Method};
use crate::overlap::{assign_regions, screen_interior_gaps, IntervalLength, OverlapParams, TailPolicy};
use crate::propensity::{CovariateLaw, MixtureDensitySpec, PropensityModelSpec};
use crate::rng;
use crate::stats::{self, logistic, std_normal};

/// Overlap settings (fraction of range, b) used with the single-confounder
/// family, from most to least conservative.
pub const S33_OVERLAP: [(f64, usize); 3] = [(0.05, 10), (0.1, 10), (0.15, 3)];

/// (v, w) settings of the single-confounder family, least to most
/// non-overlap.
pub const S33_SETTINGS: [(f64, f64); 3] = [(1.4, 1.96), (0.75, 1.44), (0.0, 1.0)];

/// Noise variance of the single-confounder potential outcomes.
const S33_NOISE_VARIANCE: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    S31A { c: f64 },
    S31B { c: f64 },
    S32 { extra: usize },
    S33A { v: f64, w: f64 },
    S33B { v: f64, w: f64 },
    B2A { c: f64 },
    B2B { c: f64 },
}

impl Family {
    /// Builds a family from its name and the parameters that apply to it.
    pub fn from_name(name: &str, c: f64, v: f64, w: f64, extra: usize) -> Result<Self> {
        Ok(match name.to_ascii_uppercase().as_str() {
            "S31A" => Family::S31A { c },
            "S31B" => Family::S31B { c },
            "S32" => Family::S32 { extra },
            "S33A" => Family::S33A { v, w },
            "S33B" => Family::S33B { v, w },
            "B2A" => Family::B2A { c },
            "B2B" => Family::B2B { c },
            other => return Err(Error::Config(format!("unknown family '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::S31A { .. } => "S31A",
            Family::S31B { .. } => "S31B",
            Family::S32 { .. } => "S32",
            Family::S33A { .. } => "S33A",
            Family::S33B { .. } => "S33B",
            Family::B2A { .. } => "B2A",
            Family::B2B { .. } => "B2B",
        }
    }

    pub fn outcome_type(&self) -> OutcomeType {
        match self {
            Family::B2A { .. } | Family::B2B { .. } => OutcomeType::Binary,
            _ => OutcomeType::Continuous,
        }
    }

    fn single_confounder(&self) -> Option<(f64, f64)> {
        match *self {
            Family::S33A { v, w } | Family::S33B { v, w } => Some((v, w)),
            _ => None,
        }
    }

    /// Group laws of the covariates.
    pub fn mixture(&self) -> Result<MixtureDensitySpec> {
        use CovariateLaw::{Bernoulli, Gaussian};
        let two = |c: f64, variance: f64| {
            MixtureDensitySpec::new(
                0.5,
                vec![Bernoulli(0.5), Gaussian { mean: 2.0 + c, variance }],
                vec![Bernoulli(0.4), Gaussian { mean: 1.0, variance: 1.0 }],
            )
        };
        match *self {
            Family::S31A { c } | Family::B2A { c } => two(c, 1.25 + 0.1 * c),
            Family::S31B { c } | Family::B2B { c } => two(c, 4.0),
            Family::S32 { extra } => {
                let noise = Gaussian { mean: 0.0, variance: 1.0 };
                let mut exposed = vec![Bernoulli(0.45); 5];
                exposed.extend([Gaussian { mean: 2.0, variance: 4.0 }; 5]);
                exposed.extend(std::iter::repeat_n(noise, extra));
                let mut unexposed = vec![Bernoulli(0.4); 5];
                unexposed.extend([Gaussian { mean: 1.3, variance: 1.0 }; 5]);
                unexposed.extend(std::iter::repeat_n(noise, extra));
                MixtureDensitySpec::new(0.5, exposed, unexposed)
            }
            Family::S33A { v, w } | Family::S33B { v, w } => MixtureDensitySpec::new(
                0.5,
                vec![Gaussian { mean: 2.5, variance: 4.0 }],
                vec![Gaussian { mean: v, variance: w }],
            ),
        }
    }

    /// Conditional means (continuous) or probabilities (binary) of
    /// (Y(1), Y(0)) at `x`.
    pub fn potential_means(&self, x: &[f64]) -> (f64, f64) {
        match *self {
            Family::S31A { .. } => {
                let (x1, x2) = (x[0], x[1]);
                (-3.0 * logistic(10.0 * (x2 - 1.0)) + 0.25 * x1 - x1 * x2, -1.5 * x2)
            }
            Family::S31B { .. } => {
                let (x1, x2) = (x[0], x[1]);
                (3.0 * logistic(10.0 * (x2 - 1.0)) + 0.25 * x1 - 0.1 * x1 * x2 + 0.5, 0.2 * x2 + 0.1 * x2 * x2 + 1.0)
            }
            Family::S32 { .. } => {
                let bin: f64 = x[..5].iter().sum();
                let cont: f64 = x[5..10].iter().sum();
                let y0 = 0.5 * bin + 15.0 * logistic(8.0 * x[5] - 1.0) + x[6] + x[7] + x[8] + x[9] - 5.0;
                (bin - 0.5 * cont, y0)
            }
            Family::S33A { .. } => {
                let z = x[0];
                (logistic(z - 1.0), 1.5 + (z + z * z / 2.0) / 20.0)
            }
            Family::S33B { .. } => {
                let z = x[0];
                (logistic(z - 1.0), 1.5 + (z + z * z / 2.0 + z * z * z / 6.0) / 20.0)
            }
            Family::B2A { .. } => {
                let (x1, x2) = (x[0], x[1]);
                (logistic((0.25 * x2).exp() + 0.5 * x1 * x2), logistic(0.2 * x2.powi(3) + 0.25 * x1))
            }
            Family::B2B { .. } => {
                let (x1, x2) = (x[0], x[1]);
                let t = x2 - 2.0;
                (logistic(3.0 * logistic(8.0 * x2 - 1.0) + 0.25 * x1 - 2.0), logistic(0.85 * t + t * t))
            }
        }
    }

    pub fn propensity_spec(&self) -> PropensityModelSpec {
        match self {
            Family::S31B { .. } | Family::B2B { .. } | Family::S32 { .. } => PropensityModelSpec::Logistic,
            _ => PropensityModelSpec::Provided,
        }
    }

    /// Overlap definition used for the family in the studies.
    pub fn default_overlap(&self) -> OverlapParams {
        let a = match self {
            Family::S33A { .. } | Family::S33B { .. } => IntervalLength::Fraction(0.1),
            _ => IntervalLength::Absolute(0.1),
        };
        let b = if self.single_confounder().is_some() { 10 } else { 7 };
        OverlapParams { a, b, interior_gap_max: 10, tails: TailPolicy::RightTail }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Family::S31A { c } | Family::S31B { c } | Family::B2A { c } | Family::B2B { c } => {
                write!(f, "{}(c={c})", self.name())
            }
            Family::S32 { extra } => write!(f, "S32(extra={extra})"),
            Family::S33A { v, w } | Family::S33B { v, w } => write!(f, "{}(v={v},w={w})", self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub family: Family,
    pub n: usize,
}

impl DgpSpec {
    pub fn new(family: Family) -> Self {
        Self { family, n: 500 }
    }

    pub fn exposed(&self) -> usize {
        self.n / 2
    }

    fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::TooFewUnits(self.n));
        }
        if let Some((_, w)) = self.family.single_confounder() {
            if !(w > 0.0) {
                return Err(Error::Config(format!("variance w = {w} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimReplicate {
    pub dataset: ObservationalDataset,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    /// Conditional-mean individual effects (probability differences for
    /// binary outcomes).
    pub effects: Vec<f64>,
}

/// Exposures of the generated units: the first half exposed.
fn exposures(spec: &DgpSpec) -> Vec<u8> {
    (0..spec.n).map(|i| (i < spec.exposed()) as u8).collect()
}

/// The single confounder shared by every replicate drawn under `master`.
pub fn frozen_covariate(spec: &DgpSpec, master: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mix = spec.family.mixture()?;
    let mut r = rng::stream(master, rng::tag::FROZEN_COVARIATE, 0);
    Ok(exposures(spec).iter().map(|&e| mix.law(e == 1)[0].sample(&mut r)).collect())
}

/// One replicate drawn from `seed`. The single-confounder families draw
/// their confounder from `seed` as well; studies use [`generate_replicate`]
/// to keep it fixed.
pub fn generate_dataset(spec: &DgpSpec, seed: u64) -> Result<SimReplicate> {
    let frozen = match spec.family.single_confounder() {
        Some(_) => Some(frozen_covariate(spec, seed)?),
        None => None,
    };
    generate_with(spec, frozen.as_deref(), seed)
}

/// Replicate `index` of a study keyed by `master`.
pub fn generate_replicate(spec: &DgpSpec, frozen: Option<&[f64]>, master: u64, index: u64) -> Result<SimReplicate> {
    generate_with(spec, frozen, rng::derive_seed(master, rng::tag::REPLICATE, index))
}

fn generate_with(spec: &DgpSpec, frozen: Option<&[f64]>, seed: u64) -> Result<SimReplicate> {
    spec.validate()?;
    let family = spec.family;
    let mix = family.mixture()?;
    let e = exposures(spec);
    let mut r = rng::stream(seed, rng::tag::REPLICATE, 0);
    let rows: Vec<Vec<f64>> = match frozen {
        Some(x) => {
            if x.len() != spec.n {
                return Err(Error::LengthMismatch { column: "x1".into(), expected: spec.n, found: x.len() });
            }
            x.iter().map(|&v| vec![v]).collect()
        }
        None => e.iter().map(|&g| mix.sample_covariates(g == 1, &mut r)).collect(),
    };
    let mut y1 = Vec::with_capacity(spec.n);
    let mut y0 = Vec::with_capacity(spec.n);
    let mut effects = Vec::with_capacity(spec.n);
    for row in &rows {
        let (m1, m0) = family.potential_means(row);
        effects.push(m1 - m0);
        match family.outcome_type() {
            OutcomeType::Binary => {
                y1.push((r.random::<f64>() < m1) as u8 as f64);
                y0.push((r.random::<f64>() < m0) as u8 as f64);
            }
            OutcomeType::Continuous if family.single_confounder().is_some() => {
                let sd = S33_NOISE_VARIANCE.sqrt();
                y1.push(m1 + sd * std_normal(&mut r));
                y0.push(m0 + sd * std_normal(&mut r));
            }
            OutcomeType::Continuous => {
                y1.push(m1);
                y0.push(m0);
            }
        }
    }
    let y: Vec<f64> = e.iter().enumerate().map(|(i, &g)| if g == 1 { y1[i] } else { y0[i] }).collect();
    let covariates: Vec<Vec<f64>> = (0..mix.p()).map(|j| rows.iter().map(|row| row[j]).collect()).collect();
    let mut dataset = ObservationalDataset::new(y, e, covariates, family.outcome_type())?;
    match family {
        Family::S31A { .. } | Family::B2A { .. } => {
            let ps = rows.iter().map(|row| mix.true_ps(row)).collect::<Result<Vec<_>>>()?;
            dataset = dataset.with_provided_ps(ps)?;
        }
        Family::S33A { .. } | Family::S33B { .. } => {
            let x = dataset.covariate(0).to_vec();
            dataset = dataset.with_provided_ps(x)?;
        }
        _ => {}
    }
    Ok(SimReplicate { dataset, y1, y0, effects })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleTruth {
    pub value: f64,
    pub se: f64,
}

pub const ORACLE_DRAWS: usize = 10_000_000;

/// Population average effect: exact average over the frozen confounder for
/// the single-confounder families, otherwise a Monte Carlo average over
/// `draws` covariate vectors split evenly between the two group laws.
pub fn oracle_true_ace(spec: &DgpSpec, master: u64, draws: usize) -> Result<OracleTruth> {
    let family = spec.family;
    if family.single_confounder().is_some() {
        let x = frozen_covariate(spec, master)?;
        let value = stats::mean(&x.iter().map(|&v| {
            let (m1, m0) = family.potential_means(&[v]);
            m1 - m0
        }).collect::<Vec<_>>());
        return Ok(OracleTruth { value, se: 0.0 });
    }
    let mix = family.mixture()?;
    // Only the covariates entering the outcome model need drawing.
    let used = match family {
        Family::S32 { .. } => 10,
        _ => mix.p(),
    };
    const CHUNK: usize = 100_000;
    let per_group = draws.div_ceil(2).max(2);
    let chunks = per_group.div_ceil(CHUNK);
    let group_moments = |exposed: bool| -> (f64, f64) {
        let laws = &mix.law(exposed)[..used];
        let parts: Vec<(f64, f64, usize)> = (0..chunks)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::stream(master, rng::tag::ORACLE, 2 * k as u64 + exposed as u64);
                let count = CHUNK.min(per_group - k * CHUNK);
                let mut x = vec![0.0; mix.p()];
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..count {
                    for (xj, law) in x.iter_mut().zip(laws) {
                        *xj = law.sample(&mut r);
                    }
                    let (m1, m0) = family.potential_means(&x);
                    let d = m1 - m0;
                    s += d;
                    s2 += d * d;
                }
                (s, s2, count)
            })
            .collect();
        let (s, s2, n) = parts.iter().fold((0.0, 0.0, 0usize), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
        let mean = s / n as f64;
        let var = (s2 / n as f64 - mean * mean) * n as f64 / (n as f64 - 1.0);
        (mean, var / n as f64)
    };
    let (m1, v1) = group_moments(true);
    let (m0, v0) = group_moments(false);
    let p = mix.prevalence();
    Ok(OracleTruth { value: p * m1 + (1.0 - p) * m0, se: (p * p * v1 + (1.0 - p) * (1.0 - p) * v0).sqrt() })
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    /// Estimator settings; `seed` is the study's master seed and the overlap
    /// and propensity settings are replaced by the family's unless
    /// `overlap` is given.
    pub estimator: BartSplConfig,
    pub overlap: Option<OverlapParams>,
    /// Generation stops after `max_attempt_factor * n_reps` attempts.
    pub max_attempt_factor: usize,
    pub oracle_draws: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { estimator: BartSplConfig::default(), overlap: None, max_attempt_factor: 5, oracle_draws: ORACLE_DRAWS }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub attempt: u64,
    pub method: String,
    pub point: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub covered: bool,
    pub pi: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub method: String,
    pub abs_bias: f64,
    pub pct_bias: f64,
    pub coverage: f64,
    pub mse: f64,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub family: String,
    pub truth: OracleTruth,
    pub attempted: usize,
    pub accepted: usize,
    pub mean_pi: f64,
    pub metrics: Vec<MethodMetrics>,
    pub replicates: Vec<ReplicateRecord>,
}

impl MetricsReport {
    pub fn method(&self, method: Method) -> Option<&MethodMetrics> {
        self.metrics.iter().find(|m| m.method == method.label())
    }

    /// Point estimates of `method` in replicate order; failed fits are
    /// `None`.
    pub fn points(&self, method: Method) -> Vec<Option<f64>> {
        self.replicates
            .iter()
            .filter(|r| r.method == method.label())
            .map(|r| r.error.is_none().then_some(r.point))
            .collect()
    }
}

/// Bias, coverage and MSE of marginal estimates against `truth`.
pub fn compute_metrics(method: &str, truth: f64, estimates: &[(f64, f64, f64)], failed: usize) -> MethodMetrics {
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.0).sum::<f64>() / n;
    let abs_bias = (mean - truth).abs();
    MethodMetrics {
        method: method.to_string(),
        abs_bias,
        pct_bias: 100.0 * abs_bias / truth.abs(),
        coverage: estimates.iter().filter(|e| e.1 <= truth && truth <= e.2).count() as f64 / n,
        mse: estimates.iter().map(|e| (e.0 - truth) * (e.0 - truth)).sum::<f64>() / n,
        completed: estimates.len(),
        failed,
    }
}

/// Generates replicates until `n_reps` pass screening, runs every method on
/// each, and scores the marginal estimates against the population truth.
pub fn run_study(spec: &DgpSpec, methods: &[Method], n_reps: usize, config: &StudyConfig) -> Result<MetricsReport> {
    if n_reps == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    spec.validate()?;
    let master = config.estimator.seed;
    let family = spec.family;
    let mut base = config.estimator.clone();
    base.overlap = config.overlap.unwrap_or_else(|| family.default_overlap());
    base.propensity = family.propensity_spec();
    base.validate()?;
    let frozen = match family.single_confounder() {
        Some(_) => Some(frozen_covariate(spec, master)?),
        None => None,
    };
    if let Some(x) = &frozen {
        let raw = assign_regions(x, &exposures(spec), &base.overlap)?;
        let (_, verdict) = screen_interior_gaps(x, &raw, &base.overlap);
        if !verdict.accepted {
            warn!("{family}: {} frozen units lie outside the right tail; treated as overlap", verdict.interior_units);
        }
    }

    let max_attempts = (config.max_attempt_factor.max(1) * n_reps) as u64;
    let mut accepted = Vec::with_capacity(n_reps);
    let mut attempted = 0u64;
    while accepted.len() < n_reps && attempted < max_attempts {
        let batch: Vec<u64> = (attempted..max_attempts.min(attempted + (n_reps - accepted.len()) as u64)).collect();
        attempted += batch.len() as u64;
        let screened: Vec<_> = batch
            .par_iter()
            .map(|&a| -> Result<_> {
                let rep = generate_replicate(spec, frozen.as_deref(), master, a)?;
                let mut cfg = base.clone();
                cfg.seed = rng::derive_seed(master, rng::tag::STUDY, a);
                let prep = prepare(&rep.dataset, &cfg)?;
                Ok((a, rep, cfg, prep))
            })
            .collect::<Result<Vec<_>>>()?;
        // A frozen confounder gives every replicate the same verdict, so
        // single-confounder studies keep the relabelled partition instead.
        accepted.extend(screened.into_iter().filter(|s| frozen.is_some() || s.3.verdict.accepted));
    }
    accepted.truncate(n_reps);
    if accepted.is_empty() {
        return Err(Error::AllScreenedOut { attempted: attempted as usize, rejected: attempted as usize });
    }
    if accepted.len() < n_reps {
        warn!("only {} of {n_reps} replicates passed screening after {attempted} attempts", accepted.len());
    }
    let truth = oracle_true_ace(spec, master, config.oracle_draws)?;
    info!("{family}: truth {:.5} (se {:.2e}), {} replicates", truth.value, truth.se, accepted.len());

    let per_rep: Vec<Vec<ReplicateRecord>> = accepted
        .par_iter()
        .enumerate()
        .map(|(k, (attempt, rep, cfg, prep))| {
            methods
                .iter()
                .map(|&method| match run_method(method, &rep.dataset, prep, cfg) {
                    Ok(est) => {
                        let s = est.marginal();
                        ReplicateRecord {
                            replicate: k,
                            attempt: *attempt,
                            method: method.label().into(),
                            point: s.point,
                            ci_lower: s.ci_lower,
                            ci_upper: s.ci_upper,
                            covered: s.covers(truth.value),
                            pi: prep.partition.pi,
                            error: None,
                        }
                    }
                    Err(err) => {
                        warn!("{method} failed on replicate {k}: {err}");
                        ReplicateRecord {
                            replicate: k,
                            attempt: *attempt,
                            method: method.label().into(),
                            point: f64::NAN,
                            ci_lower: f64::NAN,
                            ci_upper: f64::NAN,
                            covered: false,
                            pi: prep.partition.pi,
                            error: Some(err.to_string()),
                        }
                    }
                })
                .collect()
        })
        .collect();
    let replicates: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();

    let metrics = methods
        .iter()
        .map(|m| {
            let rows: Vec<&ReplicateRecord> = replicates.iter().filter(|r| r.method == m.label()).collect();
            let ok: Vec<(f64, f64, f64)> =
                rows.iter().filter(|r| r.error.is_none()).map(|r| (r.point, r.ci_lower, r.ci_upper)).collect();
            let failed = rows.len() - ok.len();
            if ok.is_empty() {
                MethodMetrics {
                    method: m.label().into(),
                    abs_bias: f64::NAN,
                    pct_bias: f64::NAN,
                    coverage: f64::NAN,
                    mse: f64::NAN,
                    completed: 0,
                    failed,
                }
            } else {
                compute_metrics(m.label(), truth.value, &ok, failed)
            }
        })
        .collect();
    let mean_pi = accepted.iter().map(|a| a.3.partition.pi).sum::<f64>() / accepted.len() as f64;
    Ok(MetricsReport {
        family: family.to_string(),
        truth,
        attempted: attempted as usize,
        accepted: accepted.len(),
        mean_pi,
        metrics,
        replicates,
    })
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.6}")
    }
}

/// Metrics table: method, abs_bias, pct_bias, coverage, mse.
pub fn write_metrics_csv<W: Write>(out: W, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "abs_bias", "pct_bias", "coverage", "mse"])?;
    for m in &report.metrics {
        w.write_record([m.method.clone(), fmt_f(m.abs_bias), fmt_f(m.pct_bias), fmt_f(m.coverage), fmt_f(m.mse)])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-replicate audit rows.
pub fn write_replicates_csv<W: Write>(out: W, report: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "attempt", "method", "point", "ci_lower", "ci_upper", "covered", "pi", "error"])?;
    for r in &report.replicates {
        w.write_record([
            r.replicate.to_string(),
            r.attempt.to_string(),
            r.method.clone(),
            fmt_f(r.point),
            fmt_f(r.ci_lower),
            fmt_f(r.ci_upper),
            (r.covered as u8).to_string(),
            fmt_f(r.pi),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

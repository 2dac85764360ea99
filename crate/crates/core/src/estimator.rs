//! BART+SPL and the untrimmed / trimmed BART comparators.
//!
//! All three share one outcome chain: the kept sweeps of a single BART fit
//! are the posterior iterations. BART+SPL additionally extrapolates the
//! non-overlap units with the conjugate spline model.

use std::fmt;
use std::str::FromStr;

use log::{info, warn};

use crate::bart::{BartHyperParams, BartSampler, Design, ResponseKind};
use crate::bootstrap::population_ace_draw;
use crate::data::{EstimateSummary, Estimand, ObservationalDataset, OutcomeType, PosteriorDraws};
use crate::error::{Error, Result};
use crate::overlap::{assign_regions, screen_interior_gaps, OverlapParams, RegionPartition, ScreeningVerdict};
use crate::propensity::{estimate_ps, PropensityModelSpec};
use crate::rng;
use crate::spline::{
    arcsine_forward, build_design, predict_rn_draw, trimmed_positions, ConjugatePosterior, SmoothingConfig,
    SmoothingRows,
};
use crate::stats;

/// Smallest overlap subsample the trimmed comparator will fit.
pub const TRIMMED_MIN_UNITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    BartSpl,
    UntrimmedBart,
    TrimmedBart,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::BartSpl, Method::UntrimmedBart, Method::TrimmedBart];

    pub fn label(&self) -> &'static str {
        match self {
            Method::BartSpl => "bart_spl",
            Method::UntrimmedBart => "untrimmed_bart",
            Method::TrimmedBart => "trimmed_bart",
        }
    }

    /// Estimand reported for the sample-average draws.
    pub fn sample_estimand(&self) -> Estimand {
        match self {
            Method::TrimmedBart => Estimand::TrimmedSample,
            _ => Estimand::Sample,
        }
    }

    /// Estimand reported for the bootstrap-marginalized draws. Trimmed fits
    /// only ever marginalize over the retained units.
    pub fn marginal_estimand(&self) -> Estimand {
        match self {
            Method::TrimmedBart => Estimand::TrimmedMarginal,
            _ => Estimand::Population,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "bart_spl" | "bartspl" => Ok(Method::BartSpl),
            "untrimmed_bart" | "u_bart" | "ubart" | "bart" => Ok(Method::UntrimmedBart),
            "trimmed_bart" | "t_bart" | "tbart" => Ok(Method::TrimmedBart),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BartSplConfig {
    pub overlap: OverlapParams,
    pub propensity: PropensityModelSpec,
    pub bart: BartHyperParams,
    pub smoothing: SmoothingConfig,
    /// Bayesian-bootstrap replicates per iteration.
    pub bootstrap_draws: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BartSplConfig {
    fn default() -> Self {
        Self {
            overlap: OverlapParams::default(),
            propensity: PropensityModelSpec::Logistic,
            bart: BartHyperParams::default(),
            smoothing: SmoothingConfig::default(),
            bootstrap_draws: 1000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BartSplConfig {
    pub fn validate(&self) -> Result<()> {
        self.overlap.validate()?;
        self.bart.validate()?;
        self.smoothing.validate()?;
        if self.bootstrap_draws == 0 {
            return Err(Error::Config("bootstrap draws must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("credible level {} outside (0, 1)", self.level)));
        }
        if self.bart.draws < 100 {
            warn!("only {} posterior draws; interval endpoints will be unstable", self.bart.draws);
        }
        Ok(())
    }
}

/// Scores and screened region assignment shared by every method.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub ps: Vec<f64>,
    pub partition: RegionPartition,
    pub verdict: ScreeningVerdict,
}

/// Estimates the scores, computes O and relabels non-tail gaps as overlap.
pub fn prepare(data: &ObservationalDataset, config: &BartSplConfig) -> Result<PreparedSample> {
    config.validate()?;
    let ps = estimate_ps(data, &config.propensity, config.seed)?;
    let raw = assign_regions(&ps, data.e(), &config.overlap)?;
    let (partition, verdict) = screen_interior_gaps(&ps, &raw, &config.overlap);
    if verdict.relabeled > 0 {
        info!("{} units in interior gaps treated as overlap", verdict.relabeled);
    }
    Ok(PreparedSample { ps, partition, verdict })
}

#[derive(Debug, Clone)]
pub struct CausalEstimates {
    pub method: Method,
    pub draws: PosteriorDraws,
    /// Sample and marginal summaries, in that order.
    pub summaries: Vec<EstimateSummary>,
    /// Per-unit summaries, overlap units first, in `draws` order.
    pub individual: Vec<EstimateSummary>,
    pub partition: RegionPartition,
    pub ps: Vec<f64>,
}

impl CausalEstimates {
    fn assemble(method: Method, draws: PosteriorDraws, prep: &PreparedSample, level: f64) -> Self {
        let summaries = vec![
            summarize(&draws.delta_s, level, method.sample_estimand()),
            summarize(&draws.delta_p, level, method.marginal_estimand()),
        ];
        let individual = draws
            .ro_units
            .iter()
            .chain(&draws.rn_units)
            .map(|&u| {
                let d = draws.unit_draws(u).expect("unit is present");
                summarize(&d, level, Estimand::Individual(u))
            })
            .collect();
        Self { method, draws, summaries, individual, partition: prep.partition.clone(), ps: prep.ps.clone() }
    }

    pub fn sample(&self) -> &EstimateSummary {
        &self.summaries[0]
    }

    /// Population effect, or the trimmed-sample marginalization for the
    /// trimmed comparator.
    pub fn marginal(&self) -> &EstimateSummary {
        &self.summaries[1]
    }

    pub fn summary(&self, estimand: Estimand) -> Option<&EstimateSummary> {
        self.summaries.iter().chain(&self.individual).find(|s| s.estimand == estimand)
    }
}

/// Mean of the concatenated individual effects of one iteration.
pub fn sample_ace_draw(delta_ro: &[f64], delta_rn: &[f64]) -> f64 {
    let n = delta_ro.len() + delta_rn.len();
    (delta_ro.iter().sum::<f64>() + delta_rn.iter().sum::<f64>()) / n as f64
}

/// Posterior mean and equal-tailed percentile interval.
pub fn summarize(draws: &[f64], level: f64, estimand: Estimand) -> EstimateSummary {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    EstimateSummary {
        estimand,
        point: stats::mean(draws),
        ci_lower: stats::quantile_sorted(&sorted, tail),
        ci_upper: stats::quantile_sorted(&sorted, 1.0 - tail),
        level,
    }
}

pub fn run_bart_spl(data: &ObservationalDataset, config: &BartSplConfig) -> Result<CausalEstimates> {
    let prep = prepare(data, config)?;
    run_method(Method::BartSpl, data, &prep, config)
}

pub fn run_untrimmed_bart(data: &ObservationalDataset, config: &BartSplConfig) -> Result<CausalEstimates> {
    let prep = prepare(data, config)?;
    run_method(Method::UntrimmedBart, data, &prep, config)
}

pub fn run_trimmed_bart(data: &ObservationalDataset, config: &BartSplConfig) -> Result<CausalEstimates> {
    let prep = prepare(data, config)?;
    run_method(Method::TrimmedBart, data, &prep, config)
}

/// Runs `method` on an already prepared sample.
pub fn run_method(
    method: Method,
    data: &ObservationalDataset,
    prep: &PreparedSample,
    config: &BartSplConfig,
) -> Result<CausalEstimates> {
    config.validate()?;
    if prep.ps.len() != data.n() {
        return Err(Error::LengthMismatch { column: "ps".into(), expected: data.n(), found: prep.ps.len() });
    }
    let all: Vec<usize> = (0..data.n()).collect();
    let draws = match method {
        Method::BartSpl => {
            let rn = prep.partition.rn_units();
            let d: Vec<f64> = rn.iter().map(|&r| prep.partition.d[r]).collect();
            sample_effects(data, &prep.ps, &prep.partition.ro_units(), &rn, &d, config)?
        }
        Method::UntrimmedBart => sample_effects(data, &prep.ps, &all, &[], &[], config)?,
        Method::TrimmedBart => {
            let ro = prep.partition.ro_units();
            if ro.len() < TRIMMED_MIN_UNITS {
                return Err(Error::TrimmedTooSmall(ro.len()));
            }
            sample_effects(data, &prep.ps, &ro, &[], &[], config)?
        }
    };
    Ok(CausalEstimates::assemble(method, draws, prep, config.level))
}

/// Smoothing inputs for the non-overlap units of one exposure arm.
struct ArmPlan {
    arm: u8,
    /// Positions within the non-overlap list.
    slots: Vec<usize>,
    predict: SmoothingRows,
    d: Vec<f64>,
}

fn sample_effects(
    data: &ObservationalDataset,
    ps: &[f64],
    ro: &[usize],
    rn: &[usize],
    rn_d: &[f64],
    config: &BartSplConfig,
) -> Result<PosteriorDraws> {
    let e = data.e();
    let y = data.y();
    for g in [0u8, 1] {
        if !ro.iter().any(|&q| e[q] == g) {
            return Err(Error::RegionMissingGroup(g));
        }
    }
    let outcome = data.outcome_type();
    let kind = match outcome {
        OutcomeType::Continuous => ResponseKind::Continuous,
        OutcomeType::Binary => ResponseKind::Probit,
    };

    let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let e_ro: Vec<u8> = ro.iter().map(|&q| e[q]).collect();
    let y_ro = pick(y, ro);
    let ps_ro = pick(ps, ro);
    let mut columns = vec![e_ro.iter().map(|&v| v as f64).collect::<Vec<_>>(), ps_ro.clone()];
    columns.extend(data.covariates().iter().map(|c| pick(c, ro)));
    let design = Design::from_columns(columns)?;
    let mut sampler = BartSampler::new(&design, &y_ro, &config.bart, kind)?;

    let fit_pos = trimmed_positions(&ps_ro, config.smoothing.trim_fraction);
    let fit_units: Vec<usize> = fit_pos.iter().map(|&k| ro[k]).collect();
    let fit_ps = pick(ps, &fit_units);
    let fit_cov: Vec<Vec<f64>> = data.covariates().iter().map(|c| pick(c, &fit_units)).collect();
    let arms: Vec<ArmPlan> = [0u8, 1]
        .into_iter()
        .filter_map(|arm| {
            let slots: Vec<usize> = (0..rn.len()).filter(|&k| e[rn[k]] == arm).collect();
            if slots.is_empty() {
                return None;
            }
            let units: Vec<usize> = slots.iter().map(|&k| rn[k]).collect();
            Some(ArmPlan {
                arm,
                predict: SmoothingRows {
                    ps: pick(ps, &units),
                    ystar: pick(y, &units),
                    covariates: data.covariates().iter().map(|c| pick(c, &units)).collect(),
                },
                d: slots.iter().map(|&k| rn_d[k]).collect(),
                slots,
            })
        })
        .collect();

    let seed = config.seed;
    let mut chain = rng::stream(seed, rng::tag::OUTCOME_CHAIN, 0);
    let mut imputation = rng::stream(seed, rng::tag::IMPUTATION, 0);
    let mut smoothing = rng::stream(seed, rng::tag::SMOOTHING, 0);

    for _ in 0..config.bart.burn_in {
        sampler.sweep(&mut chain);
    }
    sampler.track(&design.with_flipped_column(0))?;
    let m_total = config.bart.draws;
    let mut out = PosteriorDraws::new(ro.to_vec(), rn.to_vec(), m_total);
    let q = ro.len();
    let mut delta_ro = vec![0.0; q];
    let mut y_mis = vec![0.0; q];
    let mut delta_rn = vec![0.0; rn.len()];
    let mut all = vec![0.0; q + rn.len()];
    for m in 0..m_total {
        sampler.sweep(&mut chain);
        let observed = sampler.fitted();
        let counter = sampler.tracked_prediction().expect("counterfactual rows are tracked");
        match outcome {
            OutcomeType::Continuous => {
                let sd = sampler.sigma2().sqrt();
                for k in 0..q {
                    y_mis[k] = counter[k] + sd * stats::std_normal(&mut imputation);
                    delta_ro[k] = if e_ro[k] == 1 { y_ro[k] - y_mis[k] } else { y_mis[k] - y_ro[k] };
                }
            }
            OutcomeType::Binary => {
                for k in 0..q {
                    let p_obs = stats::normal_cdf(observed[k]);
                    let p_mis = stats::normal_cdf(counter[k]);
                    y_mis[k] = if p_mis > 0.5 { 1.0 } else { 0.0 };
                    delta_ro[k] = if e_ro[k] == 1 { p_obs - p_mis } else { p_mis - p_obs };
                }
            }
        }

        if !arms.is_empty() {
            let (lo, hi) = delta_ro.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            let t_o = hi - lo;
            let response = fit_pos
                .iter()
                .map(|&k| match outcome {
                    OutcomeType::Continuous => Ok(delta_ro[k]),
                    OutcomeType::Binary => arcsine_forward(delta_ro[k]),
                })
                .collect::<Result<Vec<f64>>>()?;
            for plan in &arms {
                let fit_rows = SmoothingRows {
                    ps: fit_ps.clone(),
                    ystar: fit_pos.iter().map(|&k| if e_ro[k] == plan.arm { y_ro[k] } else { y_mis[k] }).collect(),
                    covariates: fit_cov.clone(),
                };
                let w = build_design(&fit_rows, &plan.predict, &config.smoothing, outcome)?;
                let fit = ConjugatePosterior::new(&w.fit, &response)?.draw(&mut smoothing);
                let pred = predict_rn_draw(&fit, &w.predict, &plan.d, t_o, &config.smoothing, outcome, &mut smoothing);
                for (&slot, v) in plan.slots.iter().zip(pred) {
                    delta_rn[slot] = v;
                }
            }
        }

        let delta_s = sample_ace_draw(&delta_ro, &delta_rn);
        all[..q].copy_from_slice(&delta_ro);
        all[q..].copy_from_slice(&delta_rn);
        let seed_m = rng::derive_seed(seed, rng::tag::BOOTSTRAP, m as u64);
        let delta_p = population_ace_draw(&all, config.bootstrap_draws, seed_m);
        out.push(&delta_ro, &delta_rn, delta_s, delta_p);
    }
    Ok(out)
}

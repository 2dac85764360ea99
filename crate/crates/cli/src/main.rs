mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use bartspl::bart::BartHyperParams;
use bartspl::estimator::{prepare, run_method, BartSplConfig, Method};
use bartspl::overlap::{score_histogram, sensitivity, IntervalLength, OverlapParams, OverlapReport, TailPolicy};
use bartspl::propensity::PropensityModelSpec;
use bartspl::simulation::{run_study, write_metrics_csv, write_replicates_csv, DgpSpec, Family, StudyConfig};
use bartspl::spline::SmoothingConfig;
use bartspl::{validate_dataset, Error, ObservationalDataset, OutcomeType, RawTable, ValidateOptions};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use config::ConfigFile;

/// Bad flags, config or input schema; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

enum Failure {
    Usage(String),
    Run(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::MissingColumn(_)
            | Error::MissingValue { .. }
            | Error::NonNumeric { .. }
            | Error::NotBinary { .. }
            | Error::EmptyExposureGroup(_)
            | Error::TooFewUnits(_)
            | Error::LengthMismatch { .. }
            | Error::ScoreOutOfRange { .. }
            | Error::Config(_)
            | Error::Csv(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "bartspl", version, about = "Population causal effects under propensity-score non-overlap")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate sample and population effects from a CSV.
    Analyze(AnalyzeArgs),
    /// Run a replication study on a simulated data family.
    Simulate(SimulateArgs),
    /// Overlap diagnostics: O, pi, histogram bins and an (a, b) sensitivity table.
    Overlap(OverlapArgs),
}

#[derive(Args, Default)]
struct RegionFlags {
    /// Interval length a as a fraction of the observed score range.
    #[arg(long, visible_alias = "a-frac")]
    a_fraction: Option<f64>,
    /// Interval length a on the score scale; overrides --a-fraction.
    #[arg(long)]
    a_abs: Option<f64>,
    /// Each group needs more than b scores within a of a point of O.
    #[arg(long)]
    b: Option<usize>,
    /// Largest number of units in interior gaps that are absorbed into O.
    #[arg(long)]
    gap_max: Option<usize>,
    /// Which non-overlap stretches count as tails: both or right.
    #[arg(long)]
    tails: Option<Tails>,
}

#[derive(Args, Default)]
struct ModelFlags {
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    /// Kept posterior draws.
    #[arg(long)]
    draws: Option<usize>,
    /// Bayesian-bootstrap weight vectors per draw.
    #[arg(long)]
    bootstrap_b: Option<usize>,
    #[arg(long)]
    knots: Option<usize>,
    #[arg(long)]
    trim_fraction: Option<f64>,
    /// Credible level.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated: bartspl, untrimmed-bart, trimmed-bart.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// continuous, binary or auto.
    #[arg(long)]
    outcome_type: Option<OutcomeChoice>,
    /// logistic, bart or provided (uses column `ps`).
    #[arg(long)]
    ps_model: Option<PsModel>,
    /// Histogram bins over the score range.
    #[arg(long)]
    bins: Option<usize>,
    /// Also write per-unit effect summaries.
    #[arg(long)]
    effects: bool,
    #[command(flatten)]
    region: RegionFlags,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct OverlapArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    outcome_type: Option<OutcomeChoice>,
    #[arg(long)]
    ps_model: Option<PsModel>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra (a-fraction:b) settings for the sensitivity table.
    #[arg(long, value_delimiter = ',')]
    sensitivity: Option<Vec<Setting>>,
    #[command(flatten)]
    region: RegionFlags,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// S31A, S31B, S32, S33A, S33B, B2A or B2B.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    /// Noise covariates added to S32.
    #[arg(long)]
    extra: Option<usize>,
    /// Units per replicate.
    #[arg(long)]
    n: Option<usize>,
    /// Accepted replicates (default 200).
    #[arg(long)]
    reps: Option<usize>,
    /// Full-scale study of 1000 replicates unless --reps is given.
    #[arg(long)]
    full: bool,
    /// Monte Carlo draws for the population truth.
    #[arg(long)]
    oracle_draws: Option<usize>,
    #[command(flatten)]
    region: RegionFlags,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Clone, Copy, Debug)]
enum Tails {
    Both,
    Right,
}

impl FromStr for Tails {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "both" => Ok(Tails::Both),
            "right" => Ok(Tails::Right),
            other => Err(format!("expected `both` or `right`, got `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum OutcomeChoice {
    Auto,
    Continuous,
    Binary,
}

impl FromStr for OutcomeChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(OutcomeChoice::Auto),
            "continuous" => Ok(OutcomeChoice::Continuous),
            "binary" => Ok(OutcomeChoice::Binary),
            other => Err(format!("expected auto, continuous or binary, got `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum PsModel {
    Logistic,
    Bart,
    Provided,
}

impl FromStr for PsModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" => Ok(PsModel::Logistic),
            "bart" | "bart-probit" | "bart_probit" => Ok(PsModel::Bart),
            "provided" | "column" => Ok(PsModel::Provided),
            other => Err(format!("expected logistic, bart or provided, got `{other}`")),
        }
    }
}

/// One `a-fraction:b` sensitivity setting.
#[derive(Clone, Copy, Debug)]
struct Setting {
    a_fraction: f64,
    b: usize,
}

impl FromStr for Setting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a-fraction:b, got `{s}`"))?;
        Ok(Setting {
            a_fraction: a.trim().parse().map_err(|e| format!("bad a-fraction `{a}`: {e}"))?,
            b: b.trim().parse().map_err(|e| format!("bad b `{b}`: {e}"))?,
        })
    }
}

/// Default rows of the sensitivity table.
const DEFAULT_SENSITIVITY: [Setting; 3] =
    [Setting { a_fraction: 0.05, b: 10 }, Setting { a_fraction: 0.1, b: 10 }, Setting { a_fraction: 0.15, b: 3 }];

const REGION_KEYS: [&str; 5] = ["a-fraction", "a-abs", "b", "gap-max", "tails"];
const MODEL_KEYS: [&str; 9] =
    ["trees", "burnin", "draws", "bootstrap-b", "knots", "trim-fraction", "level", "seed", "method"];

fn load_config(path: Option<&Path>, extra: &[&str], with_model: bool) -> Result<ConfigFile, UsageError> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let cfg = ConfigFile::load(path)?;
    let mut allowed: Vec<&str> = REGION_KEYS.to_vec();
    allowed.extend_from_slice(extra);
    if with_model {
        allowed.extend_from_slice(&MODEL_KEYS);
    }
    cfg.check_keys(&allowed)?;
    Ok(cfg)
}

fn list_from_file<T: FromStr>(cfg: &ConfigFile, key: &str) -> Result<Option<Vec<T>>, UsageError>
where
    T::Err: std::fmt::Display,
{
    let Some(raw) = cfg.get::<String>(key)? else { return Ok(None) };
    raw.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| UsageError(format!("config key `{key}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn overlap_params(flags: &RegionFlags, cfg: &ConfigFile, base: OverlapParams) -> Result<OverlapParams, UsageError> {
    let a = match cfg.pick_opt(flags.a_abs, "a-abs")? {
        Some(v) => IntervalLength::Absolute(v),
        None => match cfg.pick_opt(flags.a_fraction, "a-fraction")? {
            Some(f) => IntervalLength::Fraction(f),
            None => base.a,
        },
    };
    let tails = match cfg.pick_opt(flags.tails, "tails")? {
        Some(Tails::Both) => TailPolicy::BothTails,
        Some(Tails::Right) => TailPolicy::RightTail,
        None => base.tails,
    };
    let params = OverlapParams {
        a,
        b: cfg.pick(flags.b, "b", base.b)?,
        interior_gap_max: cfg.pick(flags.gap_max, "gap-max", base.interior_gap_max)?,
        tails,
    };
    params.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(params)
}

fn region_overridden(flags: &RegionFlags, cfg: &ConfigFile) -> bool {
    flags.a_fraction.is_some()
        || flags.a_abs.is_some()
        || flags.b.is_some()
        || flags.gap_max.is_some()
        || flags.tails.is_some()
        || REGION_KEYS.iter().any(|k| matches!(cfg.get::<String>(k), Ok(Some(_))))
}

fn estimator_config(flags: &ModelFlags, cfg: &ConfigFile) -> Result<BartSplConfig, UsageError> {
    let defaults = BartSplConfig::default();
    let bart = BartHyperParams {
        trees: cfg.pick(flags.trees, "trees", defaults.bart.trees)?,
        burn_in: cfg.pick(flags.burnin, "burnin", defaults.bart.burn_in)?,
        draws: cfg.pick(flags.draws, "draws", defaults.bart.draws)?,
        ..defaults.bart
    };
    let smoothing = SmoothingConfig {
        knots: cfg.pick(flags.knots, "knots", defaults.smoothing.knots)?,
        trim_fraction: cfg.pick(flags.trim_fraction, "trim-fraction", defaults.smoothing.trim_fraction)?,
        ..defaults.smoothing
    };
    Ok(BartSplConfig {
        bart,
        smoothing,
        bootstrap_draws: cfg.pick(flags.bootstrap_b, "bootstrap-b", defaults.bootstrap_draws)?,
        level: cfg.pick(flags.level, "level", defaults.level)?,
        seed: cfg.pick(flags.seed, "seed", defaults.seed)?,
        ..defaults
    })
}

fn methods(flags: &ModelFlags, cfg: &ConfigFile, default: &[Method]) -> Result<Vec<Method>, UsageError> {
    let mut list = match &flags.method {
        Some(m) => m.clone(),
        None => list_from_file(cfg, "method")?.unwrap_or_else(|| default.to_vec()),
    };
    let mut seen = Vec::new();
    list.retain(|m| {
        let fresh = !seen.contains(m);
        seen.push(*m);
        fresh
    });
    if list.is_empty() {
        return Err(UsageError("no method requested".into()));
    }
    Ok(list)
}

fn load_dataset(input: &Path, outcome: OutcomeChoice) -> Result<ObservationalDataset, Failure> {
    let raw = RawTable::from_csv_path(input).map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", input.display())),
        other => Failure::from(other),
    })?;
    let outcome_type = match outcome {
        OutcomeChoice::Continuous => OutcomeType::Continuous,
        OutcomeChoice::Binary => OutcomeType::Binary,
        OutcomeChoice::Auto => {
            let y = raw.column("y").ok_or_else(|| Error::MissingColumn("y".into()))?;
            if y.iter().all(|v| matches!(v, Some(x) if *x == 0.0 || *x == 1.0)) {
                OutcomeType::Binary
            } else {
                OutcomeType::Continuous
            }
        }
    };
    let opts = ValidateOptions { outcome_type: Some(outcome_type), ..Default::default() };
    let data = validate_dataset(&raw, &opts)?;
    info!("{} units ({} exposed), {} covariates, {:?} outcome", data.n(), data.exposed_count(), data.p(), outcome_type);
    Ok(data)
}

fn ps_spec(model: PsModel, data: &ObservationalDataset, bart: &BartHyperParams) -> Result<PropensityModelSpec, Failure> {
    Ok(match model {
        PsModel::Logistic => PropensityModelSpec::Logistic,
        PsModel::Bart => PropensityModelSpec::BartProbit(bart.clone()),
        PsModel::Provided => {
            if data.provided_ps().is_none() {
                return Err(Failure::Usage("--ps-model provided needs a `ps` column".into()));
            }
            PropensityModelSpec::Provided
        }
    })
}

fn output_dir(flag: Option<PathBuf>, cfg: &ConfigFile) -> Result<PathBuf, Failure> {
    let dir = cfg.pick(flag, "output", PathBuf::from("."))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn required_input(flag: Option<PathBuf>, cfg: &ConfigFile) -> Result<PathBuf, UsageError> {
    cfg.pick_opt(flag, "input")?.ok_or_else(|| UsageError("--input is required".into()))
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v}")
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let run = |w: &mut csv::Writer<_>| -> Result<(), csv::Error> {
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| Failure::Run(format!("writing {}: {e}", path.display())))
}

fn write_overlap_files(dir: &Path, ps: &[f64], e: &[u8], report: &OverlapReport, bins: usize) -> Result<(), Failure> {
    let mut f = BufWriter::new(File::create(dir.join("overlap.json"))?);
    serde_json::to_writer_pretty(&mut f, report).map_err(|e| Failure::Run(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;
    let rows = score_histogram(ps, e, bins).into_iter().map(|h| {
        vec![h.group.to_string(), h.bin.to_string(), fmt_num(h.lo), fmt_num(h.hi), h.count.to_string()]
    });
    write_csv(&dir.join("ps_histogram.csv"), &["group", "bin", "lo", "hi", "count"], rows)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref(), &["input", "output", "outcome-type", "ps-model", "bins"], true)?;
    let input = required_input(args.input, &cfg)?;
    let dir = output_dir(args.output, &cfg)?;
    let outcome = cfg.pick(args.outcome_type, "outcome-type", OutcomeChoice::Auto)?;
    let bins = cfg.pick(args.bins, "bins", 30)?;
    let base = OverlapParams { tails: TailPolicy::BothTails, ..OverlapParams::default() };
    let mut config = estimator_config(&args.model, &cfg)?;
    config.overlap = overlap_params(&args.region, &cfg, base)?;
    let methods = methods(&args.model, &cfg, &[Method::BartSpl, Method::TrimmedBart])?;

    let data = load_dataset(&input, outcome)?;
    let model = cfg.pick(args.ps_model, "ps-model", PsModel::Logistic)?;
    config.propensity = ps_spec(model, &data, &config.bart)?;
    config.validate()?;

    let prep = prepare(&data, &config)?;
    if !prep.verdict.accepted {
        warn!(
            "{} units lie in interior non-overlap gaps; they were treated as overlap",
            prep.verdict.interior_units
        );
    }
    info!("pi = {:.4}, {} overlap intervals", prep.partition.pi, prep.partition.intervals.len());
    write_overlap_files(&dir, &prep.ps, data.e(), &OverlapReport::new(&prep.partition), bins)?;

    let mut fits = Vec::with_capacity(methods.len());
    for &method in &methods {
        info!("running {method}");
        let est = run_method(method, &data, &prep, &config).map_err(|e| Failure::Run(format!("{method}: {e}")))?;
        fits.push(est);
    }
    let rows = fits.iter().flat_map(|est| {
        est.summaries.iter().map(move |s| {
            vec![
                s.estimand.label(),
                est.method.label().to_string(),
                fmt_num(s.point),
                fmt_num(s.ci_lower),
                fmt_num(s.ci_upper),
            ]
        })
    });
    write_csv(&dir.join("results.csv"), &["estimand", "method", "point", "ci_lower", "ci_upper"], rows)?;

    if args.effects {
        let rows = fits.iter().flat_map(|est| {
            est.individual.iter().map(move |s| {
                let unit = match s.estimand {
                    bartspl::Estimand::Individual(u) => u,
                    _ => unreachable!("individual summaries only"),
                };
                let region = if est.partition.is_ro(unit) { "ro" } else { "rn" };
                vec![
                    unit.to_string(),
                    est.method.label().to_string(),
                    region.to_string(),
                    fmt_num(est.ps[unit]),
                    fmt_num(s.point),
                    fmt_num(s.ci_lower),
                    fmt_num(s.ci_upper),
                ]
            })
        });
        write_csv(
            &dir.join("effects.csv"),
            &["unit", "method", "region", "ps", "point", "ci_lower", "ci_upper"],
            rows,
        )?;
    }
    Ok(())
}

fn cmd_overlap(args: OverlapArgs) -> Result<(), Failure> {
    let cfg = load_config(
        args.config.as_deref(),
        &["input", "output", "outcome-type", "ps-model", "bins", "seed", "sensitivity"],
        false,
    )?;
    let input = required_input(args.input, &cfg)?;
    let dir = output_dir(args.output, &cfg)?;
    let outcome = cfg.pick(args.outcome_type, "outcome-type", OutcomeChoice::Auto)?;
    let bins = cfg.pick(args.bins, "bins", 30)?;
    let base = OverlapParams { tails: TailPolicy::BothTails, ..OverlapParams::default() };
    let mut config = BartSplConfig { seed: cfg.pick(args.seed, "seed", 0)?, ..BartSplConfig::default() };
    config.overlap = overlap_params(&args.region, &cfg, base)?;
    let extra = match args.sensitivity {
        Some(s) => s,
        None => list_from_file(&cfg, "sensitivity")?.unwrap_or_else(|| DEFAULT_SENSITIVITY.to_vec()),
    };

    let data = load_dataset(&input, outcome)?;
    let default_model = if data.provided_ps().is_some() { PsModel::Provided } else { PsModel::Logistic };
    let model = cfg.pick(args.ps_model, "ps-model", default_model)?;
    config.propensity = ps_spec(model, &data, &config.bart)?;

    let prep = prepare(&data, &config)?;
    if !prep.verdict.accepted {
        warn!("{} units lie in interior non-overlap gaps", prep.verdict.interior_units);
    }
    write_overlap_files(&dir, &prep.ps, data.e(), &OverlapReport::new(&prep.partition), bins)?;

    let mut settings = vec![config.overlap];
    for s in extra {
        let params = OverlapParams { a: IntervalLength::Fraction(s.a_fraction), b: s.b, ..config.overlap };
        params.validate()?;
        if !settings.contains(&params) {
            settings.push(params);
        }
    }
    let rows = sensitivity(&prep.ps, data.e(), &settings)?.into_iter().map(|r| {
        let (kind, value) = match r.a {
            IntervalLength::Fraction(f) => ("fraction", f),
            IntervalLength::Absolute(v) => ("absolute", v),
        };
        vec![
            kind.to_string(),
            fmt_num(value),
            r.b.to_string(),
            fmt_num(r.a_abs),
            fmt_num(r.pi),
            r.n_rn.to_string(),
            r.n_intervals.to_string(),
        ]
    });
    write_csv(&dir.join("sensitivity.csv"), &["a_kind", "a_value", "b", "a", "pi", "n_rn", "n_intervals"], rows)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let cfg = load_config(
        args.config.as_deref(),
        &["output", "family", "c", "v", "w", "extra", "n", "reps", "full", "oracle-draws"],
        true,
    )?;
    let dir = output_dir(args.output, &cfg)?;
    let name = cfg.pick_opt(args.family, "family")?.ok_or_else(|| UsageError("--family is required".into()))?;
    let family = Family::from_name(
        &name,
        cfg.pick(args.c, "c", 0.0)?,
        cfg.pick(args.v, "v", 1.4)?,
        cfg.pick(args.w, "w", 1.96)?,
        cfg.pick(args.extra, "extra", 0)?,
    )?;
    let full = args.full || cfg.get::<bool>("full")?.unwrap_or(false);
    let reps = cfg.pick(args.reps, "reps", if full { 1000 } else { 200 })?;
    if reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    let spec = DgpSpec { n: cfg.pick(args.n, "n", 500)?, ..DgpSpec::new(family) };
    let estimator = estimator_config(&args.model, &cfg)?;
    let overlap = if region_overridden(&args.region, &cfg) {
        Some(overlap_params(&args.region, &cfg, family.default_overlap())?)
    } else {
        None
    };
    let methods = methods(&args.model, &cfg, &Method::ALL)?;
    let defaults = StudyConfig::default();
    let study = StudyConfig {
        estimator,
        overlap,
        oracle_draws: cfg.pick(args.oracle_draws, "oracle-draws", defaults.oracle_draws)?,
        ..defaults
    };
    if study.oracle_draws < 2 {
        return Err(Failure::Usage("--oracle-draws must be at least 2".into()));
    }
    study.estimator.validate()?;

    info!("{family}: {reps} replicates of {} units", spec.n);
    let report = run_study(&spec, &methods, reps, &study)?;
    write_metrics_csv(BufWriter::new(File::create(dir.join("metrics.csv"))?), &report)?;
    write_replicates_csv(BufWriter::new(File::create(dir.join("replicates.csv"))?), &report)?;
    let summary = serde_json::json!({
        "family": report.family,
        "truth": report.truth.value,
        "truth_se": report.truth.se,
        "attempted": report.attempted,
        "accepted": report.accepted,
        "mean_pi": report.mean_pi,
        "metrics": report.metrics,
    });
    let mut f = BufWriter::new(File::create(dir.join("study.json"))?);
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| Failure::Run(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Overlap(a) => cmd_overlap(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

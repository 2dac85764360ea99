//! Observational data and posterior-draw containers.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeType {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// Named numeric columns as read from an external source. `None` marks a
/// missing cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl RawTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) {
        self.names.push(name.into());
        self.columns.push(values);
    }

    pub fn with_column(mut self, name: impl Into<String>, values: &[f64]) -> Self {
        self.push_column(name, values.iter().map(|&v| Some(v)).collect());
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Reads a headered CSV. Empty cells and `NA`/`NaN` are treated as missing.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                let value = match field {
                    "" | "NA" | "na" | "NaN" | "nan" => None,
                    s => Some(s.parse::<f64>().map_err(|_| Error::NonNumeric {
                        column: names[j].clone(),
                        row,
                        value: s.to_string(),
                    })?),
                };
                columns[j].push(value);
            }
        }
        Ok(Self { names, columns })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidateOptions {
    pub outcome_type: Option<OutcomeType>,
    /// Per-column overrides of the inferred covariate typing.
    pub kind_overrides: HashMap<String, ColumnKind>,
}

/// Validated outcome, binary exposure and covariates for `n` units.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalDataset {
    y: Vec<f64>,
    e: Vec<u8>,
    covariates: Vec<Vec<f64>>,
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    outcome_type: OutcomeType,
    provided_ps: Option<Vec<f64>>,
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn complete(name: &str, values: &[Option<f64>]) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(row, v)| match v {
            Some(x) if x.is_finite() => Ok(*x),
            _ => Err(Error::MissingValue {
                column: name.to_string(),
                row,
            }),
        })
        .collect()
}

/// Validates a raw table with columns `y`, `e`, covariates, and optionally
/// `ps`.
pub fn validate_dataset(raw: &RawTable, opts: &ValidateOptions) -> Result<ObservationalDataset> {
    let y = raw
        .column("y")
        .ok_or_else(|| Error::MissingColumn("y".into()))?;
    let e = raw
        .column("e")
        .ok_or_else(|| Error::MissingColumn("e".into()))?;
    let y = complete("y", y)?;
    let e = complete("e", e)?;
    let mut covariates = Vec::new();
    let mut names = Vec::new();
    let mut ps = None;
    for (name, col) in raw.names.iter().zip(&raw.columns) {
        match name.as_str() {
            "y" | "e" => {}
            "ps" => ps = Some(complete(name, col)?),
            _ => {
                covariates.push(complete(name, col)?);
                names.push(name.clone());
            }
        }
    }
    let mut kinds = Vec::with_capacity(covariates.len());
    for (name, col) in names.iter().zip(&covariates) {
        let kind = match opts.kind_overrides.get(name) {
            Some(k) => *k,
            None if is_binary(col) => ColumnKind::Binary,
            None => ColumnKind::Continuous,
        };
        kinds.push(kind);
    }
    let exposure = e
        .iter()
        .enumerate()
        .map(|(row, &v)| match v {
            v if v == 0.0 => Ok(0u8),
            v if v == 1.0 => Ok(1u8),
            value => Err(Error::NotBinary {
                column: "e".into(),
                row,
                value,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome_type = opts.outcome_type.unwrap_or(OutcomeType::Continuous);
    ObservationalDataset::build(y, exposure, covariates, names, kinds, outcome_type, ps)
}

impl ObservationalDataset {
    /// Programmatic constructor; covariate kinds are inferred.
    pub fn new(
        y: Vec<f64>,
        e: Vec<u8>,
        covariates: Vec<Vec<f64>>,
        outcome_type: OutcomeType,
    ) -> Result<Self> {
        let names = (1..=covariates.len()).map(|j| format!("x{j}")).collect();
        let kinds = covariates
            .iter()
            .map(|c| {
                if is_binary(c) {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Continuous
                }
            })
            .collect();
        Self::build(y, e, covariates, names, kinds, outcome_type, None)
    }

    fn build(
        y: Vec<f64>,
        e: Vec<u8>,
        covariates: Vec<Vec<f64>>,
        names: Vec<String>,
        kinds: Vec<ColumnKind>,
        outcome_type: OutcomeType,
        provided_ps: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = y.len();
        let check_len = |column: &str, len: usize| {
            if len != n {
                Err(Error::LengthMismatch {
                    column: column.to_string(),
                    expected: n,
                    found: len,
                })
            } else {
                Ok(())
            }
        };
        check_len("e", e.len())?;
        for (name, col) in names.iter().zip(&covariates) {
            check_len(name, col.len())?;
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::MissingValue {
                    column: name.clone(),
                    row,
                });
            }
        }
        if let Some(ps) = &provided_ps {
            check_len("ps", ps.len())?;
        }
        if n < 2 {
            return Err(Error::TooFewUnits(n));
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingValue {
                column: "y".into(),
                row,
            });
        }
        if let Some(row) = e.iter().position(|&v| v > 1) {
            return Err(Error::NotBinary {
                column: "e".into(),
                row,
                value: e[row] as f64,
            });
        }
        for g in [0u8, 1] {
            if !e.contains(&g) {
                return Err(Error::EmptyExposureGroup(g));
            }
        }
        for ((name, col), kind) in names.iter().zip(&covariates).zip(&kinds) {
            if *kind == ColumnKind::Binary {
                if let Some(row) = col.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::NotBinary {
                        column: name.clone(),
                        row,
                        value: col[row],
                    });
                }
            }
        }
        if outcome_type == OutcomeType::Binary {
            if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::NotBinary {
                    column: "y".into(),
                    row,
                    value: y[row],
                });
            }
        }
        Ok(Self {
            y,
            e,
            covariates,
            names,
            kinds,
            outcome_type,
            provided_ps,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn e(&self) -> &[u8] {
        &self.e
    }

    pub fn covariate(&self, j: usize) -> &[f64] {
        &self.covariates[j]
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn outcome_type(&self) -> OutcomeType {
        self.outcome_type
    }

    pub fn provided_ps(&self) -> Option<&[f64]> {
        self.provided_ps.as_deref()
    }

    pub fn exposed_count(&self) -> usize {
        self.e.iter().filter(|&&v| v == 1).count()
    }

    pub fn with_provided_ps(mut self, ps: Vec<f64>) -> Result<Self> {
        if ps.len() != self.n() {
            return Err(Error::LengthMismatch {
                column: "ps".into(),
                expected: self.n(),
                found: ps.len(),
            });
        }
        self.provided_ps = Some(ps);
        Ok(self)
    }

    /// Units restricted to `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self::build(
            pick(&self.y),
            rows.iter().map(|&i| self.e[i]).collect(),
            self.covariates.iter().map(|c| pick(c)).collect(),
            self.names.clone(),
            self.kinds.clone(),
            self.outcome_type,
            self.provided_ps.as_ref().map(|p| pick(p)),
        )
    }

    /// Round-trips the dataset back into a raw table.
    pub fn to_raw_table(&self) -> RawTable {
        let mut raw = RawTable::new().with_column("y", &self.y);
        let e: Vec<f64> = self.e.iter().map(|&v| v as f64).collect();
        raw = raw.with_column("e", &e);
        for (name, col) in self.names.iter().zip(&self.covariates) {
            raw = raw.with_column(name.clone(), col);
        }
        if let Some(ps) = &self.provided_ps {
            raw = raw.with_column("ps", ps);
        }
        raw
    }

    pub fn validate_options(&self) -> ValidateOptions {
        ValidateOptions {
            outcome_type: Some(self.outcome_type),
            kind_overrides: self
                .names
                .iter()
                .cloned()
                .zip(self.kinds.iter().copied())
                .collect(),
        }
    }
}

/// Which population a summary refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Individual(usize),
    Sample,
    Population,
    /// Average over the units retained after trimming; not a population effect.
    TrimmedSample,
    /// Bayesian-bootstrap marginalization over the retained units only.
    TrimmedMarginal,
}

impl Estimand {
    pub fn label(&self) -> String {
        match self {
            Estimand::Individual(i) => format!("individual_{i}"),
            Estimand::Sample => "sample".into(),
            Estimand::Population => "population".into(),
            Estimand::TrimmedSample => "trimmed_sample".into(),
            Estimand::TrimmedMarginal => "trimmed_marginal".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub estimand: Estimand,
    pub point: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
}

impl EstimateSummary {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

/// Per-iteration draws of individual and average effects.
///
/// `delta_ro` and `delta_rn` are row-major `draws x units` matrices over the
/// overlap-region and non-overlap-region units listed in `ro_units` and
/// `rn_units`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub ro_units: Vec<usize>,
    pub rn_units: Vec<usize>,
    pub delta_ro: Vec<f64>,
    pub delta_rn: Vec<f64>,
    pub delta_s: Vec<f64>,
    pub delta_p: Vec<f64>,
}

impl PosteriorDraws {
    pub fn new(ro_units: Vec<usize>, rn_units: Vec<usize>, capacity: usize) -> Self {
        Self {
            delta_ro: Vec::with_capacity(capacity * ro_units.len()),
            delta_rn: Vec::with_capacity(capacity * rn_units.len()),
            ro_units,
            rn_units,
            delta_s: Vec::with_capacity(capacity),
            delta_p: Vec::with_capacity(capacity),
        }
    }

    pub fn draws(&self) -> usize {
        self.delta_s.len()
    }

    pub fn units(&self) -> usize {
        self.ro_units.len() + self.rn_units.len()
    }

    pub fn push(&mut self, ro: &[f64], rn: &[f64], delta_s: f64, delta_p: f64) {
        debug_assert_eq!(ro.len(), self.ro_units.len());
        debug_assert_eq!(rn.len(), self.rn_units.len());
        self.delta_ro.extend_from_slice(ro);
        self.delta_rn.extend_from_slice(rn);
        self.delta_s.push(delta_s);
        self.delta_p.push(delta_p);
    }

    pub fn ro_row(&self, m: usize) -> &[f64] {
        let q = self.ro_units.len();
        &self.delta_ro[m * q..(m + 1) * q]
    }

    pub fn rn_row(&self, m: usize) -> &[f64] {
        let r = self.rn_units.len();
        &self.delta_rn[m * r..(m + 1) * r]
    }

    /// All draws of the individual effect of dataset unit `unit`, if present.
    pub fn unit_draws(&self, unit: usize) -> Option<Vec<f64>> {
        if let Some(k) = self.ro_units.iter().position(|&u| u == unit) {
            return Some((0..self.draws()).map(|m| self.ro_row(m)[k]).collect());
        }
        let k = self.rn_units.iter().position(|&u| u == unit)?;
        Some((0..self.draws()).map(|m| self.rn_row(m)[k]).collect())
    }

    /// Largest deviation between each `delta_s` draw and the mean of that
    /// iteration's individual effects.
    pub fn sample_identity_error(&self) -> f64 {
        (0..self.draws())
            .map(|m| {
                let ro = self.ro_row(m);
                let rn = self.rn_row(m);
                let mean = (ro.iter().sum::<f64>() + rn.iter().sum::<f64>()) / self.units() as f64;
                (mean - self.delta_s[m]).abs()
            })
            .fold(0.0, f64::max)
    }
}

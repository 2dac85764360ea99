//! Overlap region O over the observed score range P: a point belongs to O
//! when, for each exposure group, it and more than `b` of that group's scores
//! fit inside a set of range less than `a`.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum IntervalLength {
    /// Fraction of the observed score range.
    Fraction(f64),
    Absolute(f64),
}

/// Which non-overlap intervals count as tails (and are extrapolated into);
/// all others are interior gaps subject to screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailPolicy {
    RightTail,
    BothTails,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapParams {
    pub a: IntervalLength,
    pub b: usize,
    pub interior_gap_max: usize,
    pub tails: TailPolicy,
}

impl Default for OverlapParams {
    fn default() -> Self {
        Self { a: IntervalLength::Fraction(0.1), b: 10, interior_gap_max: 10, tails: TailPolicy::RightTail }
    }
}

impl OverlapParams {
    pub fn validate(&self) -> Result<()> {
        match self.a {
            IntervalLength::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::Config(format!("a fraction {f} outside (0, 1]")))
            }
            IntervalLength::Absolute(v) if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::Config(format!("absolute a {v} must be positive")))
            }
            _ => {}
        }
        if self.b == 0 {
            return Err(Error::Config("b must be at least 1".into()));
        }
        Ok(())
    }

    pub fn interval_length(&self, lo: f64, hi: f64) -> f64 {
        match self.a {
            IntervalLength::Fraction(f) => f * (hi - lo),
            IntervalLength::Absolute(v) => v,
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Union of the open intervals, as sorted disjoint open intervals.
fn union_open(mut parts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    parts.retain(|(l, h)| l < h);
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(parts.len());
    for (l, h) in parts {
        match out.last_mut() {
            Some(last) if l < last.1 => last.1 = last.1.max(h),
            _ => out.push((l, h)),
        }
    }
    out
}

fn intersect_open(x: &[(f64, f64)], y: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < x.len() && j < y.len() {
        let lo = x[i].0.max(y[j].0);
        let hi = x[i].1.min(y[j].1);
        if lo < hi {
            out.push((lo, hi));
        }
        if x[i].1 < y[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// One group's supported set: the union over windows of `b + 1` consecutive
/// sorted scores with range below `a` of `(s[i+b] - a, s[i] + a)`.
fn group_support(sorted: &[f64], a: f64, b: usize) -> Vec<(f64, f64)> {
    if sorted.len() <= b {
        return Vec::new();
    }
    let parts = (0..sorted.len() - b)
        .filter(|&i| sorted[i + b] - sorted[i] < a)
        .map(|i| (sorted[i + b] - a, sorted[i] + a))
        .collect();
    union_open(parts)
}

fn sorted_group(ps: &[f64], e: &[u8], group: u8) -> Vec<f64> {
    let mut s: Vec<f64> = ps.iter().zip(e).filter(|(_, &g)| g == group).map(|(&p, _)| p).collect();
    s.sort_by(f64::total_cmp);
    s
}

fn check_inputs(ps: &[f64], e: &[u8]) -> Result<()> {
    if ps.len() != e.len() {
        return Err(Error::LengthMismatch { column: "e".into(), expected: ps.len(), found: e.len() });
    }
    if ps.is_empty() {
        return Err(Error::TooFewUnits(0));
    }
    if let Some(i) = ps.iter().position(|p| !p.is_finite()) {
        return Err(Error::ScoreOutOfRange { unit: i, value: ps[i] });
    }
    Ok(())
}

/// Observed range P of the scores.
pub fn score_bounds(ps: &[f64]) -> (f64, f64) {
    ps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)))
}

/// O = P ∩ O_0 ∩ O_1 as sorted disjoint closed intervals. Scores need not be
/// probabilities (a single confounder may stand in for the score).
pub fn compute_overlap_intervals(ps: &[f64], e: &[u8], params: &OverlapParams) -> Result<Vec<Interval>> {
    params.validate()?;
    check_inputs(ps, e)?;
    let (p_lo, p_hi) = score_bounds(ps);
    let a = params.interval_length(p_lo, p_hi);
    let mut supports = Vec::with_capacity(2);
    for g in [0u8, 1] {
        let s = sorted_group(ps, e, g);
        if s.len() <= params.b {
            warn!("exposure group {g} has {} units, not more than b = {}; overlap region is empty", s.len(), params.b);
        }
        supports.push(group_support(&s, a, params.b));
    }
    let both = intersect_open(&supports[0], &supports[1]);
    Ok(both
        .into_iter()
        .filter(|&(l, h)| l < p_hi && h > p_lo)
        .map(|(l, h)| Interval { lo: l.max(p_lo), hi: h.min(p_hi) })
        .collect())
}

/// Brute-force membership of `o` in O straight from the set definition.
pub fn in_overlap_pointwise(o: f64, ps: &[f64], e: &[u8], a: f64, b: usize) -> bool {
    let (p_lo, p_hi) = score_bounds(ps);
    if o < p_lo || o > p_hi {
        return false;
    }
    [0u8, 1].iter().all(|&g| {
        let s = sorted_group(ps, e, g);
        s.len() > b && (0..s.len() - b).any(|i| o.max(s[i + b]) - o.min(s[i]) < a)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Ro,
    Rn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GapSide {
    Left,
    Right,
    /// Covers all of P (no overlap at all).
    Both,
    Interior,
}

/// A maximal stretch of P outside O and the units it holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RnGap {
    pub lo: f64,
    pub hi: f64,
    pub side: GapSide,
    pub units: Vec<usize>,
}

impl RnGap {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn touches_left(&self) -> bool {
        matches!(self.side, GapSide::Left | GapSide::Both)
    }

    pub fn touches_right(&self) -> bool {
        matches!(self.side, GapSide::Right | GapSide::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionPartition {
    pub p_bounds: (f64, f64),
    /// Absolute interval length used.
    pub a: f64,
    pub b: usize,
    pub intervals: Vec<Interval>,
    pub labels: Vec<Region>,
    /// Distance to the nearest overlap-region score; 0 inside O.
    pub d: Vec<f64>,
    pub pi: f64,
    pub gaps: Vec<RnGap>,
}

fn normalize_closed(mut parts: Vec<Interval>) -> Vec<Interval> {
    parts.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    let mut out: Vec<Interval> = Vec::with_capacity(parts.len());
    for iv in parts {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

impl RegionPartition {
    /// Labels, distances, gaps and pi for scores `ps` under the overlap set.
    pub fn from_intervals(ps: &[f64], intervals: Vec<Interval>, a: f64, b: usize) -> Self {
        let p_bounds = score_bounds(ps);
        let intervals = normalize_closed(intervals);
        let labels: Vec<Region> = ps
            .iter()
            .map(|&p| if intervals.iter().any(|iv| iv.contains(p)) { Region::Ro } else { Region::Rn })
            .collect();
        let mut ro_sorted: Vec<f64> =
            ps.iter().zip(&labels).filter(|(_, &l)| l == Region::Ro).map(|(&p, _)| p).collect();
        ro_sorted.sort_by(f64::total_cmp);
        if ro_sorted.is_empty() {
            warn!("overlap region is empty; every unit is in the non-overlap region");
        }
        let d = ps
            .iter()
            .zip(&labels)
            .map(|(&p, &l)| match l {
                Region::Ro => 0.0,
                Region::Rn => nearest_distance(&ro_sorted, p),
            })
            .collect();
        let n_rn = labels.iter().filter(|&&l| l == Region::Rn).count();
        let gaps = build_gaps(ps, &labels, &intervals, p_bounds);
        Self { p_bounds, a, b, intervals, labels, d, pi: n_rn as f64 / ps.len() as f64, gaps }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn ro_units(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == Region::Ro).collect()
    }

    pub fn rn_units(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == Region::Rn).collect()
    }

    pub fn is_ro(&self, i: usize) -> bool {
        self.labels[i] == Region::Ro
    }
}

fn nearest_distance(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::INFINITY;
    }
    let k = sorted.partition_point(|&v| v < p);
    let mut best = f64::INFINITY;
    if k < sorted.len() {
        best = best.min((sorted[k] - p).abs());
    }
    if k > 0 {
        best = best.min((p - sorted[k - 1]).abs());
    }
    best
}

fn build_gaps(ps: &[f64], labels: &[Region], intervals: &[Interval], (p_lo, p_hi): (f64, f64)) -> Vec<RnGap> {
    let mut bounds = Vec::new();
    let mut cursor = p_lo;
    let mut open_left = true;
    for iv in intervals {
        if iv.lo > cursor || (open_left && iv.lo > p_lo) {
            bounds.push((cursor, iv.lo));
        }
        cursor = iv.hi;
        open_left = false;
    }
    if intervals.is_empty() {
        bounds.push((p_lo, p_hi));
    } else if cursor < p_hi {
        bounds.push((cursor, p_hi));
    }
    bounds
        .into_iter()
        .map(|(lo, hi)| {
            let side = match (lo == p_lo && intervals.first().is_none_or(|f| f.lo > p_lo), hi == p_hi && intervals.last().is_none_or(|l| l.hi < p_hi)) {
                (true, true) => GapSide::Both,
                (true, false) => GapSide::Left,
                (false, true) => GapSide::Right,
                (false, false) => GapSide::Interior,
            };
            let units = (0..ps.len())
                .filter(|&i| labels[i] == Region::Rn && ps[i] >= lo && ps[i] <= hi)
                .collect();
            RnGap { lo, hi, side, units }
        })
        .collect()
}

/// Computes O and assigns every unit.
pub fn assign_regions(ps: &[f64], e: &[u8], params: &OverlapParams) -> Result<RegionPartition> {
    let intervals = compute_overlap_intervals(ps, e, params)?;
    let (lo, hi) = score_bounds(ps);
    Ok(RegionPartition::from_intervals(ps, intervals, params.interval_length(lo, hi), params.b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScreeningVerdict {
    pub accepted: bool,
    /// Units in non-tail gaps.
    pub interior_units: usize,
    pub relabeled: usize,
}

/// Treats non-tail gaps as part of O. The verdict is rejected when those gaps
/// hold more than `interior_gap_max` units in total; the returned partition
/// has them relabeled either way.
pub fn screen_interior_gaps(
    ps: &[f64],
    partition: &RegionPartition,
    params: &OverlapParams,
) -> (RegionPartition, ScreeningVerdict) {
    let is_tail = |g: &RnGap| match params.tails {
        TailPolicy::RightTail => g.touches_right(),
        TailPolicy::BothTails => g.touches_left() || g.touches_right(),
    };
    let screened: Vec<&RnGap> = partition.gaps.iter().filter(|g| !is_tail(g)).collect();
    let interior_units: usize = screened.iter().map(|g| g.units.len()).sum();
    let accepted = interior_units <= params.interior_gap_max;
    if screened.is_empty() {
        return (partition.clone(), ScreeningVerdict { accepted, interior_units, relabeled: 0 });
    }
    let mut intervals = partition.intervals.clone();
    intervals.extend(screened.iter().map(|g| Interval { lo: g.lo, hi: g.hi }));
    let out = RegionPartition::from_intervals(ps, intervals, partition.a, partition.b);
    (out, ScreeningVerdict { accepted, interior_units, relabeled: interior_units })
}

/// JSON diagnostic: interval length, count threshold, O, pi, and the
/// non-overlap stretches with their widths.
#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub a: f64,
    pub b: usize,
    pub intervals: Vec<[f64; 2]>,
    pub pi: f64,
    pub tails: Vec<TailEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailEntry {
    pub side: GapSide,
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    pub units: usize,
}

impl OverlapReport {
    pub fn new(partition: &RegionPartition) -> Self {
        Self {
            a: partition.a,
            b: partition.b,
            intervals: partition.intervals.iter().map(|iv| [iv.lo, iv.hi]).collect(),
            pi: partition.pi,
            tails: partition
                .gaps
                .iter()
                .map(|g| TailEntry { side: g.side, lo: g.lo, hi: g.hi, width: g.width(), units: g.units.len() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub group: u8,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Per-group counts over `bins` equal-width bins spanning P.
pub fn score_histogram(ps: &[f64], e: &[u8], bins: usize) -> Vec<HistogramBin> {
    let (lo, hi) = score_bounds(ps);
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![[0usize; 2]; bins];
    for (&p, &g) in ps.iter().zip(e) {
        let k = if width > 0.0 { (((p - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k][g as usize] += 1;
    }
    let mut out = Vec::with_capacity(2 * bins);
    for g in [0u8, 1] {
        for (k, c) in counts.iter().enumerate() {
            out.push(HistogramBin {
                group: g,
                bin: k,
                lo: lo + k as f64 * width,
                hi: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
                count: c[g as usize],
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub a: IntervalLength,
    pub b: usize,
    pub a_abs: f64,
    pub pi: f64,
    pub n_rn: usize,
    pub n_intervals: usize,
}

/// pi and interval counts under each parameter setting, after interior
/// gaps are screened as in estimation.
pub fn sensitivity(ps: &[f64], e: &[u8], settings: &[OverlapParams]) -> Result<Vec<SensitivityRow>> {
    settings
        .iter()
        .map(|params| {
            let (part, _) = screen_interior_gaps(ps, &assign_regions(ps, e, params)?, params);
            Ok(SensitivityRow {
                a: params.a,
                b: params.b,
                a_abs: part.a,
                pi: part.pi,
                n_rn: part.rn_units().len(),
                n_intervals: part.intervals.len(),
            })
        })
        .collect()
}

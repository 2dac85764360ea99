use super::Design;
use crate::error::{Error, Result};

/// Candidate split values per variable. A rule `(var, k)` sends `x` left when
/// `x < cuts[var][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutGrid {
    cuts: Vec<Vec<f64>>,
}

impl CutGrid {
    /// Midpoints between consecutive distinct values when there are at most
    /// `max_cuts + 1` of them, otherwise `max_cuts` empirical quantiles.
    pub fn from_design(design: &Design, max_cuts: usize) -> Self {
        let cuts = design
            .columns()
            .iter()
            .map(|col| {
                let mut uniq = col.clone();
                uniq.sort_by(f64::total_cmp);
                uniq.dedup();
                if uniq.len() <= max_cuts + 1 {
                    uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
                } else {
                    let mut sorted = col.clone();
                    sorted.sort_by(f64::total_cmp);
                    let mut c: Vec<f64> = (1..=max_cuts)
                        .map(|k| {
                            crate::stats::quantile_sorted(&sorted, k as f64 / (max_cuts + 1) as f64)
                        })
                        .filter(|&v| v > sorted[0])
                        .collect();
                    c.dedup();
                    c
                }
            })
            .collect();
        Self { cuts }
    }

    pub fn from_cuts(cuts: Vec<Vec<f64>>) -> Self {
        Self { cuts }
    }

    pub fn p(&self) -> usize {
        self.cuts.len()
    }

    pub fn n_cuts(&self, var: usize) -> usize {
        self.cuts[var].len()
    }

    pub fn cut(&self, var: usize, k: usize) -> f64 {
        self.cuts[var][k]
    }

    /// Number of cutpoints not exceeding `x`; `x < cut(var, k)` iff
    /// `bin(var, x) <= k`.
    pub fn bin(&self, var: usize, x: f64) -> u16 {
        self.cuts[var].partition_point(|&c| c <= x) as u16
    }

    pub fn bin_design(&self, design: &Design) -> Result<BinnedRows> {
        if design.p() != self.p() {
            return Err(Error::DesignWidth {
                expected: self.p(),
                found: design.p(),
            });
        }
        let p = self.p();
        let n = design.n();
        let mut bins = vec![0u16; n * p];
        for j in 0..p {
            for (i, &x) in design.column(j).iter().enumerate() {
                bins[i * p + j] = self.bin(j, x);
            }
        }
        Ok(BinnedRows { n, p, bins })
    }
}

/// Row-major bin indices of a design against a [`CutGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedRows {
    n: usize,
    p: usize,
    bins: Vec<u16>,
}

impl BinnedRows {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u16] {
        &self.bins[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn get(&self, i: usize, var: usize) -> u16 {
        self.bins[i * self.p + var]
    }
}

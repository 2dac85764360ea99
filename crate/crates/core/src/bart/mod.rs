//! Bayesian sum-of-trees regression fit by backfitting MCMC.
//!
//! The continuous model works on an outcome rescaled to [-0.5, 0.5]; the
//! probit model works on latent utilities with unit error variance. Both
//! share the same tree moves (grow, prune, change, swap) with leaf means
//! integrated out of the acceptance ratio.

mod cutpoints;
mod sampler;
mod tree;

pub use cutpoints::{BinnedRows, CutGrid};
pub use sampler::{write_draw_blocks, BartSampler, ResponseKind};
pub use tree::{DecisionTree, Node};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n: usize,
    columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::LengthMismatch {
                column: format!("design column {j}"),
                expected: n,
                found: c.len(),
            });
        }
        Ok(Self { n, columns })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self, idx: &[usize]) -> Design {
        Design {
            n: idx.len(),
            columns: self
                .columns
                .iter()
                .map(|c| idx.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    /// Copy with column `j` replaced by `1 - value` (exposure flip).
    pub fn with_flipped_column(&self, j: usize) -> Design {
        let mut out = self.clone();
        for v in &mut out.columns[j] {
            *v = 1.0 - *v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveProbabilities {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub swap: f64,
}

impl Default for MoveProbabilities {
    fn default() -> Self {
        Self {
            grow: 0.25,
            prune: 0.25,
            change: 0.40,
            swap: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartHyperParams {
    /// Number of trees `J`.
    pub trees: usize,
    /// Tree-depth prior: a node at depth `d` splits with probability
    /// `alpha * (1 + d)^-beta`.
    pub alpha: f64,
    pub beta: f64,
    /// Leaf prior scale; leaf sd is `0.5 / (k sqrt(J))` on the scaled
    /// outcome and `3 / (k sqrt(J))` on the probit scale.
    pub k: f64,
    /// Residual-variance prior degrees of freedom.
    pub nu: f64,
    /// Prior mass below the data-based residual sd estimate.
    pub q: f64,
    pub moves: MoveProbabilities,
    /// Cutpoints per continuous variable.
    pub max_cuts: usize,
    pub min_leaf: usize,
    pub burn_in: usize,
    pub draws: usize,
    /// Hard depth limit (nodes at this depth never split).
    pub max_depth: Option<usize>,
    /// Holds the residual variance fixed instead of sampling it.
    pub fixed_sigma2: Option<f64>,
}

impl Default for BartHyperParams {
    fn default() -> Self {
        Self {
            trees: 200,
            alpha: 0.95,
            beta: 2.0,
            k: 2.0,
            nu: 3.0,
            q: 0.90,
            moves: MoveProbabilities::default(),
            max_cuts: 100,
            min_leaf: 5,
            burn_in: 250,
            draws: 1000,
            max_depth: None,
            fixed_sigma2: None,
        }
    }
}

impl BartHyperParams {
    pub fn validate(&self) -> Result<()> {
        let m = &self.moves;
        let probs = [m.grow, m.prune, m.change, m.swap];
        if probs.iter().any(|&p| p < 0.0) || ((probs.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config("move probabilities must be non-negative and sum to 1".into()));
        }
        if m.grow <= 0.0 || m.prune <= 0.0 {
            return Err(Error::Config("grow and prune probabilities must be positive".into()));
        }
        if self.trees == 0 {
            return Err(Error::Config("need at least one tree".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || self.beta < 0.0 {
            return Err(Error::Config("tree prior needs alpha in (0,1) and beta >= 0".into()));
        }
        if self.k <= 0.0 || self.nu <= 0.0 || !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::Config("k and nu must be positive, q in (0,1)".into()));
        }
        if self.max_cuts == 0 || self.min_leaf == 0 {
            return Err(Error::Config("max_cuts and min_leaf must be positive".into()));
        }
        if let Some(s) = self.fixed_sigma2 {
            if s <= 0.0 {
                return Err(Error::Config("fixed residual variance must be positive".into()));
            }
        }
        Ok(())
    }
}

//! Smoothing stage: a conjugate Bayesian linear model on restricted cubic
//! spline features, used to carry individual effects from the overlap region
//! into the non-overlap tails.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::OutcomeType;
use crate::error::{Error, Result};
use crate::linalg::independent_columns;
use crate::stats::{self, std_normal};

const SIGMA2_FLOOR: f64 = 1e-12;
const ARCSINE_SLACK: f64 = 1e-12;

/// Default knot quantiles by knot count.
pub fn knot_quantiles(k: usize) -> Vec<f64> {
    match k {
        3 => vec![0.10, 0.50, 0.90],
        4 => vec![0.05, 0.35, 0.65, 0.95],
        5 => vec![0.05, 0.275, 0.50, 0.725, 0.95],
        6 => vec![0.05, 0.23, 0.41, 0.59, 0.77, 0.95],
        7 => vec![0.025, 0.1833, 0.3417, 0.50, 0.6583, 0.8167, 0.975],
        _ => (0..k).map(|i| 0.05 + 0.9 * i as f64 / (k - 1) as f64).collect(),
    }
}

/// Truncated-power restricted cubic spline basis: linear beyond the outer
/// knots.
#[derive(Debug, Clone, PartialEq)]
pub struct RcsBasis {
    knots: Vec<f64>,
}

impl RcsBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 3 {
            return Err(Error::Config(format!("need at least 3 knots, got {}", knots.len())));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(format!("knots must be strictly increasing: {knots:?}")));
        }
        Ok(Self { knots })
    }

    /// Knots at the default quantiles of `values`; the count drops (with a
    /// warning) while the quantiles are not distinct. `None` when fewer than
    /// 3 distinct knots exist, in which case only the linear term is usable.
    pub fn from_quantiles(values: &[f64], k: usize) -> Option<Self> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        for kk in (3..=k).rev() {
            let knots: Vec<f64> = knot_quantiles(kk).iter().map(|&q| stats::quantile_sorted(&sorted, q)).collect();
            if let Ok(basis) = Self::new(knots) {
                if kk < k {
                    warn!("reduced spline knots from {k} to {kk} (too few distinct values)");
                }
                return Some(basis);
            }
        }
        None
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Columns per variable: one linear plus K - 2 nonlinear.
    pub fn n_columns(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn eval_into(&self, z: f64, out: &mut Vec<f64>) {
        let t = &self.knots;
        let k = t.len();
        let (tk, tk1) = (t[k - 1], t[k - 2]);
        let norm = (tk - t[0]).powi(2);
        let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
        out.push(z);
        for &tj in &t[..k - 2] {
            let c = cube(z - tj) - cube(z - tk1) * (tk - tj) / (tk - tk1) + cube(z - tk) * (tk1 - tj) / (tk - tk1);
            out.push(c / norm);
        }
    }

    pub fn eval(&self, z: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_columns());
        self.eval_into(z, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub knots: usize,
    /// Fraction of overlap units dropped from each score tail before fitting.
    pub trim_fraction: f64,
    pub tau_multiplier: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { knots: 5, trim_fraction: 0.02, tau_multiplier: 10.0 }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knots < 3 {
            return Err(Error::Config("spline needs at least 3 knots".into()));
        }
        if !(0.0..=0.1).contains(&self.trim_fraction) {
            return Err(Error::Config(format!("trim fraction {} outside [0, 0.1]", self.trim_fraction)));
        }
        if !(self.tau_multiplier >= 0.0) {
            return Err(Error::Config("tau multiplier must be non-negative".into()));
        }
        Ok(())
    }
}

/// Positions (within `ps`) kept for fitting after dropping the
/// `floor(trim * n)` lowest and highest scores.
pub fn trimmed_positions(ps: &[f64], trim: f64) -> Vec<usize> {
    let n = ps.len();
    let cut = (trim * n as f64 + 1e-9).floor() as usize;
    if 2 * cut >= n {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]).then(a.cmp(&b)));
    let mut kept = order[cut..n - cut].to_vec();
    kept.sort_unstable();
    kept
}

/// Per-unit inputs of the smoothing model: score, observed-or-imputed
/// potential outcome of the modeled arm, and covariates (column-major).
#[derive(Debug, Clone, Default)]
pub struct SmoothingRows {
    pub ps: Vec<f64>,
    pub ystar: Vec<f64>,
    pub covariates: Vec<Vec<f64>>,
}

impl SmoothingRows {
    pub fn len(&self) -> usize {
        self.ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ps.is_empty()
    }
}

/// Design matrices for one arm: fitting rows and prediction rows, with
/// collinear columns already removed.
#[derive(Debug, Clone)]
pub struct SmoothingDesign {
    pub fit: DMatrix<f64>,
    pub predict: DMatrix<f64>,
}

/// W = [1, rcs(ps), rcs(Y*) (continuous) or Y* (binary), X]. Knots come from
/// the fitting rows only.
pub fn build_design(
    fit: &SmoothingRows,
    predict: &SmoothingRows,
    config: &SmoothingConfig,
    outcome: OutcomeType,
) -> Result<SmoothingDesign> {
    let ps_basis = RcsBasis::from_quantiles(&fit.ps, config.knots);
    let y_basis = match outcome {
        OutcomeType::Continuous => RcsBasis::from_quantiles(&fit.ystar, config.knots),
        OutcomeType::Binary => None,
    };
    let row = |rows: &SmoothingRows, i: usize, out: &mut Vec<f64>| {
        out.push(1.0);
        match &ps_basis {
            Some(b) => b.eval_into(rows.ps[i], out),
            None => out.push(rows.ps[i]),
        }
        match &y_basis {
            Some(b) => b.eval_into(rows.ystar[i], out),
            None => out.push(rows.ystar[i]),
        }
        for c in &rows.covariates {
            out.push(c[i]);
        }
    };
    let mut buf = Vec::new();
    let mut build = |rows: &SmoothingRows| -> (usize, Vec<f64>) {
        let mut data = Vec::new();
        let mut width = 0;
        for i in 0..rows.len() {
            buf.clear();
            row(rows, i, &mut buf);
            width = buf.len();
            data.extend_from_slice(&buf);
        }
        (width, data)
    };
    let (k_fit, fit_data) = build(fit);
    let (_, pred_data) = build(predict);
    if fit.is_empty() {
        return Err(Error::SmoothingRankDeficient { rows: 0, cols: k_fit });
    }
    let w_fit = DMatrix::from_row_slice(fit.len(), k_fit, &fit_data);
    let w_pred = DMatrix::from_row_slice(predict.len(), k_fit, &pred_data);
    let kept = independent_columns(&w_fit, 1e-8);
    if kept.len() < k_fit {
        warn!("dropped {} collinear smoothing columns", k_fit - kept.len());
    }
    Ok(SmoothingDesign { fit: w_fit.select_columns(&kept), predict: w_pred.select_columns(&kept) })
}

/// One draw of (beta, sigma_S^2) from the flat normal-inverse-gamma posterior.
#[derive(Debug, Clone)]
pub struct SmoothingFit {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    /// Least-squares solution and residual sum of squares behind the draw.
    pub beta_hat: DVector<f64>,
    pub rss: f64,
}

/// Conjugate posterior pieces for a fixed design, reusable across draws.
#[derive(Debug, Clone)]
pub struct ConjugatePosterior {
    chol_l: DMatrix<f64>,
    beta_hat: DVector<f64>,
    rss: f64,
    n: usize,
    k: usize,
}

impl ConjugatePosterior {
    pub fn new(w: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (n, k) = w.shape();
        if y.len() != n {
            return Err(Error::LengthMismatch { column: "smoothing response".into(), expected: n, found: y.len() });
        }
        if n < k + 2 {
            return Err(Error::SmoothingRankDeficient { rows: n, cols: k });
        }
        let wtw = w.tr_mul(w);
        let Some(chol) = wtw.cholesky() else {
            return Err(Error::SmoothingRankDeficient { rows: n, cols: k });
        };
        let yv = DVector::from_column_slice(y);
        let beta_hat = chol.solve(&w.tr_mul(&yv));
        let rss = (yv - w * &beta_hat).norm_squared();
        Ok(Self { chol_l: chol.l(), beta_hat, rss, n, k })
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn rss(&self) -> f64 {
        self.rss
    }

    /// sigma^2 ~ IG((n - k)/2, RSS/2), then beta ~ N(beta_hat, sigma^2 (W'W)^-1).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SmoothingFit {
        let shape = 0.5 * (self.n - self.k) as f64;
        let sigma2 = if self.rss > 0.0 {
            stats::inverse_gamma(shape, 0.5 * self.rss, rng).max(SIGMA2_FLOOR)
        } else {
            SIGMA2_FLOOR
        };
        let z = DVector::from_fn(self.k, |_, _| std_normal(rng));
        // L' u = z gives u ~ N(0, (L L')^-1).
        let u = self.chol_l.transpose().solve_upper_triangular(&z).expect("nonsingular Cholesky factor");
        SmoothingFit { beta: &self.beta_hat + u * sigma2.sqrt(), sigma2, beta_hat: self.beta_hat.clone(), rss: self.rss }
    }
}

pub fn fit_smoothing_draw<R: Rng + ?Sized>(w: &DMatrix<f64>, y: &[f64], rng: &mut R) -> Result<SmoothingFit> {
    Ok(ConjugatePosterior::new(w, y)?.draw(rng))
}

/// Extra predictive variance for a non-overlap unit at distance `d`.
pub fn tau(d: f64, t_o: f64, multiplier: f64) -> f64 {
    multiplier * d * t_o
}

/// Posterior-predictive effects for the prediction rows. Continuous draws
/// have variance sigma_S^2 + tau; binary draws are made on the arcsine scale
/// with variance sigma_S^2 and mapped back to [-1, 1].
pub fn predict_rn_draw<R: Rng + ?Sized>(
    fit: &SmoothingFit,
    w: &DMatrix<f64>,
    d: &[f64],
    t_o: f64,
    config: &SmoothingConfig,
    outcome: OutcomeType,
    rng: &mut R,
) -> Vec<f64> {
    let mean = w * &fit.beta;
    mean.iter()
        .zip(d)
        .map(|(&m, &dist)| match outcome {
            OutcomeType::Continuous => {
                let var = fit.sigma2 + tau(dist, t_o, config.tau_multiplier);
                m + var.sqrt() * std_normal(rng)
            }
            OutcomeType::Binary => arcsine_inverse(m + fit.sigma2.sqrt() * std_normal(rng)),
        })
        .collect()
}

/// arcsin on [-1, 1]; inputs a hair outside are clamped, others rejected.
pub fn arcsine_forward(v: f64) -> Result<f64> {
    if !(v.abs() <= 1.0 + ARCSINE_SLACK) {
        return Err(Error::ArcsineDomain(v));
    }
    Ok(v.clamp(-1.0, 1.0).asin())
}

pub fn arcsine_inverse(v: f64) -> f64 {
    v.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn pos3(x: f64) -> f64 {
        x.max(0.0).powi(3)
    }

    #[test]
    fn basis_matches_hand_evaluation() {
        let b = RcsBasis::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = b.eval(2.5);
        // c_1(2.5) = [(2.5)^3 - (-0.5)_+^3 * 4/1 + (-1.5)_+^3 * 3/1] / 16
        assert!((v[1] - 2.5f64.powi(3) / 16.0).abs() < 1e-14);
        // c_2(2.5) = 1.5^3 / 16, c_3(2.5) = 0.5^3 / 16
        assert!((v[2] - 1.5f64.powi(3) / 16.0).abs() < 1e-14);
        assert!((v[3] - 0.5f64.powi(3) / 16.0).abs() < 1e-14);
        let z = 5.3;
        let expect = (pos3(z - 1.0) - pos3(z - 3.0) * 3.0 + pos3(z - 4.0) * 2.0) / 16.0;
        assert!((b.eval(z)[2] - expect).abs() < 1e-12);
        assert_eq!(b.n_columns(), 4);
    }

    #[test]
    fn nonlinear_columns_vanish_below_first_knot_and_are_linear_beyond_last() {
        let b = RcsBasis::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        for z in [-3.0, 0.0, 1.0] {
            assert!(b.eval(z)[1..].iter().all(|&c| c == 0.0));
        }
        for j in 1..4 {
            let f = |z: f64| b.eval(z)[j];
            let second = f(8.0) - 2.0 * f(7.0) + f(6.0);
            assert!(second.abs() < 1e-9);
        }
    }

    #[test]
    fn linear_signal_is_reproduced_by_the_linear_column() {
        let z: Vec<f64> = (0..50).map(|i| i as f64 / 7.0).collect();
        let b = RcsBasis::from_quantiles(&z, 5).unwrap();
        let w = DMatrix::from_fn(50, 5, |i, j| if j == 0 { 1.0 } else { b.eval(z[i])[j - 1] });
        let post = ConjugatePosterior::new(&w, &z.iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
        let bh = post.beta_hat();
        assert!((bh[1] - 2.0).abs() < 1e-8 && bh[0].abs() < 1e-8);
        assert!(bh.iter().skip(2).all(|c| c.abs() < 1e-6));
        assert!(post.rss() < 1e-16);
        let mut r = rng::from_seed(1);
        assert_eq!(post.draw(&mut r).sigma2, SIGMA2_FLOOR);
    }

    #[test]
    fn knots_shrink_with_few_distinct_values() {
        let v = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let b = RcsBasis::from_quantiles(&v, 5).unwrap();
        assert_eq!(b.knots().len(), 3);
        assert!(RcsBasis::from_quantiles(&[1.0, 1.0, 2.0], 5).is_none());
    }

    #[test]
    fn trimming_drops_two_percent_per_tail() {
        let ps: Vec<f64> = (0..500).map(|i| ((i * 7919) % 500) as f64).collect();
        let kept = trimmed_positions(&ps, 0.02);
        assert_eq!(kept.len(), 480);
        assert!(kept.iter().all(|&i| ps[i] >= 10.0 && ps[i] < 490.0));
    }

    #[test]
    fn design_prunes_constant_covariates() {
        let n = 40;
        let fit = SmoothingRows {
            ps: (0..n).map(|i| i as f64 / n as f64).collect(),
            ystar: (0..n).map(|i| ((i * 13) % 17) as f64).collect(),
            covariates: vec![vec![1.0; n], (0..n).map(|i| (i % 2) as f64).collect()],
        };
        let pred = SmoothingRows { ps: vec![1.1], ystar: vec![3.0], covariates: vec![vec![1.0], vec![0.0]] };
        let d = build_design(&fit, &pred, &SmoothingConfig::default(), OutcomeType::Continuous).unwrap();
        assert_eq!(d.fit.ncols(), 1 + 4 + 4 + 1);
        assert_eq!(d.predict.ncols(), d.fit.ncols());
        let bin = build_design(&fit, &pred, &SmoothingConfig::default(), OutcomeType::Binary).unwrap();
        assert_eq!(bin.fit.ncols(), 1 + 4 + 1 + 1);
    }

    #[test]
    fn tau_arithmetic_and_arcsine_pair() {
        assert!((tau(0.1, 2.0, 10.0) - 2.0).abs() < 1e-15);
        assert_eq!(arcsine_forward(0.0).unwrap(), 0.0);
        assert_eq!(arcsine_inverse(0.0), 0.0);
        assert_eq!(arcsine_inverse(2.0), 1.0);
        assert_eq!(arcsine_forward(1.0 + 5e-13).unwrap(), std::f64::consts::FRAC_PI_2);
        assert!(arcsine_forward(1.001).is_err());
        for i in 0..=200 {
            let x = -1.0 + i as f64 / 100.0;
            assert!((arcsine_inverse(arcsine_forward(x).unwrap()) - x).abs() < 1e-12);
        }
    }
}

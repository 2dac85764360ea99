//! Bayesian bootstrap marginalization of individual effects.
//!
//! Weight vector `k` of iteration `m` is drawn from its own stream, so the
//! one randomly selected mean can be computed without materializing the
//! other `B - 1`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::rng;

/// Dirichlet(1, ..., 1)-weighted mean of `values`, kept inside their range.
pub fn dirichlet_weighted_mean<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> f64 {
    let g: Vec<f64> = values.iter().map(|_| Exp1.sample(rng)).collect();
    let total: f64 = g.iter().sum();
    let mean: f64 = g.iter().zip(values).map(|(w, v)| (w / total) * v).sum();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    mean.clamp(lo, hi)
}

/// Index of the bootstrap replicate selected for the iteration keyed by
/// `seed`.
fn selected_index(seed: u64, b: usize) -> usize {
    rng::stream(seed, rng::tag::BOOTSTRAP, 0).random_range(0..b)
}

fn replicate_mean(values: &[f64], seed: u64, k: usize) -> f64 {
    dirichlet_weighted_mean(values, &mut rng::stream(seed, rng::tag::BOOTSTRAP, 1 + k as u64))
}

/// All `b` bootstrap means for the iteration keyed by `seed`.
pub fn bootstrap_means(values: &[f64], b: usize, seed: u64) -> Vec<f64> {
    (0..b).map(|k| replicate_mean(values, seed, k)).collect()
}

/// One population-effect draw: `b` Bayesian-bootstrap means, one picked
/// uniformly at random. Equal to `bootstrap_means(values, b, seed)[k]` for
/// the selected `k`.
pub fn population_ace_draw(values: &[f64], b: usize, seed: u64) -> f64 {
    assert!(b >= 1 && !values.is_empty());
    replicate_mean(values, seed, selected_index(seed, b))
}

/// Like [`population_ace_draw`], also returning the selected index.
pub fn population_ace_draw_indexed(values: &[f64], b: usize, seed: u64) -> (usize, f64) {
    let k = selected_index(seed, b);
    (k, replicate_mean(values, seed, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_unit_returns_itself() {
        for s in 0..20 {
            assert_eq!(population_ace_draw(&[0.123456789], 1000, s), 0.123456789);
        }
    }

    #[test]
    fn selected_draw_equals_full_computation() {
        let v: Vec<f64> = (0..57).map(|i| ((i * 31) % 11) as f64 - 4.5).collect();
        for s in 0..5 {
            let all = bootstrap_means(&v, 200, s);
            let (k, draw) = population_ace_draw_indexed(&v, 200, s);
            assert_eq!(all[k].to_bits(), draw.to_bits());
        }
    }

    #[test]
    fn draws_stay_in_range() {
        let v = [-2.0, 0.5, 3.0];
        for s in 0..200 {
            let d = population_ace_draw(&v, 10, s);
            assert!((-2.0..=3.0).contains(&d));
        }
    }
}

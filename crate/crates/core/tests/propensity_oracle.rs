use bartspl::propensity::{
    estimate_ps, fit_logistic, fit_logistic_ps, CovariateLaw, LogisticOptions, MixtureDensitySpec,
    PropensityModelSpec,
};
use bartspl::rng;
use bartspl::simulation::Family;
use bartspl::{ObservationalDataset, OutcomeType};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Newton-Raphson on the exact log-likelihood, with a plain Gaussian
/// elimination for the step.
fn newton(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut beta = vec![0.0; k];
    for _ in 0..50 {
        let mut grad = vec![0.0; k];
        let mut hess = vec![vec![0.0; k]; k];
        for (row, &yi) in x.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = logistic(eta);
            for a in 0..k {
                grad[a] += (yi - p) * row[a];
                for b in 0..k {
                    hess[a][b] += p * (1.0 - p) * row[a] * row[b];
                }
            }
        }
        let step = solve(hess, grad);
        let size: f64 = step.iter().map(|s| s.abs()).fold(0.0, f64::max);
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
        }
        if size < 1e-12 {
            break;
        }
    }
    beta
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..k {
            let f = a[r][c] / a[c][c];
            for cc in c..k {
                a[r][cc] -= f * a[c][cc];
            }
            b[r] -= f * b[c];
        }
    }
    let mut out = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r][c] * out[c]).sum();
        out[r] = (b[r] - s) / a[r][r];
    }
    out
}

#[test]
fn large_sample_logistic_recovers_the_generating_law() {
    let truth = [-0.4, 0.8, -1.2];
    let mut r = rng::from_seed(100);
    let n = 100_000;
    let x1: Vec<f64> = (0..n).map(|_| r.random_range(0..2) as f64).collect();
    let x2: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let p = logistic(truth[0] + truth[1] * x1[i] + truth[2] * x2[i]);
            if r.random::<f64>() < p { 1.0 } else { 0.0 }
        })
        .collect();
    let fit = fit_logistic(&[x1.clone(), x2.clone()], &y, &LogisticOptions::default()).unwrap();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, x1[i], x2[i]]).collect();
    let oracle = newton(&rows, &y);
    for j in 0..3 {
        assert!((fit.coefficients[j] - oracle[j]).abs() < 1e-6, "coef {j}: {} vs {}", fit.coefficients[j], oracle[j]);
        let se = fit.standard_errors[j];
        assert!((fit.coefficients[j] - truth[j]).abs() < 3.0 * se, "coef {j}: {} vs {} (se {se})", fit.coefficients[j], truth[j]);
    }
    let rate = y.iter().sum::<f64>() / n as f64;
    let mean = fit.fitted.iter().sum::<f64>() / n as f64;
    assert!((mean - rate).abs() < 1e-6);
}

#[test]
fn bayes_rule_matches_direct_density_ratio() {
    let spec = Family::S31A { c: 0.0 }.mixture().unwrap();
    let phi = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    let num = 0.5 * 0.5 * phi(2.0, 2.0, 1.25);
    let den = num + 0.5 * 0.4 * phi(2.0, 1.0, 1.0);
    let p = spec.true_ps(&[1.0, 2.0]).unwrap();
    assert!((p - num / den).abs() < 1e-12);
    assert!((p - 0.648).abs() < 0.001, "{p}");
}

#[test]
fn bayes_rule_limits() {
    let law = vec![CovariateLaw::Bernoulli(0.3), CovariateLaw::Gaussian { mean: 1.0, variance: 2.0 }];
    let same = MixtureDensitySpec::new(0.5, law.clone(), law.clone()).unwrap();
    let other = vec![CovariateLaw::Bernoulli(0.9), CovariateLaw::Gaussian { mean: -3.0, variance: 0.5 }];
    let dominant = MixtureDensitySpec::new(0.999, law, other).unwrap();
    for x in [[0.0, -2.0], [1.0, 0.5], [1.0, 4.0]] {
        assert_eq!(same.true_ps(&x).unwrap(), 0.5);
        assert!(dominant.true_ps(&x).unwrap() > 0.9);
    }
}

#[test]
fn intercept_only_is_the_sample_rate() {
    let e: Vec<u8> = (0..500).map(|i| (i % 2) as u8).collect();
    let data = ObservationalDataset::new(vec![0.0; 500], e, vec![vec![1.0; 500]], OutcomeType::Continuous).unwrap();
    let ps = estimate_ps(&data, &PropensityModelSpec::Logistic, 0).unwrap();
    assert!(ps.iter().all(|p| (p - 0.5).abs() < 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logistic_scores_are_inside_and_average_to_the_rate(seed in 0u64..10_000, n in 40usize..300) {
        let mut r = rng::from_seed(seed);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let e: Vec<u8> = x.iter().map(|&v| (r.random::<f64>() < logistic(0.7 * v)) as u8).collect();
        prop_assume!(e.contains(&1) && e.contains(&0));
        let data = ObservationalDataset::new(vec![0.0; n], e.clone(), vec![x], OutcomeType::Continuous).unwrap();
        if let Ok(ps) = fit_logistic_ps(&data) {
            prop_assert!(ps.iter().all(|&p| p > 0.0 && p < 1.0));
            let rate = e.iter().map(|&g| g as f64).sum::<f64>() / n as f64;
            let mean = ps.iter().sum::<f64>() / n as f64;
            prop_assert!((mean - rate).abs() < 1e-6);
        }
    }
}

use bartspl::rng;
use bartspl::spline::{predict_rn_draw, tau, ConjugatePosterior, RcsBasis, SmoothingConfig};
use bartspl::OutcomeType;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_problem(n: usize, k: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut r = rng::from_seed(seed);
    let w = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { r.random_range(-2.0..2.0) });
    let y = (0..n)
        .map(|i| {
            let signal: f64 = (0..k).map(|j| w[(i, j)] * (j as f64 - 1.0)).sum();
            let z: f64 = StandardNormal.sample(&mut r);
            signal + 0.7 * z
        })
        .collect();
    (w, y)
}

/// Least squares through a QR factorization, independent of the normal
/// equations used by the posterior.
fn least_squares(w: &DMatrix<f64>, y: &[f64]) -> (DVector<f64>, f64) {
    let yv = DVector::from_column_slice(y);
    let qr = w.clone().qr();
    let qty = qr.q().transpose() * &yv;
    let beta = qr.r().solve_upper_triangular(&qty).unwrap();
    let rss = (&yv - w * &beta).norm_squared();
    (beta, rss)
}

#[test]
fn posterior_mean_of_beta_is_least_squares() {
    let (n, k) = (60, 5);
    let (w, y) = random_problem(n, k, 3);
    let (beta_ls, rss) = least_squares(&w, &y);
    let post = ConjugatePosterior::new(&w, &y).unwrap();
    let mut r = rng::from_seed(11);
    let draws = 10_000;
    let mut sum = DVector::zeros(k);
    let mut sumsq = DVector::zeros(k);
    let mut s2 = 0.0;
    for _ in 0..draws {
        let d = post.draw(&mut r);
        sum += &d.beta;
        sumsq += d.beta.component_mul(&d.beta);
        s2 += d.sigma2;
    }
    let m = draws as f64;
    for j in 0..k {
        let mean = sum[j] / m;
        let var = sumsq[j] / m - mean * mean;
        let mcse = (var / m).sqrt();
        assert!((mean - beta_ls[j]).abs() < 3.0 * mcse, "beta[{j}] {mean} vs {} (mcse {mcse})", beta_ls[j]);
    }
    let expected = rss / (n - k - 2) as f64;
    assert!(((s2 / m) / expected - 1.0).abs() < 0.02, "sigma2 {} vs {expected}", s2 / m);
}

#[test]
fn posterior_pieces_match_closed_form() {
    let (w, y) = random_problem(40, 3, 8);
    let (beta_ls, rss) = least_squares(&w, &y);
    let post = ConjugatePosterior::new(&w, &y).unwrap();
    assert!((post.beta_hat() - &beta_ls).amax() < 1e-10);
    assert!((post.rss() - rss).abs() < 1e-9 * rss.max(1.0));
    assert!(ConjugatePosterior::new(&w.columns(0, 3).into_owned(), &y[..3]).is_err());
}

fn pos3(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

#[test]
fn basis_matches_truncated_power_expression() {
    let t = [0.0, 1.0, 2.0, 3.0, 4.0];
    let basis = RcsBasis::new(t.to_vec()).unwrap();
    for &z in &[-1.0, 0.5, 2.5, 3.7, 6.0] {
        let v = basis.eval(z);
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], z);
        let scale = (t[4] - t[0]) * (t[4] - t[0]);
        for j in 0..3 {
            let c = pos3(z - t[j]) - pos3(z - t[3]) * (t[4] - t[j]) / (t[4] - t[3])
                + pos3(z - t[4]) * (t[3] - t[j]) / (t[4] - t[3]);
            assert!((v[j + 1] - c / scale).abs() < 1e-12, "z={z} j={j}: {} vs {}", v[j + 1], c / scale);
        }
    }
}

struct Moments {
    var_theory: f64,
    var_empirical: f64,
}

/// Draw variance at one prediction row for each distance in `ds`.
fn predictive_moments(ds: &[f64], t_o: f64, draws: usize, seed: u64) -> Vec<Moments> {
    let (n, k) = (50, 4);
    let (w, y) = random_problem(n, k, 21);
    let post = ConjugatePosterior::new(&w, &y).unwrap();
    let x0 = DVector::from_vec(vec![1.0, 0.4, -0.8, 1.1]);
    let rows = DMatrix::from_fn(ds.len(), k, |_, j| x0[j]);
    let cfg = SmoothingConfig::default();
    let mut r = rng::from_seed(seed);
    let mut sum = vec![0.0; ds.len()];
    let mut sumsq = vec![0.0; ds.len()];
    for _ in 0..draws {
        let fit = post.draw(&mut r);
        let out = predict_rn_draw(&fit, &rows, ds, t_o, &cfg, OutcomeType::Continuous, &mut r);
        for (q, v) in out.iter().enumerate() {
            sum[q] += v;
            sumsq[q] += v * v;
        }
    }
    // Law of total variance: E[sigma2] + tau + Var(x0' beta), where
    // Var(x0' beta) = E[sigma2] x0' (W'W)^-1 x0 under the flat prior.
    let (_, rss) = least_squares(&w, &y);
    let e_sigma2 = rss / (n - k - 2) as f64;
    let wtw_inv = (w.transpose() * &w).try_inverse().unwrap();
    let lever = (x0.transpose() * wtw_inv * &x0)[(0, 0)];
    let m = draws as f64;
    ds.iter()
        .enumerate()
        .map(|(q, &d)| {
            let mean = sum[q] / m;
            Moments {
                var_theory: e_sigma2 * (1.0 + lever) + tau(d, t_o, cfg.tau_multiplier),
                var_empirical: (sumsq[q] / m - mean * mean) * m / (m - 1.0),
            }
        })
        .collect()
}

#[test]
fn predictive_variance_rises_with_distance_and_matches_total_variance() {
    let ds = [0.01, 0.05, 0.1, 0.2];
    let moments = predictive_moments(&ds, 1.3, 100_000, 5);
    for pair in moments.windows(2) {
        assert!(pair[1].var_theory > pair[0].var_theory);
        assert!(pair[1].var_empirical > pair[0].var_empirical);
    }
    for (m, d) in moments.iter().zip(ds) {
        let rel = m.var_empirical / m.var_theory - 1.0;
        assert!(rel.abs() < 0.05, "d={d}: {} vs {}", m.var_empirical, m.var_theory);
    }
}

#[test]
fn tau_adds_two_at_five_hundredths_with_range_four() {
    assert!((tau(0.05, 4.0, 10.0) - 2.0).abs() < 1e-12);
    let moments = predictive_moments(&[0.05], 4.0, 10_000, 9);
    let rel = moments[0].var_empirical / moments[0].var_theory - 1.0;
    assert!(rel.abs() < 0.05, "{} vs {}", moments[0].var_empirical, moments[0].var_theory);
}

#[test]
fn binary_draws_stay_in_unit_interval() {
    let (w, y) = random_problem(30, 3, 4);
    let y: Vec<f64> = y.iter().map(|v| v.tanh()).collect();
    let post = ConjugatePosterior::new(&w, &y).unwrap();
    let rows = DMatrix::from_fn(5, 3, |i, j| if j == 0 { 1.0 } else { 3.0 * i as f64 - 6.0 });
    let mut r = rng::from_seed(2);
    for _ in 0..2000 {
        let fit = post.draw(&mut r);
        let out =
            predict_rn_draw(&fit, &rows, &[0.5; 5], 2.0, &SmoothingConfig::default(), OutcomeType::Binary, &mut r);
        assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

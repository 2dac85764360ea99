use bartspl::estimator::{prepare, BartSplConfig};
use bartspl::overlap::{IntervalLength, OverlapParams};
use bartspl::simulation::{
    frozen_covariate, generate_dataset, generate_replicate, oracle_true_ace, DgpSpec, Family, S33_OVERLAP,
    S33_SETTINGS,
};
use bartspl::OutcomeType;

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[test]
fn binary_response_at_the_origin() {
    let (p1, p0) = Family::B2A { c: 0.0 }.potential_means(&[0.0, 0.0]);
    assert!((p1 - 0.731).abs() < 5e-4, "{p1}");
    assert_eq!(p0, 0.5);
    let (p1, p0) = Family::B2A { c: 0.0 }.potential_means(&[1.0, 2.0]);
    assert!((p1 - logistic(0.5f64.exp() + 1.0)).abs() < 1e-15);
    assert!((p0 - logistic(1.6 + 0.25)).abs() < 1e-15);
}

#[test]
fn single_confounder_truth_is_the_frozen_average() {
    for family in [Family::S33A { v: 0.75, w: 1.44 }, Family::S33B { v: 0.0, w: 1.0 }] {
        let spec = DgpSpec::new(family);
        let z = frozen_covariate(&spec, 99).unwrap();
        let direct: f64 = z
            .iter()
            .map(|&v| {
                let y0 = match family {
                    Family::S33A { .. } => 1.5 + (v + v * v / 2.0) / 20.0,
                    _ => 1.5 + (v + v * v / 2.0 + v * v * v / 6.0) / 20.0,
                };
                logistic(v - 1.0) - y0
            })
            .sum::<f64>()
            / z.len() as f64;
        let truth = oracle_true_ace(&spec, 99, 10).unwrap();
        assert!((truth.value - direct).abs() < 1e-12);
        assert_eq!(truth.se, 0.0);
    }
}

#[test]
fn monte_carlo_truth_is_stable_across_seeds() {
    for family in [Family::S31A { c: 0.35 }, Family::B2B { c: 0.0 }] {
        let spec = DgpSpec::new(family);
        let a = oracle_true_ace(&spec, 1, 2_000_000).unwrap();
        let b = oracle_true_ace(&spec, 2, 2_000_000).unwrap();
        let se = (a.se * a.se + b.se * b.se).sqrt();
        assert!(a.se > 0.0 && (a.value - b.value).abs() < 3.0 * se, "{family}: {a:?} {b:?}");
    }
}

#[test]
fn replicates_share_the_frozen_confounder() {
    let spec = DgpSpec::new(Family::S33A { v: 1.4, w: 1.96 });
    let z = frozen_covariate(&spec, 5).unwrap();
    let r1 = generate_replicate(&spec, Some(&z), 5, 0).unwrap();
    let r2 = generate_replicate(&spec, Some(&z), 5, 1).unwrap();
    assert_eq!(r1.dataset.covariate(0), &z[..]);
    assert_eq!(r2.dataset.covariate(0), &z[..]);
    assert_ne!(r1.dataset.y(), r2.dataset.y());
    assert_eq!(r1.dataset.provided_ps().unwrap(), &z[..]);
}

#[test]
fn generated_outcomes_match_their_family() {
    let rep = generate_dataset(&DgpSpec::new(Family::B2B { c: 0.0 }), 3).unwrap();
    assert_eq!(rep.dataset.outcome_type(), OutcomeType::Binary);
    assert!(rep.dataset.y().iter().all(|&v| v == 0.0 || v == 1.0));
    let rep = generate_dataset(&DgpSpec::new(Family::S31A { c: 0.0 }), 3).unwrap();
    for i in 0..rep.dataset.n() {
        assert!((rep.y1[i] - rep.y0[i] - rep.effects[i]).abs() < 1e-12);
    }
    let ps = rep.dataset.provided_ps().unwrap();
    assert!(ps.iter().all(|&p| p > 0.0 && p < 1.0));
    let rep = generate_dataset(&DgpSpec::new(Family::S32 { extra: 3 }), 3).unwrap();
    assert_eq!(rep.dataset.p(), 13);
    assert_eq!(rep.dataset.e().iter().filter(|&&g| g == 1).count(), 250);
}

fn mean_pi(family: Family, a: f64, b: usize, masters: u64) -> f64 {
    let spec = DgpSpec::new(family);
    let overlap = OverlapParams { a: IntervalLength::Fraction(a), b, ..family.default_overlap() };
    let cfg = BartSplConfig { overlap, propensity: family.propensity_spec(), ..Default::default() };
    let total: f64 = (0..masters)
        .map(|m| {
            let rep = generate_dataset(&spec, 1000 + m).unwrap();
            prepare(&rep.dataset, &cfg).unwrap().partition.pi
        })
        .sum();
    total / masters as f64
}

#[test]
fn least_overlapping_setting_leaves_about_a_fifth_out() {
    let pi = mean_pi(Family::S33A { v: 0.0, w: 1.0 }, 0.1, 10, 40);
    assert!((pi - 0.21).abs() < 0.05, "{pi}");
}

#[test]
fn non_overlap_grows_with_separation_and_shrinks_with_looser_rules() {
    let table: Vec<Vec<f64>> = S33_SETTINGS
        .iter()
        .map(|&(v, w)| S33_OVERLAP.iter().map(|&(a, b)| mean_pi(Family::S33A { v, w }, a, b, 10)).collect())
        .collect();
    for row in &table {
        assert!(row[0] > row[1] && row[1] > row[2], "{table:?}");
    }
    for col in 0..3 {
        assert!(table[0][col] < table[1][col] && table[1][col] < table[2][col], "{table:?}");
    }
}

#[test]
fn printed_formula_points() {
    let (y1, y0) = Family::S31A { c: 0.0 }.potential_means(&[0.0, 1.0]);
    assert_eq!((y1, y0), (-1.5, -1.5));
    let s33 = Family::S33A { v: 1.4, w: 1.96 };
    assert_eq!(s33.potential_means(&[0.0]).1, 1.5);
    assert_eq!(s33.potential_means(&[1.0]).0, 0.5);
}

#[test]
fn strict_rule_keeps_the_frozen_confounder_study() {
    use bartspl::bart::BartHyperParams;
    use bartspl::estimator::Method;
    use bartspl::simulation::{run_study, StudyConfig};
    let family = Family::S33A { v: 0.0, w: 1.0 };
    let study = StudyConfig {
        estimator: BartSplConfig {
            bart: BartHyperParams { trees: 10, burn_in: 20, draws: 40, ..Default::default() },
            bootstrap_draws: 20,
            seed: 3,
            ..Default::default()
        },
        overlap: Some(OverlapParams { a: IntervalLength::Fraction(0.05), b: 10, ..family.default_overlap() }),
        ..Default::default()
    };
    let report = run_study(&DgpSpec::new(family), &[Method::BartSpl], 2, &study).unwrap();
    assert_eq!((report.attempted, report.accepted), (2, 2));
    assert!(report.mean_pi > 0.15, "{}", report.mean_pi);
}

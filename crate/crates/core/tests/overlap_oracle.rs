use bartspl::overlap::{
    assign_regions, compute_overlap_intervals, screen_interior_gaps, GapSide, Interval, IntervalLength,
    OverlapParams, Region, TailPolicy,
};
use proptest::prelude::*;

const GRID: usize = 10_000;
const EDGE: f64 = 1e-9;

fn params(a: f64, b: usize) -> OverlapParams {
    OverlapParams { a: IntervalLength::Absolute(a), b, ..OverlapParams::default() }
}

/// Pointwise membership straight from the set definition, without sorting:
/// a point o of P is covered by a group when some set of more than b of the
/// group's scores, together with o, has range below a. Taking the set's
/// minimum as the left end L, that means more than b scores in [L, L + a)
/// for some L in (o - a, o] that is o itself or one of the scores.
fn covered(o: f64, scores: &[f64], a: f64, b: usize) -> bool {
    let candidates = std::iter::once(o).chain(scores.iter().copied().filter(|&s| s > o - a && s <= o));
    for left in candidates {
        let count = scores.iter().filter(|&&s| s >= left && s < left + a).count();
        if count > b {
            return true;
        }
    }
    false
}

fn oracle_member(o: f64, groups: &[Vec<f64>; 2], lo: f64, hi: f64, a: f64, b: usize) -> bool {
    o >= lo && o <= hi && groups.iter().all(|g| covered(o, g, a, b))
}

fn in_union(o: f64, intervals: &[Interval]) -> bool {
    intervals.iter().any(|iv| iv.contains(o))
}

/// Points where membership may legitimately flip: the scores, the scores
/// shifted by a, and the ends of P.
fn near_boundary(o: f64, all: &[f64], a: f64) -> bool {
    all.iter().any(|&s| (o - s).abs() < EDGE || (o - s - a).abs() < EDGE || (o - s + a).abs() < EDGE)
}

fn grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..GRID).map(move |k| lo + (hi - lo) * k as f64 / (GRID - 1) as f64)
}

fn split(ps: &[f64], e: &[u8]) -> [Vec<f64>; 2] {
    let pick = |g: u8| ps.iter().zip(e).filter(|(_, &x)| x == g).map(|(&p, _)| p).collect();
    [pick(0), pick(1)]
}

/// Scores on a 1/1000 lattice so ties are common, or continuous.
fn score() -> impl Strategy<Value = f64> {
    prop_oneof![(1u32..1000).prop_map(|k| k as f64 / 1000.0), 0.001f64..0.999]
}

fn config() -> impl Strategy<Value = (Vec<f64>, Vec<u8>, f64, usize)> {
    (1usize..30, 1usize..30, 0.005f64..0.6, 1usize..7).prop_flat_map(|(n0, n1, a, b)| {
        (prop::collection::vec(score(), n0 + n1), Just(n0), Just(n1), Just(a), Just(b)).prop_map(
            |(ps, n0, n1, a, b)| {
                let mut e = vec![0u8; n0];
                e.extend(std::iter::repeat_n(1u8, n1));
                (ps, e, a, b)
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn interval_union_matches_pointwise_definition((ps, e, a, b) in config()) {
        let o = compute_overlap_intervals(&ps, &e, &params(a, b)).unwrap();
        let groups = split(&ps, &e);
        let lo = ps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut disagreements = 0;
        for x in grid(lo, hi) {
            if near_boundary(x, &ps, a) {
                continue;
            }
            if in_union(x, &o) != oracle_member(x, &groups, lo, hi, a, b) {
                disagreements += 1;
            }
        }
        prop_assert_eq!(disagreements, 0, "O = {:?}", o);
        for w in o.windows(2) {
            prop_assert!(w[0].hi < w[1].lo);
        }
        for iv in &o {
            prop_assert!(iv.lo >= lo && iv.hi <= hi && iv.lo <= iv.hi);
        }
    }

    #[test]
    fn overlap_grows_with_a_and_shrinks_with_b((ps, e, a, b) in config(), grow in 1.0f64..3.0) {
        let base = compute_overlap_intervals(&ps, &e, &params(a, b)).unwrap();
        let wider = compute_overlap_intervals(&ps, &e, &params(a * grow, b)).unwrap();
        let stricter = compute_overlap_intervals(&ps, &e, &params(a, b + 1)).unwrap();
        let lo = ps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for x in grid(lo, hi) {
            if in_union(x, &base) {
                prop_assert!(in_union(x, &wider), "x = {} lost when a grows", x);
            }
            if in_union(x, &stricter) {
                prop_assert!(in_union(x, &base), "x = {} gained when b grows", x);
            }
        }
        let pi = |a: f64, b: usize| assign_regions(&ps, &e, &params(a, b)).unwrap().pi;
        prop_assert!(pi(a * grow, b) <= pi(a, b));
        prop_assert!(pi(a, b + 1) >= pi(a, b));
    }

    #[test]
    fn partition_labels_follow_intervals((ps, e, a, b) in config()) {
        let part = assign_regions(&ps, &e, &params(a, b)).unwrap();
        for (i, &p) in ps.iter().enumerate() {
            let inside = in_union(p, &part.intervals);
            prop_assert_eq!(part.labels[i] == Region::Ro, inside);
            if inside {
                prop_assert_eq!(part.d[i], 0.0);
            } else if part.intervals.is_empty() {
                prop_assert!(part.d[i].is_infinite());
            } else {
                let nearest = ps
                    .iter()
                    .zip(&part.labels)
                    .filter(|(_, &l)| l == Region::Ro)
                    .map(|(&q, _)| (q - p).abs())
                    .fold(f64::INFINITY, f64::min);
                prop_assert_eq!(part.d[i], nearest);
            }
        }
        let rn = part.labels.iter().filter(|&&l| l == Region::Rn).count();
        prop_assert_eq!(part.pi, rn as f64 / ps.len() as f64);
        let gap_units: usize = part.gaps.iter().map(|g| g.units.len()).sum();
        prop_assert_eq!(gap_units, rn);
    }
}

#[test]
fn staggered_groups_cover_all_of_p() {
    let ps = [0.1, 0.2, 0.3, 0.15, 0.25, 0.35];
    let e = [1, 1, 1, 0, 0, 0];
    let o = compute_overlap_intervals(&ps, &e, &params(0.3, 2)).unwrap();
    assert_eq!(o.len(), 1);
    assert!((o[0].lo - 0.1).abs() < 1e-12 && (o[0].hi - 0.35).abs() < 1e-12);
    let groups = split(&ps, &e);
    for x in grid(0.1, 0.35) {
        if !near_boundary(x, &ps, 0.3) {
            assert!(oracle_member(x, &groups, 0.1, 0.35, 0.3, 2), "{x}");
        }
    }
    assert!(assign_regions(&ps, &e, &params(0.3, 2)).unwrap().rn_units().is_empty());
}

#[test]
fn unexposed_stopping_early_excludes_the_right_tail() {
    let exposed: Vec<f64> = (0..60).map(|k| 0.01 + 0.98 * k as f64 / 59.0).collect();
    let unexposed: Vec<f64> = (0..60).map(|k| 0.02 + 0.55 * k as f64 / 59.0).collect();
    let ps: Vec<f64> = exposed.iter().chain(&unexposed).copied().collect();
    let e: Vec<u8> = [vec![1u8; 60], vec![0u8; 60]].concat();
    let part = assign_regions(&ps, &e, &params(0.1, 3)).unwrap();
    let last = part.intervals.last().unwrap();
    assert!(last.hi < 0.65, "{:?}", part.intervals);
    let groups = split(&ps, &e);
    for x in grid(last.hi + 0.01, 0.99) {
        assert!(!oracle_member(x, &groups, 0.01, 0.99, 0.1, 3));
    }
    let right = part.gaps.iter().find(|g| g.side == GapSide::Right).unwrap();
    assert!(right.units.iter().all(|&i| e[i] == 1));
}

#[test]
fn four_unit_interior_gap_is_absorbed() {
    // Dense common support with four exposed units sitting alone in a hole.
    let mut ps = Vec::new();
    let mut e = Vec::new();
    for k in 0..40 {
        let p = 0.1 + 0.01 * k as f64;
        if !(0.25..0.36).contains(&p) {
            ps.extend([p, p + 0.002]);
            e.extend([1u8, 0]);
        }
    }
    ps.extend([0.29, 0.30, 0.31, 0.32]);
    e.extend([1u8; 4]);
    let params = OverlapParams { a: IntervalLength::Absolute(0.03), b: 2, interior_gap_max: 10, tails: TailPolicy::RightTail };
    let raw = assign_regions(&ps, &e, &params).unwrap();
    assert!(raw.gaps.iter().any(|g| g.side == GapSide::Interior && g.units.len() == 4), "{:?}", raw.gaps);
    let (screened, verdict) = screen_interior_gaps(&ps, &raw, &params);
    assert!(verdict.accepted);
    assert_eq!(verdict.relabeled, 4);
    assert!(screened.rn_units().is_empty());
}

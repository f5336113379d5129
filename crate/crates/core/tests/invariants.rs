//! Property tests over the public API.

use std::collections::{BTreeMap, VecDeque};

use geognn::featpipe::{normalize_apply, normalize_fit, split_counts, stratified_split, Split};
use geognn::graphstore::{sample_all_seeds, sample_ego, EntityClass, FanoutSpec, TransactionGraph};
use geognn::manifold::{
    exp_map0, hyperbolic_distance, klein_mean, klein_to_poincare, log_map0, poincare_to_klein, Curvature,
    KleinMeanMode, PoincarePoint, TangentVector, CURVATURE_GRID,
};
use geognn::rng;
use geognn::trainer::MetricsReport;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn curvature() -> impl Strategy<Value = Curvature> {
    prop::sample::select(CURVATURE_GRID.to_vec()).prop_map(|c| Curvature::new(c).unwrap())
}

/// A vector of norm at most `max`.
fn bounded(dim: std::ops::RangeInclusive<usize>, max: f64) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, dim), 0.0..=1.0f64).prop_map(move |(v, t)| {
        let n = norm(&v);
        if n == 0.0 {
            v
        } else {
            v.iter().map(|x| x / n * t * max).collect()
        }
    })
}

/// A point strictly inside the ball of curvature `c`, away from the margin.
fn ball_point(c: Curvature, dim: usize) -> impl Strategy<Value = PoincarePoint> {
    bounded(dim..=dim, 0.999 / c.sqrt()).prop_map(move |v| PoincarePoint::new(v, c).unwrap())
}

fn inside(x: &PoincarePoint) -> bool {
    norm(x.coords()) <= x.curvature().max_norm() * (1.0 + 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn log_inverts_exp(c in curvature(), v in bounded(1..=16, 3.0)) {
        let back = log_map0(&exp_map0(&TangentVector::new(v.clone(), c).unwrap()).unwrap()).unwrap();
        let err = norm(&back.coords().iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!(err <= 1e-6 * norm(&v).max(1.0), "error {err}");
    }

    #[test]
    fn exp_inverts_log(
        (c, x) in curvature().prop_flat_map(|c| (Just(c), (1usize..=16).prop_flat_map(move |d| ball_point(c, d))))
    ) {
        let back = exp_map0(&log_map0(&x).unwrap()).unwrap();
        let err = norm(&back.coords().iter().zip(x.coords()).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!(err <= 1e-6, "error {err} at c={}", c.value());
    }

    #[test]
    fn klein_round_trip(
        x in curvature().prop_flat_map(|c| (1usize..=16).prop_flat_map(move |d| ball_point(c, d)))
    ) {
        let back = klein_to_poincare(&poincare_to_klein(&x));
        for (a, b) in back.coords().iter().zip(x.coords()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn klein_mean_stays_in_ball(
        points in (curvature(), 1usize..=8, 1usize..=10)
            .prop_flat_map(|(c, d, n)| prop::collection::vec(ball_point(c, d), n))
    ) {
        for mode in [KleinMeanMode::Unweighted, KleinMeanMode::LorentzWeighted] {
            prop_assert!(inside(&klein_mean(&points, mode).unwrap()));
        }
        let single = klein_mean(&points[..1], KleinMeanMode::Unweighted).unwrap();
        for (a, b) in single.coords().iter().zip(points[0].coords()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn distance_triangle_inequality(
        [x, y, z] in (curvature(), 1usize..=8)
            .prop_flat_map(|(c, d)| [ball_point(c, d), ball_point(c, d), ball_point(c, d)])
    ) {
        let xy = hyperbolic_distance(&x, &y).unwrap();
        let yz = hyperbolic_distance(&y, &z).unwrap();
        let xz = hyperbolic_distance(&x, &z).unwrap();
        prop_assert!(xz <= xy + yz + 1e-9, "{xz} > {xy} + {yz}");
    }

    #[test]
    fn exp_norm_monotone_in_radius(c in curvature(), v in bounded(1..=8, 3.0), s in 0.0..1.0f64) {
        let short: Vec<f64> = v.iter().map(|x| x * s).collect();
        let a = exp_map0(&TangentVector::new(short, c).unwrap()).unwrap();
        let b = exp_map0(&TangentVector::new(v, c).unwrap()).unwrap();
        prop_assert!(norm(a.coords()) <= norm(b.coords()) + 1e-15);
    }
}

/// Random directed multigraph with parallel edges and self-loops.
fn graph() -> impl Strategy<Value = TransactionGraph> {
    (2usize..=60).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..=4 * n)
            .prop_map(move |edges| TransactionGraph::new(n, edges, vec![], vec![], vec![None; n]).unwrap())
    })
}

fn fanouts() -> impl Strategy<Value = FanoutSpec> {
    prop::collection::vec(1usize..=4, 1..=3).prop_map(|f| FanoutSpec::new(f).unwrap())
}

fn bfs(g: &TransactionGraph, seed: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; g.node_count()];
    dist[seed] = Some(0);
    let mut queue = VecDeque::from([seed]);
    while let Some(v) = queue.pop_front() {
        for &u in g.neighbors(v) {
            if dist[u].is_none() {
                dist[u] = Some(dist[v].unwrap() + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampled_subgraphs_are_complete_and_bounded(g in graph(), spec in fanouts(), master in any::<u64>()) {
        let seeds: Vec<usize> = (0..g.node_count()).collect();
        let subs = sample_all_seeds(&g, &seeds, &spec, master).unwrap();
        for sub in &subs {
            prop_assert!(sub.len() <= spec.node_bound());
            prop_assert_eq!(sub.nodes[0], sub.seed);
            prop_assert_eq!(sub.seed_index(), 0);

            // Every original edge between sampled nodes, parallel copies included.
            let local: BTreeMap<usize, u32> = sub.nodes.iter().enumerate().map(|(i, &n)| (n, i as u32)).collect();
            let mut expected: Vec<(u32, u32)> = g
                .edges()
                .iter()
                .filter_map(|(s, d)| Some((*local.get(s)?, *local.get(d)?)))
                .collect();
            let mut got = sub.edges.clone();
            expected.sort_unstable();
            got.sort_unstable();
            prop_assert_eq!(got, expected);

            let dist = bfs(&g, sub.seed);
            for (&n, &h) in sub.nodes.iter().zip(&sub.hop) {
                prop_assert!(h as usize <= spec.depth());
                prop_assert!(dist[n].is_some_and(|d| d <= h));
            }
        }

        // Each seed's sample depends only on (master seed, node id).
        let reversed: Vec<usize> = seeds.iter().rev().copied().collect();
        let again = sample_all_seeds(&g, &reversed, &spec, master).unwrap();
        for (a, b) in subs.iter().zip(again.iter().rev()) {
            prop_assert_eq!(a, b);
        }
        let seed = g.node_count() / 2;
        let single = sample_ego(&g, seed, &spec, &mut rng::stream(master, &[seed as u64])).unwrap();
        prop_assert_eq!(&single, &subs[seed]);
    }
}

fn finite_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        Just(-1.0),
        Just(1e300),
        Just(-1e300),
        Just(f64::MIN_POSITIVE),
        -1e6..1e12f64,
        (0.0..300.0f64).prop_map(|e| 10f64.powf(e)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalized_values_are_finite_unit_and_monotone(
        train in prop::collection::vec(prop::collection::vec(finite_value(), 3), 1..40),
        probe in prop::collection::vec(finite_value(), 3),
        bump in 0.0..1e6f64,
    ) {
        let names: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let stats = normalize_fit(&names, &[true, false, true], train.iter().map(Vec::as_slice)).unwrap();
        let mut data: Vec<f64> = train.concat();
        data.extend(&probe);
        normalize_apply(&mut data, &stats).unwrap();
        prop_assert!(data.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)));

        let larger: Vec<f64> = probe.iter().map(|x| if *x > 0.0 { x + bump } else { *x }).collect();
        let (mut lo, mut hi) = (probe.clone(), larger);
        normalize_apply(&mut lo, &stats).unwrap();
        normalize_apply(&mut hi, &stats).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(a <= b, "{a} > {b}");
        }
    }

    #[test]
    fn split_is_stratified_and_deterministic(
        counts in prop::collection::vec(0usize..120, EntityClass::COUNT),
        seed in any::<u64>(),
    ) {
        let mut labels = Vec::new();
        for (class, &n) in EntityClass::ALL.iter().zip(&counts) {
            for _ in 0..n {
                labels.push((labels.len(), *class));
            }
        }
        let a = stratified_split(&labels, seed);
        prop_assert_eq!(&a, &stratified_split(&labels, seed));
        prop_assert_eq!(a.len(), labels.len());
        for (class, &n) in EntityClass::ALL.iter().zip(&counts) {
            let got = Split::ALL.map(|s| a.seeds_of_class(s, *class).len());
            if n >= 3 {
                prop_assert_eq!(got, split_counts(n));
                for (k, f) in got.iter().zip([0.4, 0.3, 0.3]) {
                    prop_assert!((*k as f64 - f * n as f64).abs() <= 1.0);
                }
            } else {
                prop_assert_eq!(got, [n, 0, 0]);
            }
        }
    }

    #[test]
    fn macro_f1_is_mean_of_class_f1(
        pairs in prop::collection::vec((0..EntityClass::COUNT, 0..EntityClass::COUNT), 1..200)
    ) {
        let report = MetricsReport::from_pairs(pairs.iter().copied());
        let mean = report.per_class.iter().map(|m| m.f1).sum::<f64>() / report.per_class.len() as f64;
        prop_assert!((report.macro_f1 - mean).abs() <= 1e-12);
        prop_assert_eq!(report, MetricsReport::from_pairs(pairs));
    }
}

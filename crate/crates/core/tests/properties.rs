mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use radial_ot::colorlab::simplex_grid;
use radial_ot::discrete_ot::{empirical_w2, sinkhorn, solve_transport, SinkhornOptions};
use radial_ot::radial::pairwise_w2_squared;
use radial_ot::rw2::{rw2_distance, rw2_geodesic};
use radial_ot::{Generator, RadialDistribution, RadialMixture};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn generator(which: u8, d: usize) -> Generator {
    match which % 3 {
        0 => Generator::imq(d as f64 / 2.0 + 1.5).unwrap(),
        1 => Generator::compact(2.0).unwrap(),
        _ => Generator::gauss(),
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn gaussian_w2_matches_closed_form(
        d in 1usize..4,
        m0 in prop::collection::vec(-3.0f64..3.0, 3),
        m1 in prop::collection::vec(-3.0f64..3.0, 3),
        c0 in 0.1f64..3.0,
        c1 in 0.1f64..3.0,
    ) {
        // N(m, c^2 I) against N(m', c'^2 I): |m - m'|^2 + d (c - c')^2.
        let a = RadialDistribution::new(m0[..d].to_vec(), c0, Generator::gauss()).unwrap();
        let b = RadialDistribution::new(m1[..d].to_vec(), c1, Generator::gauss()).unwrap();
        let expected = sq(&m0[..d], &m1[..d]) + d as f64 * (c0 - c1).powi(2);
        let got = pairwise_w2_squared(&a, &b).unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn uniform_transport_matches_best_permutation(
        n in 1usize..6,
        costs in prop::collection::vec(0.0f64..10.0, 25),
    ) {
        let cost: Vec<Vec<f64>> = (0..n).map(|i| costs[i * 5..i * 5 + n].to_vec()).collect();
        let w = vec![1.0 / n as f64; n];
        let plan = solve_transport(&w, &w, &cost).unwrap();
        let best = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min);
        prop_assert!((plan.objective - best).abs() <= 1e-9);
        prop_assert!(plan.marginal_error() <= 1e-9);
    }

    #[test]
    fn transport_plan_respects_marginals(
        a in prop::collection::vec(0.05f64..1.0, 1..6),
        b in prop::collection::vec(0.05f64..1.0, 1..6),
        seed in any::<u64>(),
    ) {
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let a: Vec<f64> = a.iter().map(|x| x / sa).collect();
        let b: Vec<f64> = b.iter().map(|x| x / sb).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost: Vec<Vec<f64>> = (0..a.len())
            .map(|_| (0..b.len()).map(|_| rand::Rng::random::<f64>(&mut rng)).collect())
            .collect();
        let plan = solve_transport(&a, &b, &cost).unwrap();
        prop_assert!(plan.marginal_error() <= 1e-9);
        // Never worse than the independent coupling.
        let product: f64 = (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j)))
            .map(|(i, j)| a[i] * b[j] * cost[i][j]).sum();
        prop_assert!(plan.objective <= product + 1e-12);
        prop_assert!(plan.support().len() < a.len() + b.len());
    }

    #[test]
    fn sinkhorn_cost_bounds_the_exact_cost(
        n in 2usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<f64> = (0..2 * n).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (pts[i] - pts[n + j]).powi(2)).collect()).collect();
        let w = vec![1.0 / n as f64; n];
        let exact = solve_transport(&w, &w, &cost).unwrap().objective;
        let opts = SinkhornOptions::default();
        let ent = sinkhorn(&w, &w, &cost, 5e-2, opts).unwrap();
        prop_assert!(ent.transport_cost >= exact - 1e-7);
        // Plain Sinkhorn can stall when eps is small against the cost range,
        // so the marginal bound only holds for converged runs.
        prop_assert!(!ent.converged || ent.violation <= opts.tol);
    }

    #[test]
    fn empirical_w2_matches_brute_force(
        n in 1usize..6,
        xs in prop::collection::vec(-2.0f64..2.0, 20),
        ys in prop::collection::vec(-2.0f64..2.0, 20),
    ) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| xs[2 * i..2 * i + 2].to_vec()).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|i| ys[2 * i..2 * i + 2].to_vec()).collect();
        let best = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| sq(&x[i], &y[j])).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min);
        let got = empirical_w2(&x, &y).unwrap();
        prop_assert!((got - best).abs() <= 1e-10 * best.max(1.0));
    }

    #[test]
    fn rw2_is_a_metric_on_shared_generators(
        which in 0u8..3,
        d in 1usize..4,
        seed in any::<u64>(),
    ) {
        let g = generator(which, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::mixture(&mut rng, &g, d, 2);
        let b = common::mixture(&mut rng, &g, d, 3);
        let c = common::mixture(&mut rng, &g, d, 1);
        let ab = rw2_distance(&a, &b).unwrap().distance;
        let ba = rw2_distance(&b, &a).unwrap().distance;
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(rw2_distance(&a, &a).unwrap().distance, 0.0);
        let ac = rw2_distance(&a, &c).unwrap().distance;
        let cb = rw2_distance(&c, &b).unwrap().distance;
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn geodesic_is_a_mixture_between_endpoints(
        d in 1usize..4,
        t in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let g = Generator::gauss();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::mixture(&mut rng, &g, d, 2);
        let b = common::mixture(&mut rng, &g, d, 2);
        let full = rw2_distance(&a, &b).unwrap();
        let mid = rw2_geodesic(&a, &b, t).unwrap();
        let total: f64 = mid.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(mid.len() <= a.len() + b.len() - 1);
        // The mean moves linearly along the geodesic.
        let (ma, mb, mt) = (a.mean(), b.mean(), mid.mean());
        for i in 0..d {
            prop_assert!((mt[i] - ((1.0 - t) * ma[i] + t * mb[i])).abs() <= 1e-9);
        }
        let to_mid = rw2_distance(&a, &mid).unwrap().distance;
        prop_assert!((to_mid - t * full.distance).abs() <= 1e-8 * full.distance.max(1.0));
    }

    #[test]
    fn mixture_json_round_trips(which in 0u8..3, d in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::mixture(&mut rng, &generator(which, d), d, 3);
        let back = RadialMixture::from_json(&m.to_json()).unwrap();
        prop_assert_eq!(back.weights(), m.weights());
        for (x, y) in back.components().iter().zip(m.components()) {
            prop_assert_eq!(x.center(), y.center());
            prop_assert_eq!(x.scale(), y.scale());
            prop_assert_eq!(x.generator(), y.generator());
        }
    }

    #[test]
    fn simplex_grid_points_are_weights(n in 1usize..5, steps in 1usize..6) {
        let grid = simplex_grid(n, steps);
        for w in &grid {
            prop_assert_eq!(w.len(), n);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
        }
        // Compositions of `steps` into `n` parts.
        let binom = |n: usize, k: usize| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
        prop_assert_eq!(grid.len(), binom(steps + n - 1, n - 1));
    }
}

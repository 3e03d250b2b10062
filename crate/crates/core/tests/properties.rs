//! Property tests for the invariants of the numerical building blocks.

use frugal_gcn::al_loop::count_for_rate;
use frugal_gcn::display::{self, DisplayProblem};
use frugal_gcn::gcn::{leaky, leaky_inv, GcnModel, ModelSpec};
use frugal_gcn::metrics::{frechet_distance, macro_accuracy, GaussianSummary};
use frugal_gcn::numkit::{condition_number, eigvals, svd, Matrix, Rng};
use frugal_gcn::skeleton_io::{build_adjacency, Topology};
use frugal_gcn::training::{cross_entropy, or_penalty, softmax};
use proptest::prelude::*;

fn gaussian(seed: u64, rows: usize, cols: usize) -> Matrix<f64> {
    Rng::new(seed).gaussian_matrix(rows, cols, 1.0)
}

fn samples(seed: u64, n: usize, d: usize, offset: f64) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| (0..d).map(|_| rng.normal() + offset).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn condition_number_at_least_one(seed in any::<u64>(), n in 1usize..7) {
        let m = gaussian(seed, n, n);
        if let Ok(c) = condition_number(&m) {
            prop_assert!(c >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn orthogonal_factor_is_perfectly_conditioned(seed in any::<u64>(), n in 1usize..7) {
        let q = svd(&gaussian(seed, n, n)).unwrap().u;
        prop_assert!((condition_number(&q).unwrap() - 1.0).abs() < 1e-10);
        prop_assert!(or_penalty(&[q]) < 1e-10);
    }

    #[test]
    fn eigenvalues_shift_with_identity(seed in any::<u64>(), n in 1usize..7, delta in -50.0f64..50.0) {
        let m = gaussian(seed, n, n);
        let a = eigvals(&m).unwrap();
        let b = eigvals(&m.shifted(delta)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.re + delta - y.re).abs() < 1e-8);
            prop_assert!((x.im - y.im).abs() < 1e-8);
        }
    }

    #[test]
    fn leaky_round_trips(xs in prop::collection::vec(-1e3f64..1e3, 1..20), l in 0.05f64..1.0) {
        let u = 1.0;
        let back = leaky_inv(&leaky(&xs, u, l), u, l);
        for (a, b) in xs.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn softmax_is_a_distribution(xs in prop::collection::vec(-500f64..500.0, 1..12)) {
        let p = softmax(&xs);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let ce = cross_entropy(std::slice::from_ref(&xs), &[0]).unwrap();
        prop_assert!(ce >= 0.0);
    }

    #[test]
    fn frechet_is_symmetric_nonnegative_and_translation_invariant(seed in any::<u64>(), d in 1usize..5, shift in -5.0f64..5.0) {
        let a = samples(seed, 60, d, 0.0);
        let b = samples(seed ^ 1, 60, d, 0.5);
        let fa = GaussianSummary::fit(&a).unwrap();
        let fb = GaussianSummary::fit(&b).unwrap();
        let ab = frechet_distance(&fa, &fb).unwrap();
        let ba = frechet_distance(&fb, &fa).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab));
        prop_assert!(frechet_distance(&fa, &fa).unwrap().abs() < 1e-8);
        let moved = |s: &[Vec<f64>]| s.iter().map(|r| r.iter().map(|x| x + shift).collect()).collect::<Vec<Vec<f64>>>();
        let shifted = frechet_distance(
            &GaussianSummary::fit(&moved(&a)).unwrap(),
            &GaussianSummary::fit(&moved(&b)).unwrap(),
        ).unwrap();
        prop_assert!((shifted - ab).abs() <= 1e-6 * (1.0 + ab));
    }

    #[test]
    fn macro_accuracy_ignores_sample_order(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40), seed in any::<u64>()) {
        let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let base = macro_accuracy(&preds, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let mut rng = Rng::new(seed);
        let order = rng.sample_without_replacement(pairs.len(), pairs.len());
        let p2: Vec<usize> = order.iter().map(|&i| preds[i]).collect();
        let l2: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        prop_assert!((macro_accuracy(&p2, &l2).unwrap() - base).abs() < 1e-12);
        prop_assert_eq!(macro_accuracy(&labels, &labels).unwrap(), 1.0);
    }

    #[test]
    fn adjacency_rows_are_stochastic(joints in 2usize..20, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let edges: Vec<(usize, usize)> = (0..joints).map(|_| (rng.below(joints), rng.below(joints))).collect();
        let a = build_adjacency::<f64>(&edges, joints).unwrap();
        for i in 0..joints {
            prop_assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(a[(i, i)] > 0.0);
        }
    }

    #[test]
    fn label_counts_are_monotone(n in 1usize..500, r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(count_for_rate(lo, n) <= count_for_rate(hi, n));
        prop_assert!(count_for_rate(hi, n) <= n);
        prop_assert_eq!(count_for_rate(1.0, n), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_memberships_stay_on_the_simplex(seed in any::<u64>(), k in 1usize..5, hist in 0usize..4) {
        let mut rng = Rng::new(seed);
        let prob = DisplayProblem::new(rng.gaussian_matrix(5, 12, 1.0), rng.gaussian_matrix(5, hist, 1.0), k).unwrap();
        let sol = display::solve(&prob, &Rng::new(seed ^ 7), 50, 1e-8).unwrap();
        prop_assert!(sol.max_feasibility_error <= 1e-8);
        for c in 0..k {
            let col = sol.mu.col(c);
            prop_assert!(col.iter().all(|&m| m >= 0.0));
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn km_bound_dominates_one_and_inverse_round_trips(seed in any::<u64>(), delta in 0.0f64..20.0) {
        let topo = Topology::chain(4);
        let adj = build_adjacency::<f64>(&topo.edges, topo.joints).unwrap();
        let spec = ModelSpec { filters: 2, attention_dim: 0, layers: 2, ..ModelSpec::default() };
        let model = GcnModel::init(&spec, &adj, 3, 3, &mut Rng::new(seed)).unwrap().with_delta(delta);
        if let Ok(bound) = model.km_bound() {
            prop_assert!(bound >= 1.0);
            let mut rng = Rng::new(seed ^ 3);
            let x: Vec<f64> = (0..model.ambient_dim).map(|_| rng.normal()).collect();
            let back = model.inverse(&model.forward(&x).unwrap()).unwrap();
            let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let xn: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-6 * (1.0 + xn) * bound.max(1.0));
        }
    }

    #[test]
    fn substreams_are_deterministic_and_distinct(seed in any::<u64>()) {
        let a = Rng::new(seed).substream("display-init").next_u64();
        let b = Rng::new(seed).substream("display-init").next_u64();
        let c = Rng::new(seed).substream("weight-init").next_u64();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }
}

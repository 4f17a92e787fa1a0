use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use treebranch_core::bnb::{solve, SolveOptions};
use treebranch_core::branching::{BrancherConfig, Vanilla};
use treebranch_core::mdp::{
    bellman_apply, compute_returns, greedy_policy, leaves, pch_for_leaf_distribution, read_buffer,
    write_buffer, PolicyTable, QTable, ReturnConfig, TrajectoryTree,
};
use treebranch_core::milp::{generate, GeneratorSpec};
use treebranch_testkit::fixtures::rng;
use treebranch_testkit::trees::{monte_carlo_return, node_count, path_product_leaf_probs, random_tree};

fn random_q(tree: &TrajectoryTree, g: &mut impl Rng) -> QTable {
    tree.transitions()
        .iter()
        .map(|t| (0..t.candidates.len()).map(|_| g.gen_range(-5.0..5.0)).collect())
        .collect()
}

fn random_policy(tree: &TrajectoryTree, g: &mut impl Rng) -> PolicyTable {
    tree.transitions()
        .iter()
        .map(|t| {
            let w: Vec<f64> = (0..t.candidates.len()).map(|_| g.gen_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect()
}

fn sup_dist(a: &QTable, b: &QTable) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

fn root_index(tree: &TrajectoryTree) -> usize {
    tree.index_of(tree.root_id).unwrap()
}

#[test]
fn returns_match_monte_carlo() {
    let mut g = rng(21);
    let cfg = ReturnConfig::default();
    for _ in 0..20 {
        let tree = random_tree(&mut g, 7);
        let r = compute_returns(&tree, &cfg).unwrap();
        let (mean, se) = monte_carlo_return(&tree, cfg.gamma, cfg.kappa, 50_000, &mut g);
        let exact = r[root_index(&tree)];
        assert!((mean - exact).abs() <= 3.0 * se + 1e-12, "mc {mean} +- {se}, exact {exact}");
    }
}

#[test]
fn returns_are_bellman_fixed_point() {
    let mut g = rng(22);
    for gamma in [0.5, 0.9, 0.95] {
        let cfg = ReturnConfig { gamma, kappa: 0.8 };
        for _ in 0..20 {
            let tree = random_tree(&mut g, 15);
            let pi = greedy_policy(&tree);
            let mut q: QTable = tree.transitions().iter().map(|t| vec![0.0; t.candidates.len()]).collect();
            for _ in 0..10_000 {
                let next = bellman_apply(&tree, &q, &pi, &cfg);
                let delta = sup_dist(&next, &q);
                q = next;
                if delta < 1e-12 {
                    break;
                }
            }
            let r = compute_returns(&tree, &cfg).unwrap();
            for (i, t) in tree.transitions().iter().enumerate() {
                assert!((q[i][t.action] - r[i]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn bellman_operator_contracts() {
    let mut g = rng(23);
    for gamma in [0.5, 0.9, 0.99] {
        let cfg = ReturnConfig { gamma, kappa: 0.8 };
        for _ in 0..100 {
            let tree = random_tree(&mut g, 15);
            assert!(node_count(&tree) <= 31);
            let pi = random_policy(&tree, &mut g);
            let (q1, q2) = (random_q(&tree, &mut g), random_q(&tree, &mut g));
            let lhs = sup_dist(&bellman_apply(&tree, &q1, &pi, &cfg), &bellman_apply(&tree, &q2, &pi, &cfg));
            assert!(lhs <= gamma * sup_dist(&q1, &q2) + 1e-12);
        }
    }
}

#[test]
fn leaf_distribution_is_reproduced() {
    let mut g = rng(24);
    for _ in 0..100 {
        let tree = random_tree(&mut g, 19);
        let leaf_ids = leaves(&tree);
        assert!(leaf_ids.len() <= 20);
        let mut w: Vec<f64> = leaf_ids.iter().map(|_| g.gen_range(0.0..1.0)).collect();
        // some exact zeros to exercise the zero-mass split
        for x in w.iter_mut() {
            if g.gen_bool(0.2) {
                *x = 0.0;
            }
        }
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
        let s: f64 = w.iter().sum();
        let target: BTreeMap<usize, f64> = leaf_ids.iter().copied().zip(w.iter().map(|x| x / s)).collect();
        let pch = pch_for_leaf_distribution(&tree, &target).unwrap();
        let got = path_product_leaf_probs(&tree, &pch);
        assert_eq!(got.len(), target.len());
        for (id, p) in &target {
            assert!((got[id] - p).abs() <= 1e-12, "leaf {id}: {} vs {p}", got[id]);
        }
    }
}

#[test]
fn large_buffer_round_trip_keeps_returns() {
    let cfg = ReturnConfig::default();
    let mut trees = Vec::new();
    let mut total = 0;
    let mut g = rng(25);
    while total < 100_000 {
        let mut t = random_tree(&mut g, 200);
        t.finalize(&cfg).unwrap();
        total += t.len();
        trees.push(t);
    }
    let bytes = write_buffer(&trees);
    let back = read_buffer(&bytes).unwrap();
    assert_eq!(back.len(), trees.len());
    for (a, b) in trees.iter().zip(&back) {
        assert_eq!(a.transitions(), b.transitions());
        assert_eq!(a.returns(), b.returns());
        assert_eq!(compute_returns(b, &cfg).unwrap(), a.returns());
    }
    assert_eq!(write_buffer(&back), bytes);
}

#[test]
fn recorded_trajectories_round_trip_with_features() {
    let inst = generate(&GeneratorSpec::set_cover(30, 45, 0.2, 3)).unwrap();
    let opts = SolveOptions { record_features: true, ..Default::default() };
    let r = solve(&inst, &mut Vanilla::new(BrancherConfig::default()), &opts, 1).unwrap();
    assert!(!r.trajectory.is_empty());
    for t in r.trajectory.transitions() {
        assert_eq!(t.features.rows(), t.candidates.len());
    }
    let back = read_buffer(&write_buffer(std::slice::from_ref(&r.trajectory))).unwrap();
    assert_eq!(back[0], r.trajectory);
}

proptest! {
    #[test]
    fn returns_nonnegative_and_bounded(seed in any::<u64>(), gamma in 0.0f64..0.99, kappa in 0.01f64..0.99) {
        let tree = random_tree(&mut rng(seed), 30);
        let cfg = ReturnConfig { gamma, kappa };
        let r = compute_returns(&tree, &cfg).unwrap();
        let bound = tree.max_reward() / (1.0 - gamma);
        for v in &r {
            prop_assert!(v.is_finite() && *v >= 0.0 && *v <= bound + 1e-12);
        }
    }

    #[test]
    fn returns_ignore_insertion_order(seed in any::<u64>()) {
        let tree = random_tree(&mut rng(seed), 20);
        let mut ts = tree.transitions().to_vec();
        ts.reverse();
        let shuffled = TrajectoryTree::new(tree.instance_id, tree.root_id, tree.tree_size, ts).unwrap();
        let cfg = ReturnConfig::default();
        prop_assert_eq!(compute_returns(&tree, &cfg).unwrap(), compute_returns(&shuffled, &cfg).unwrap());
    }
}

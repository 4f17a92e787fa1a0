use proptest::prelude::*;
use treebranch_core::bnb::{solve, NodeStatus, SolveOptions, SolveResult, SolveStatus};
use treebranch_core::branching::{BrancherConfig, BrancherRegistry};
use treebranch_core::milp::{generate, GeneratorSpec, MilpInstance};
use treebranch_testkit::fixtures::{random_binary_milp, rng};
use treebranch_testkit::oracles::milp_enumeration;

fn run(inst: &MilpInstance, name: &str, seed: u64) -> SolveResult {
    let mut b = BrancherRegistry::with_builtins()
        .create(name, &BrancherConfig::default())
        .unwrap();
    solve(inst, &mut *b, &SolveOptions::default(), seed).unwrap()
}

fn check_invariants(inst: &MilpInstance, r: &SolveResult) {
    assert_eq!(r.node_count, r.nodes.len());
    for w in r.dual_bound_history.windows(2) {
        assert!(w[1] >= w[0], "dual bound decreased: {} -> {}", w[0], w[1]);
    }
    let mut branched = 0;
    for n in &r.nodes {
        match n.status {
            NodeStatus::BranchedOn(_) => {
                branched += 1;
                let kids = n.children.expect("branched node has children");
                for c in kids {
                    let child = &r.nodes[c];
                    assert_eq!(child.parent, Some(n.id));
                    assert!(child.ldb >= n.ldb - 1e-7);
                }
            }
            _ => assert!(n.children.is_none()),
        }
    }
    assert_eq!(branched, r.trajectory.len());
    let scale = 1.0 + r.nodes[0].ldb.abs();
    for t in r.trajectory.transitions() {
        for rw in t.rewards {
            assert!(rw >= 0.0);
            let gap = (r.primal_bound - t.ldb) / scale;
            assert!(rw <= 1.0 + gap.max(0.0) + 1e-12 || !gap.is_finite());
        }
        assert_ne!(t.children[0], t.children[1]);
        assert!(t.action < t.candidates.len());
    }
    assert!(r.trajectory.is_finalized());
    if r.status == SolveStatus::OptimalFound {
        let p = r.primal_bound;
        assert!((p - r.dual_bound).abs() <= 1e-6 * (1.0 + p.abs()));
        let x = r.incumbent.as_ref().unwrap();
        assert!(inst.is_feasible(x, &Default::default()));
        assert!((inst.objective_value(x) - p).abs() < 1e-6);
    }
}

#[test]
fn optimum_matches_enumeration_for_every_brancher() {
    let mut g = rng(11);
    for _ in 0..200 {
        let inst = random_binary_milp(&mut g, 12);
        let expected = milp_enumeration(&inst).expect("x = 0 is feasible");
        for name in ["random", "fsb", "pb", "vhb"] {
            let r = run(&inst, name, 5);
            assert_eq!(r.status, SolveStatus::OptimalFound);
            assert!(
                (r.primal_bound - expected).abs() < 1e-6,
                "{name}: {} vs {}",
                r.primal_bound,
                expected
            );
            check_invariants(&inst, &r);
        }
    }
}

#[test]
fn same_seed_same_tree() {
    let inst = generate(&GeneratorSpec::set_cover(30, 45, 0.2, 77)).unwrap();
    for name in ["random", "vhb", "rpb"] {
        let a = run(&inst, name, 9);
        let b = run(&inst, name, 9);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.trajectory, b.trajectory);
    }
}

#[test]
fn branchers_agree_on_set_cover_optimum() {
    for seed in 0..50 {
        let inst = generate(&GeneratorSpec::set_cover(15, 20, 0.2, seed)).unwrap();
        let objs: Vec<f64> = ["random", "fsb", "pb"]
            .iter()
            .map(|n| {
                let r = run(&inst, n, seed);
                check_invariants(&inst, &r);
                r.primal_bound
            })
            .collect();
        assert!(objs.iter().all(|o| (o - objs[0]).abs() < 1e-6), "{objs:?}");
    }
}

#[test]
fn other_families_solve_to_optimality() {
    let knap = generate(&GeneratorSpec::multi_knapsack(8, 2, 3)).unwrap();
    let indep = generate(&GeneratorSpec::indep_set(12, 0.3, 3)).unwrap();
    for inst in [knap, indep] {
        let expected = milp_enumeration(&inst).unwrap();
        let r = run(&inst, "pb", 0);
        assert!((r.primal_bound - expected).abs() < 1e-6);
        check_invariants(&inst, &r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariants_hold_on_random_instances(seed in any::<u64>(), solver_seed in 0u64..100) {
        let inst = random_binary_milp(&mut rng(seed), 10);
        for name in ["random", "rpb"] {
            let r = run(&inst, name, solver_seed);
            check_invariants(&inst, &r);
        }
    }
}

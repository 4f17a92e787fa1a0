use treebranch_core::lp::{lp_solve, LpSettings, LpStatus};
use treebranch_core::milp::{generate, GeneratorSpec, MilpInstance, Tolerances};
use treebranch_testkit::fixtures::{random_box_lp, rng};
use treebranch_testkit::oracles::{knapsack_dp, lp_vertex_enumeration, milp_enumeration, VertexOptimum};

fn check_result_invariants(inst: &MilpInstance, x: &[f64], objective: f64) {
    for j in 0..inst.num_vars() {
        assert!(x[j] >= inst.lower()[j] - 1e-9 && x[j] <= inst.upper()[j] + 1e-9);
    }
    for i in 0..inst.num_rows() {
        assert!(inst.matrix().row_dot(i, x) <= inst.matrix().rhs()[i] + 1e-7);
    }
    assert!((inst.objective_value(x) - objective).abs() <= 1e-7);
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut r = rng(20240611);
    let settings = LpSettings::default();
    let mut infeasible = 0;
    for _ in 0..200 {
        let inst = random_box_lp(&mut r, 6, 6);
        let got = lp_solve(&inst, None, &settings).unwrap();
        match lp_vertex_enumeration(&inst) {
            VertexOptimum::Optimal(v) => {
                assert_eq!(got.status, LpStatus::Optimal, "{inst:?}");
                assert!((got.objective - v).abs() <= 1e-6, "{} vs {v}", got.objective);
                check_result_invariants(&inst, &got.solution, got.objective);
            }
            VertexOptimum::Infeasible => {
                infeasible += 1;
                assert_eq!(got.status, LpStatus::Infeasible);
            }
        }
    }
    assert!(infeasible < 200);
}

#[test]
fn lp_bound_never_exceeds_integer_optimum() {
    let mut r = rng(5);
    for _ in 0..100 {
        let inst = treebranch_testkit::fixtures::random_binary_milp(&mut r, 8);
        let lp = lp_solve(&inst, None, &LpSettings::default()).unwrap();
        let best = milp_enumeration(&inst).unwrap();
        assert!(lp.objective <= best + 1e-7);
    }
}

#[test]
fn down_child_below_lower_bound_is_infeasible() {
    // x in [2, 5] integer; a (hypothetical) LP value 1.5 gives down child x <= 1
    let inst = MilpInstance::new(
        vec![1.0],
        vec![vec![(0, 1.0)]],
        vec![5.0],
        vec![2.0],
        vec![5.0],
        vec![true],
    )
    .unwrap();
    let (down, up) = inst.branch(0, 1.5, 1e-6).unwrap();
    assert_eq!(lp_solve(&down, None, &LpSettings::default()).unwrap().status, LpStatus::Infeasible);
    let up = lp_solve(&up, None, &LpSettings::default()).unwrap();
    assert_eq!(up.status, LpStatus::Optimal);
    assert_eq!(up.solution, vec![2.0]);
}

#[test]
fn complete_graph_independent_set_optimum_is_one() {
    let inst = generate(&GeneratorSpec::indep_set(4, 1.0, 11)).unwrap();
    // brute force over all 2^4 assignments
    let mut best = 0.0f64;
    for mask in 0u32..16 {
        let x: Vec<f64> = (0..4).map(|j| ((mask >> j) & 1) as f64).collect();
        if inst.is_feasible(&x, &Tolerances::default()) {
            best = best.max(-inst.objective_value(&x));
        }
    }
    assert_eq!(best, 1.0);
    assert_eq!(milp_enumeration(&inst), Some(-1.0));
}

#[test]
fn single_knapsack_matches_dp() {
    for seed in 0..10 {
        let inst = generate(&GeneratorSpec::multi_knapsack(5, 1, seed)).unwrap();
        let (cols, vals) = inst.matrix().row(0);
        assert_eq!(cols.len(), 5);
        let weights: Vec<u64> = vals.iter().map(|&w| w as u64).collect();
        let values: Vec<f64> = inst.objective().iter().map(|v| -v).collect();
        let dp = knapsack_dp(&weights, &values, inst.matrix().rhs()[0] as u64);
        assert_eq!(milp_enumeration(&inst), Some(-dp));
    }
}

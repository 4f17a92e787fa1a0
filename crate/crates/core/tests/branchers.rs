use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treebranch_core::bnb::{solve, NodeView, SolveOptions};
use treebranch_core::branching::{
    fsb_select, pb_select, rpb_select, Brancher, BranchContext, BrancherConfig, BrancherRegistry,
    PseudocostTable, Vanilla,
};
use treebranch_core::lp::{lp_solve, LpResult, LpSettings};
use treebranch_core::metrics::shifted_geomean;
use treebranch_core::milp::{fractional_candidates, generate, GeneratorSpec, MilpInstance};

fn node<'a>(inst: &'a MilpInstance, lp: &'a LpResult, cands: &'a [usize]) -> NodeView<'a> {
    NodeView {
        node_id: 0,
        depth: 0,
        instance: inst,
        lp,
        candidates: cands,
        root_objective: lp.objective,
        primal_bound: f64::INFINITY,
    }
}

fn root(inst: &MilpInstance) -> (LpResult, Vec<usize>) {
    let lp = lp_solve(inst, None, &LpSettings::default()).unwrap();
    let c = fractional_candidates(inst, &lp.solution, 1e-6);
    (lp, c)
}

/// Set cover instances with a fractional root.
fn fractional_instances(count: usize) -> Vec<MilpInstance> {
    (0u64..)
        .map(|s| generate(&GeneratorSpec::set_cover(20, 30, 0.2, 500 + s)).unwrap())
        .filter(|i| root(i).1.len() >= 2)
        .take(count)
        .collect()
}

fn geomean_nodes(name: &str, cfg: &BrancherConfig, insts: &[MilpInstance]) -> f64 {
    let reg = BrancherRegistry::with_builtins();
    let v: Vec<f64> = insts
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut b = reg.create(name, cfg).unwrap();
            solve(inst, &mut *b, &SolveOptions::default(), i as u64).unwrap().node_count as f64
        })
        .collect();
    shifted_geomean(&v, 10.0)
}

#[test]
fn product_score_prefers_lopsided_gain() {
    let eps = 1e-6;
    let score = |d: [f64; 2]| d[0].max(eps) * d[1].max(eps);
    assert!(score([0.1, 50.0]) > score([2.0, 2.0]));
    assert_eq!(score([0.0, 3.0]), eps * 3.0);
}

#[test]
fn pb_tie_and_table_examples() {
    let inst = MilpInstance::new(
        vec![1.0; 3],
        vec![vec![(0, 1.0), (1, 1.0), (2, 1.0)]],
        vec![10.0],
        vec![0.0; 3],
        vec![5.0; 3],
        vec![true; 3],
    )
    .unwrap();
    let mut lp = lp_solve(&inst, None, &LpSettings::default()).unwrap();
    lp.solution = vec![0.5, 1.5, 2.5];
    let cands = [0, 1, 2];
    let table = PseudocostTable::new(3);
    assert_eq!(pb_select(&table, &node(&inst, &lp, &cands), 1e-6), 0);

    let mut table = PseudocostTable::new(3);
    table.update(0, false, 0.5, 0.5);
    table.update(0, true, 0.5, 0.5);
    table.update(1, false, 1.0, 0.5);
    table.update(1, true, 1.0, 0.5);
    let two = [0, 1];
    assert_eq!(pb_select(&table, &node(&inst, &lp, &two), 1e-6), 1);
}

#[test]
fn rpb_boundaries() {
    let settings = LpSettings::default();
    for inst in fractional_instances(10) {
        let (lp, cands) = root(&inst);
        let view = node(&inst, &lp, &cands);
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        let mut t_fsb = PseudocostTable::new(inst.num_vars());
        let mut t_rpb = PseudocostTable::new(inst.num_vars());
        let fsb = fsb_select(
            &mut BranchContext { node: view, pseudocosts: &mut t_fsb, lp_settings: &settings, rng: &mut rng, features: None },
            1e-6,
        )
        .unwrap();
        let rpb = rpb_select(
            &mut BranchContext { node: view, pseudocosts: &mut t_rpb, lp_settings: &settings, rng: &mut rng, features: None },
            4,
            1e-6,
        )
        .unwrap();
        assert_eq!(fsb.position, rpb.position);
        assert_eq!(t_fsb, t_rpb);

        // every candidate reliable: pure pseudocost choice, no LPs solved
        let mut reliable = PseudocostTable::new(inst.num_vars());
        for (k, &v) in cands.iter().enumerate() {
            for _ in 0..4 {
                reliable.update(v, false, 1.0 + k as f64, 0.5);
                reliable.update(v, true, 2.0 + (k % 3) as f64, 0.5);
            }
        }
        let pb = pb_select(&reliable, &view, 1e-6);
        let before = reliable.clone();
        let d = rpb_select(
            &mut BranchContext { node: view, pseudocosts: &mut reliable, lp_settings: &settings, rng: &mut rng, features: None },
            4,
            1e-6,
        )
        .unwrap();
        assert_eq!(d.position, pb);
        assert!(d.children.is_none());
        assert_eq!(before, reliable);
    }
}

#[test]
fn rpb_mixed_merge_matches_manual_scores() {
    let settings = LpSettings::default();
    let inst = fractional_instances(1).remove(0);
    let (lp, cands) = root(&inst);
    let view = node(&inst, &lp, &cands);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // first candidate unreliable, the rest reliable with tiny pseudocosts
    let mut table = PseudocostTable::new(inst.num_vars());
    for &v in &cands[1..] {
        for _ in 0..4 {
            table.update(v, false, 1e-4, 0.5);
            table.update(v, true, 1e-4, 0.5);
        }
    }
    let mut manual = Vec::new();
    let probe = treebranch_core::branching::strong_branch(
        &BranchContext { node: view, pseudocosts: &mut table.clone(), lp_settings: &settings, rng: &mut rng, features: None },
        cands[0],
    )
    .unwrap();
    manual.push(probe.product(1e-6));
    for &v in &cands[1..] {
        let f = view.fractionality(v);
        manual.push((table.down_average(v) * f).max(1e-6) * (table.up_average(v) * (1.0 - f)).max(1e-6));
    }
    let mut best = 0;
    for (i, s) in manual.iter().enumerate() {
        if *s > manual[best] {
            best = i;
        }
    }
    let d = rpb_select(
        &mut BranchContext { node: view, pseudocosts: &mut table, lp_settings: &settings, rng: &mut rng, features: None },
        4,
        1e-6,
    )
    .unwrap();
    assert_eq!(d.position, best);
    assert_eq!(table.counts(cands[0]).0 + table.counts(cands[0]).1, probe.lps.iter().filter(|l| l.is_optimal()).count() as u32);
}

#[test]
fn vhb_boundaries_match_pure_heuristics() {
    let reg = BrancherRegistry::with_builtins();
    for inst in fractional_instances(8) {
        for (p, pure) in [(0.0, "pb"), (1.0, "fsb")] {
            let cfg = BrancherConfig { vhb_fsb_prob: p, ..Default::default() };
            let mut v = reg.create("vhb", &cfg).unwrap();
            let mut h = reg.create(pure, &cfg).unwrap();
            let a = solve(&inst, &mut *v, &SolveOptions::default(), 4).unwrap();
            let b = solve(&inst, &mut *h, &SolveOptions::default(), 4).unwrap();
            assert_eq!(a.nodes, b.nodes, "p = {p}");
        }
    }
}

#[test]
fn vhb_strong_fraction_near_five_percent() {
    let mut vhb = Vanilla::new(BrancherConfig::default());
    let mut seed = 0;
    while vhb.strong_decisions + vhb.pseudocost_decisions < 10_000 {
        let inst = generate(&GeneratorSpec::set_cover(40, 60, 0.2, 9000 + seed)).unwrap();
        solve(&inst, &mut vhb, &SolveOptions::default(), seed).unwrap();
        seed += 1;
    }
    let f = vhb.strong_fraction();
    assert!((0.04..=0.06).contains(&f), "strong fraction {f}");
}

#[test]
fn fsb_choice_invariant_to_objective_scaling() {
    let settings = LpSettings::default();
    let mut checked = 0;
    for inst in fractional_instances(12) {
        let (lp, cands) = root(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scores: Vec<f64> = cands
            .iter()
            .map(|&v| {
                treebranch_core::branching::strong_branch(
                    &BranchContext {
                        node: node(&inst, &lp, &cands),
                        pseudocosts: &mut PseudocostTable::new(inst.num_vars()),
                        lp_settings: &settings,
                        rng: &mut rng,
                        features: None,
                    },
                    v,
                )
                .unwrap()
                .product(1e-6)
            })
            .collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted[0] - sorted[1] < 1e-3 * sorted[0] {
            continue;
        }
        let base = fsb_select(
            &mut BranchContext {
                node: node(&inst, &lp, &cands),
                pseudocosts: &mut PseudocostTable::new(inst.num_vars()),
                lp_settings: &settings,
                rng: &mut rng,
                features: None,
            },
            1e-6,
        )
        .unwrap()
        .position;
        for lambda in [0.5, 3.0, 17.0] {
            let scaled = inst.with_objective(inst.objective().iter().map(|c| c * lambda).collect());
            // the same vertex stays optimal under positive scaling
            let mut slp = lp.clone();
            slp.objective *= lambda;
            let scands = cands.clone();
            let pos = fsb_select(
                &mut BranchContext {
                    node: node(&scaled, &slp, &scands),
                    pseudocosts: &mut PseudocostTable::new(inst.num_vars()),
                    lp_settings: &settings,
                    rng: &mut rng,
                    features: None,
                },
                1e-6,
            )
            .unwrap()
            .position;
            assert_eq!(pos, base, "lambda {lambda}");
        }
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn selectors_stay_in_candidate_list() {
    let reg = BrancherRegistry::with_builtins();
    let settings = LpSettings::default();
    for inst in fractional_instances(6) {
        let (lp, cands) = root(&inst);
        for name in reg.names() {
            let mut b = reg.create(&name, &BrancherConfig::default()).unwrap();
            let mut table = PseudocostTable::new(inst.num_vars());
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let d = b
                .select(&mut BranchContext {
                    node: node(&inst, &lp, &cands),
                    pseudocosts: &mut table,
                    lp_settings: &settings,
                    rng: &mut rng,
                    features: None,
                })
                .unwrap();
            assert!(d.position < cands.len(), "{name}");
        }
    }
}

#[test]
fn strong_branching_builds_smaller_trees() {
    let insts: Vec<MilpInstance> = (0..50)
        .map(|s| generate(&GeneratorSpec::set_cover(20, 30, 0.2, 100 + s)).unwrap())
        .collect();
    let cfg = BrancherConfig::default();
    let fsb = geomean_nodes("fsb", &cfg, &insts);
    let pb = geomean_nodes("pb", &cfg, &insts);
    let random = geomean_nodes("random", &cfg, &insts);
    assert!(fsb < random, "fsb {fsb} random {random}");
    assert!(pb >= fsb, "pb {pb} fsb {fsb}");
}

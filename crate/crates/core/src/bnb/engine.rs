use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BnbNode, BoundChange, NodeStatus, NodeView, SolveError};
use crate::branching::{BranchContext, Brancher, PseudocostTable};
use crate::features::{featurize, FeatureMatrix};
use crate::lp::{lp_solve, LpResult, LpSettings, LpStatus};
use crate::mdp::{ReturnConfig, TrajectoryTree, Transition};
use crate::milp::{fractional_candidates, MilpInstance, Tolerances};

/// Nodes whose bound is within this of the incumbent are pruned.
const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveLimits {
    /// Upper bound on nodes created, root included.
    pub max_nodes: usize,
    pub max_lp_iterations_per_node: usize,
    pub time_limit: Option<Duration>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            max_nodes: 5000,
            max_lp_iterations_per_node: 50_000,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardConfig {
    /// Give each child edge its own bound gain instead of the shared minimum.
    pub per_child_reward: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub limits: SolveLimits,
    pub tol: Tolerances,
    pub rewards: RewardConfig,
    pub returns: ReturnConfig,
    /// Store candidate features with every transition.
    pub record_features: bool,
    pub instance_id: u64,
    /// Starting pseudocosts; a fresh table is used when absent.
    pub initial_pseudocosts: Option<PseudocostTable>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            limits: SolveLimits::default(),
            tol: Tolerances::default(),
            rewards: RewardConfig::default(),
            returns: ReturnConfig::default(),
            record_features: false,
            instance_id: 0,
            initial_pseudocosts: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    OptimalFound,
    NodeLimitHit,
    TimeLimitHit,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub incumbent: Option<Vec<f64>>,
    /// Objective of the incumbent, `+inf` without one.
    pub primal_bound: f64,
    pub dual_bound: f64,
    pub node_count: usize,
    /// Finalized trajectory (returns computed).
    pub trajectory: TrajectoryTree,
    pub wall_time: Duration,
    pub nodes: Vec<BnbNode>,
    /// Global dual bound after each processed node.
    pub dual_bound_history: Vec<f64>,
    pub pseudocosts: PseudocostTable,
    pub lp_iterations: usize,
}

/// Reward of one branching, normalized by `1 + |root objective|`.
///
/// An infeasible child (`None`) counts as reaching the primal bound. The raw
/// gain is clamped to `[0, primal - parent]`; a gain that stays unbounded
/// (both children infeasible, no incumbent) is reported as 1.
pub fn transition_reward(
    parent_ldb: f64,
    child_ldbs: [Option<f64>; 2],
    primal: f64,
    root_objective: f64,
    per_child: bool,
) -> [f64; 2] {
    let gap = (primal - parent_ldb).max(0.0);
    let scale = 1.0 + root_objective.abs();
    let norm = |child: f64| {
        let raw = (child - parent_ldb).clamp(0.0, gap);
        if raw.is_finite() {
            raw / scale
        } else {
            1.0
        }
    };
    let resolved = child_ldbs.map(|c| c.unwrap_or(primal));
    if per_child {
        resolved.map(norm)
    } else {
        [norm(resolved[0].min(resolved[1])); 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapKey {
    ldb: f64,
    id: usize,
}

impl Eq for HeapKey {}

impl Ord for HeapKey {
    // BinaryHeap is a max-heap: the smallest bound (then the oldest id) must compare greatest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .ldb
            .total_cmp(&self.ldb)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct OpenNode {
    instance: MilpInstance,
    lp: LpResult,
}

struct Search<'a> {
    opts: &'a SolveOptions,
    lp_settings: LpSettings,
    nodes: Vec<BnbNode>,
    open: Vec<Option<OpenNode>>,
    heap: BinaryHeap<HeapKey>,
    incumbent: Option<Vec<f64>>,
    primal: f64,
    lp_iterations: usize,
}

impl Search<'_> {
    fn add_node(&mut self, node: BnbNode, data: Option<OpenNode>) -> usize {
        let id = node.id;
        debug_assert_eq!(id, self.nodes.len());
        self.nodes.push(node);
        self.open.push(data);
        id
    }

    /// Classifies a freshly solved node. Returns the bound to use for rewards
    /// (`None` when infeasible).
    fn settle(
        &mut self,
        id: usize,
        instance: MilpInstance,
        lp: LpResult,
        parent_ldb: f64,
    ) -> Result<Option<f64>, SolveError> {
        self.lp_iterations += lp.iterations;
        match lp.status {
            LpStatus::Infeasible => {
                self.nodes[id].status = NodeStatus::PrunedInfeasible;
                self.nodes[id].ldb = f64::INFINITY;
                Ok(None)
            }
            LpStatus::Unbounded => Err(SolveError::Unbounded),
            LpStatus::Optimal => {
                let ldb = lp.objective.max(parent_ldb);
                self.nodes[id].ldb = ldb;
                let cands = fractional_candidates(&instance, &lp.solution, self.opts.tol.integrality);
                if cands.is_empty() {
                    self.nodes[id].status = NodeStatus::IntegralLeaf;
                    if lp.objective < self.primal {
                        self.primal = lp.objective;
                        self.incumbent = Some(lp.solution);
                    }
                } else {
                    self.open[id] = Some(OpenNode { instance, lp });
                }
                Ok(Some(ldb))
            }
        }
    }

    fn current_dual(&self) -> f64 {
        self.heap
            .peek()
            .map_or(self.primal, |k| k.ldb.min(self.primal))
    }
}

/// Runs branch-and-bound on `instance`, choosing branching variables with `brancher`.
pub fn solve(
    instance: &MilpInstance,
    brancher: &mut dyn Brancher,
    opts: &SolveOptions,
    rng_seed: u64,
) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pseudocosts = opts
        .initial_pseudocosts
        .clone()
        .filter(|t| t.num_vars() == instance.num_vars())
        .unwrap_or_else(|| PseudocostTable::new(instance.num_vars()));
    let mut s = Search {
        opts,
        lp_settings: LpSettings {
            tol: opts.tol,
            max_iterations: opts.limits.max_lp_iterations_per_node,
        },
        nodes: Vec::new(),
        open: Vec::new(),
        heap: BinaryHeap::new(),
        incumbent: None,
        primal: f64::INFINITY,
        lp_iterations: 0,
    };
    let want_features = opts.record_features || brancher.wants_features();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut dual_history = Vec::new();

    let root_lp = lp_solve(instance, None, &s.lp_settings)?;
    let root_objective = root_lp.objective;
    s.add_node(
        BnbNode {
            id: 0,
            parent: None,
            change: None,
            ldb: root_objective,
            depth: 0,
            status: NodeStatus::Open,
            children: None,
        },
        None,
    );
    if s.settle(0, instance.clone(), root_lp, f64::NEG_INFINITY)?.is_some()
        && s.nodes[0].status == NodeStatus::Open
    {
        s.heap.push(HeapKey {
            ldb: s.nodes[0].ldb,
            id: 0,
        });
    }

    let mut status = None;
    let mut last_dual = f64::NEG_INFINITY;
    while let Some(key) = s.heap.pop() {
        let id = key.id;
        if key.ldb >= s.primal - PRUNE_TOL {
            s.nodes[id].status = NodeStatus::PrunedBound;
            s.open[id] = None;
            last_dual = last_dual.max(s.current_dual());
            dual_history.push(last_dual);
            continue;
        }
        if s.nodes.len() + 2 > opts.limits.max_nodes {
            s.heap.push(key);
            status = Some(SolveStatus::NodeLimitHit);
            break;
        }
        if opts.limits.time_limit.is_some_and(|t| start.elapsed() >= t) {
            s.heap.push(key);
            status = Some(SolveStatus::TimeLimitHit);
            break;
        }

        let OpenNode { instance: node_inst, lp: node_lp } =
            s.open[id].take().expect("open node keeps its LP");
        let depth = s.nodes[id].depth;
        let ldb = s.nodes[id].ldb;
        let candidates = fractional_candidates(&node_inst, &node_lp.solution, opts.tol.integrality);
        let view = NodeView {
            node_id: id,
            depth,
            instance: &node_inst,
            lp: &node_lp,
            candidates: &candidates,
            root_objective,
            primal_bound: s.primal,
        };
        let features = want_features.then(|| featurize(&view, &pseudocosts));
        let decision = {
            let mut ctx = BranchContext {
                node: view,
                pseudocosts: &mut pseudocosts,
                lp_settings: &s.lp_settings,
                rng: &mut rng,
                features: features.as_ref(),
            };
            brancher.select(&mut ctx)?
        };
        if decision.position >= candidates.len() {
            return Err(SolveError::Brancher {
                name: brancher.name().to_string(),
                msg: format!(
                    "position {} out of {} candidates",
                    decision.position,
                    candidates.len()
                ),
            });
        }
        let var = candidates[decision.position];
        let x = node_lp.solution[var];
        let f = x - x.floor();
        let (down, up) = node_inst.branch(var, x, opts.tol.integrality)?;
        let reuse = decision.children.is_some();
        let [down_lp, up_lp] = match decision.children {
            Some(lps) => lps,
            None => [
                lp_solve(&down, node_lp.basis.as_ref(), &s.lp_settings)?,
                lp_solve(&up, node_lp.basis.as_ref(), &s.lp_settings)?,
            ],
        };

        let mut child_ids = [0usize; 2];
        let mut child_ldbs = [None; 2];
        for (side, (child, lp)) in [(down, down_lp), (up, up_lp)].into_iter().enumerate() {
            let is_lower = side == 1;
            let cid = s.nodes.len();
            s.add_node(
                BnbNode {
                    id: cid,
                    parent: Some(id),
                    change: Some(BoundChange {
                        var,
                        is_lower,
                        value: if is_lower { x.ceil() } else { x.floor() },
                    }),
                    ldb: ldb,
                    depth: depth + 1,
                    status: NodeStatus::Open,
                    children: None,
                },
                None,
            );
            if !reuse && lp.is_optimal() {
                pseudocosts.update(var, is_lower, (lp.objective - ldb).max(0.0), f);
            }
            child_ldbs[side] = s.settle(cid, child, lp, ldb)?;
            child_ids[side] = cid;
        }
        for &cid in &child_ids {
            if s.nodes[cid].status == NodeStatus::Open {
                if s.nodes[cid].ldb >= s.primal - PRUNE_TOL {
                    s.nodes[cid].status = NodeStatus::PrunedBound;
                    s.open[cid] = None;
                } else {
                    s.heap.push(HeapKey {
                        ldb: s.nodes[cid].ldb,
                        id: cid,
                    });
                }
            }
        }
        s.nodes[id].status = NodeStatus::BranchedOn(var);
        s.nodes[id].children = Some(child_ids);

        let rewards = transition_reward(
            ldb,
            child_ldbs,
            s.primal,
            root_objective,
            opts.rewards.per_child_reward,
        );
        transitions.push(Transition {
            node_id: id,
            depth,
            candidates,
            features: features.unwrap_or_else(FeatureMatrix::empty),
            action: decision.position,
            rewards,
            children: child_ids,
            ldb,
            child_ldbs: child_ldbs.map(|c| c.unwrap_or(f64::INFINITY)),
            behavior_log_prob: decision.log_prob,
        });
        last_dual = last_dual.max(s.current_dual());
        dual_history.push(last_dual);
    }

    let status = status.unwrap_or(if s.incumbent.is_some() {
        SolveStatus::OptimalFound
    } else {
        SolveStatus::Infeasible
    });
    let dual_bound = match status {
        SolveStatus::OptimalFound | SolveStatus::Infeasible => s.primal,
        _ => s.current_dual().max(last_dual),
    };
    let mut trajectory = TrajectoryTree::new(opts.instance_id, 0, s.nodes.len(), transitions)?;
    trajectory.finalize(&opts.returns)?;
    Ok(SolveResult {
        status,
        incumbent: s.incumbent,
        primal_bound: s.primal,
        dual_bound,
        node_count: s.nodes.len(),
        trajectory,
        wall_time: start.elapsed(),
        nodes: s.nodes,
        dual_bound_history: dual_history,
        pseudocosts,
        lp_iterations: s.lp_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::{FullStrong, RandomBrancher};

    #[test]
    fn reward_examples() {
        assert_eq!(transition_reward(10.0, [Some(12.0), Some(11.5)], 20.0, 0.0, false), [1.5; 2]);
        assert_eq!(transition_reward(10.0, [None, None], 13.0, 0.0, false), [3.0; 2]);
        assert_eq!(transition_reward(10.0, [Some(10.0), Some(10.0)], 13.0, 0.0, false), [0.0; 2]);
        assert_eq!(transition_reward(10.0, [Some(12.0), Some(11.5)], 20.0, 0.0, true), [2.0, 1.5]);
        // clamp to the remaining gap, then normalize
        assert_eq!(transition_reward(10.0, [Some(30.0), None], 14.0, -3.0, false), [1.0; 2]);
        // one infeasible child without incumbent: the feasible child decides
        assert_eq!(
            transition_reward(10.0, [None, Some(12.0)], f64::INFINITY, 1.0, false),
            [1.0; 2]
        );
        assert_eq!(transition_reward(10.0, [None, None], f64::INFINITY, 0.0, false), [1.0; 2]);
    }

    #[test]
    fn integral_root_needs_one_node() {
        let inst = MilpInstance::new(
            vec![1.0, 1.0],
            vec![vec![(0, -1.0), (1, -1.0)]],
            vec![-1.0],
            vec![0.0; 2],
            vec![1.0; 2],
            vec![true; 2],
        )
        .unwrap();
        let r = solve(&inst, &mut RandomBrancher, &SolveOptions::default(), 0).unwrap();
        assert_eq!(r.status, SolveStatus::OptimalFound);
        assert_eq!(r.node_count, 1);
        assert!(r.trajectory.is_empty());
        assert!((r.primal_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn knapsack_with_branching() {
        // max 5a + 4b + 3c  s.t. 2a + 3b + c <= 5 , 4a + b + 2c <= 11, 3a + 4b + 2c <= 8
        let inst = MilpInstance::new(
            vec![-5.0, -4.0, -3.0],
            vec![
                vec![(0, 2.0), (1, 3.0), (2, 1.0)],
                vec![(0, 4.0), (1, 1.0), (2, 2.0)],
                vec![(0, 3.0), (1, 4.0), (2, 2.0)],
            ],
            vec![5.0, 11.0, 8.0],
            vec![0.0; 3],
            vec![10.0; 3],
            vec![true; 3],
        )
        .unwrap();
        let r = solve(&inst, &mut FullStrong::new(Default::default()), &SolveOptions::default(), 0).unwrap();
        assert_eq!(r.status, SolveStatus::OptimalFound);
        assert!((r.primal_bound + 13.0).abs() < 1e-9);
        assert!((r.dual_bound - r.primal_bound).abs() < 1e-9);
    }

    #[test]
    fn node_limit_reports_open_bound() {
        let inst = crate::milp::generate(&crate::milp::GeneratorSpec::set_cover(40, 60, 0.2, 1000)).unwrap();
        let opts = SolveOptions {
            limits: SolveLimits {
                max_nodes: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = solve(&inst, &mut RandomBrancher, &opts, 0).unwrap();
        assert_eq!(r.status, SolveStatus::NodeLimitHit);
        assert!(r.node_count <= 5);
        assert!(r.dual_bound <= r.primal_bound);
    }
}

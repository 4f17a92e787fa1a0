//! Paired evaluation of a branching strategy over instances and seeds.

use std::sync::Arc;

use rayon::prelude::*;
use treebranch_core::bnb::{solve, SolveOptions, SolveStatus};
use treebranch_core::branching::Brancher;
use treebranch_core::metrics::{aggregate, EvalRow, RunStatus};
use treebranch_core::milp::MilpInstance;

use crate::policy::{ActionMode, Policy, PolicyBrancher};

#[derive(Debug, Clone)]
pub struct NamedInstance {
    pub name: String,
    pub instance: MilpInstance,
}

/// Solves every `(instance, seed)` pair. Rows come back in instance-major
/// order regardless of how the runs were scheduled. A failed run becomes a
/// `Failed` row.
pub fn evaluate<F>(
    policy_name: &str,
    make: F,
    instances: &[NamedInstance],
    seeds: &[u64],
    opts: &SolveOptions,
) -> Vec<EvalRow>
where
    F: Fn() -> Result<Box<dyn Brancher + Send>, String> + Sync,
{
    let jobs: Vec<(usize, u64)> = (0..instances.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    jobs.par_iter()
        .map(|&(i, seed)| {
            let inst = &instances[i];
            let mut row = EvalRow {
                instance: inst.name.clone(),
                seed,
                policy: policy_name.to_string(),
                node_count: 0,
                wall_time: 0.0,
                status: RunStatus::Failed,
            };
            let outcome = make().and_then(|mut b| solve(&inst.instance, &mut *b, opts, seed).map_err(|e| e.to_string()));
            if let Ok(r) = outcome {
                row.node_count = r.node_count;
                row.wall_time = r.wall_time.as_secs_f64();
                row.status = match r.status {
                    SolveStatus::OptimalFound => RunStatus::Optimal,
                    SolveStatus::NodeLimitHit => RunStatus::NodeLimit,
                    SolveStatus::TimeLimitHit => RunStatus::TimeLimit,
                    SolveStatus::Infeasible => RunStatus::Infeasible,
                };
            }
            row
        })
        .collect()
}

/// 10-shifted geometric mean of tree sizes of the greedy policy.
pub fn policy_geomean_nodes(policy: &Policy, instances: &[NamedInstance], seeds: &[u64], opts: &SolveOptions) -> f64 {
    let shared = Arc::new(policy.clone());
    let rows = evaluate(
        "policy",
        || Ok(Box::new(PolicyBrancher::new(shared.clone(), ActionMode::Greedy)) as Box<dyn Brancher + Send>),
        instances,
        seeds,
        opts,
    );
    aggregate(&rows).geomean_nodes
}

//! Reporting aggregates over evaluation runs.

use std::collections::BTreeMap;

/// Shift used for node counts.
pub const NODE_SHIFT: f64 = 10.0;
/// Shift used for wall times in seconds.
pub const TIME_SHIFT: f64 = 1.0;

/// `exp(mean(log(v + shift))) - shift`; `NaN` for an empty slice.
pub fn shifted_geomean(values: &[f64], shift: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    // sum in sorted order so the result does not depend on row order
    let mut logs: Vec<f64> = values.iter().map(|v| (v + shift).ln()).collect();
    logs.sort_by(f64::total_cmp);
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    mean.exp() - shift
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RunStatus {
    Optimal,
    NodeLimit,
    TimeLimit,
    Infeasible,
    Failed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Optimal => "optimal",
            RunStatus::NodeLimit => "node_limit",
            RunStatus::TimeLimit => "time_limit",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "optimal" => RunStatus::Optimal,
            "node_limit" => RunStatus::NodeLimit,
            "time_limit" => RunStatus::TimeLimit,
            "infeasible" => RunStatus::Infeasible,
            "failed" => RunStatus::Failed,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub instance: String,
    pub seed: u64,
    pub policy: String,
    pub node_count: usize,
    pub wall_time: f64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregates {
    pub geomean_nodes: f64,
    pub geomean_time: f64,
    /// Mean over instances of std(nodes across seeds) / mean(nodes across seeds).
    pub per_instance_rel_std: f64,
    pub runs: usize,
    pub failures: usize,
}

/// Aggregates over rows. Failed runs are counted but excluded.
pub fn aggregate(rows: &[EvalRow]) -> Aggregates {
    let ok: Vec<&EvalRow> = rows.iter().filter(|r| r.status != RunStatus::Failed).collect();
    let nodes: Vec<f64> = ok.iter().map(|r| r.node_count as f64).collect();
    let times: Vec<f64> = ok.iter().map(|r| r.wall_time).collect();
    let mut by_instance: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in &ok {
        by_instance.entry(&r.instance).or_default().push(r.node_count as f64);
    }
    let mut rel = Vec::with_capacity(by_instance.len());
    for v in by_instance.values_mut() {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        rel.push(if mean > 0.0 { var.sqrt() / mean } else { 0.0 });
    }
    let per_instance_rel_std = if rel.is_empty() {
        f64::NAN
    } else {
        rel.iter().sum::<f64>() / rel.len() as f64
    };
    Aggregates {
        geomean_nodes: shifted_geomean(&nodes, NODE_SHIFT),
        geomean_time: shifted_geomean(&times, TIME_SHIFT),
        per_instance_rel_std,
        runs: ok.len(),
        failures: rows.len() - ok.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(inst: &str, seed: u64, nodes: usize) -> EvalRow {
        EvalRow {
            instance: inst.into(),
            seed,
            policy: "p".into(),
            node_count: nodes,
            wall_time: 0.5,
            status: RunStatus::Optimal,
        }
    }

    #[test]
    fn shift_ten_pair() {
        let expected = (20.0f64 * 110.0).sqrt() - 10.0;
        assert!((shifted_geomean(&[10.0, 100.0], 10.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn shift_zero_is_plain_geomean() {
        let v = [2.0, 8.0, 4.0];
        assert!((shifted_geomean(&v, 0.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_value() {
        assert!((shifted_geomean(&[37.0], 10.0) - 37.0).abs() < 1e-12);
    }

    #[test]
    fn failures_excluded() {
        let mut rows = vec![row("a", 0, 10), row("a", 1, 30)];
        rows.push(EvalRow {
            status: RunStatus::Failed,
            ..row("b", 0, 1_000_000)
        });
        let a = aggregate(&rows);
        assert_eq!(a.failures, 1);
        assert_eq!(a.runs, 2);
        assert!((a.per_instance_rel_std - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn permutation_invariant(nodes in proptest::collection::vec(1usize..5000, 1..30), seed in any::<u64>()) {
            let rows: Vec<EvalRow> = nodes.iter().enumerate()
                .map(|(i, &n)| row(&format!("i{}", i % 4), i as u64, n)).collect();
            let mut shuffled = rows.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate(&rows), aggregate(&shuffled));
        }
    }
}

//! Random instance families: set cover, multiple knapsack, independent set.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MilpError, MilpInstance};

const MAX_ROW_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `rows` elements, `cols` candidate sets; each element joins a set with probability `density`.
    /// Set costs are drawn from `1..=max_cost`.
    SetCover {
        rows: usize,
        cols: usize,
        density: f64,
        max_cost: u32,
    },
    /// `items` items assigned to at most one of `knapsacks` knapsacks.
    MultiKnapsack { items: usize, knapsacks: usize },
    /// Erdős–Rényi graph with `nodes` vertices and edge probability `edge_prob`.
    IndepSet { nodes: usize, edge_prob: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Unit-cost set cover; small instances with wide cost ranges are usually solved at the root.
    pub fn set_cover(rows: usize, cols: usize, density: f64, seed: u64) -> Self {
        Self {
            family: Family::SetCover {
                rows,
                cols,
                density,
                max_cost: 1,
            },
            seed,
        }
    }

    /// Changes the cost range of a set cover spec; other families are returned unchanged.
    pub fn with_max_cost(mut self, max_cost: u32) -> Self {
        if let Family::SetCover { max_cost: m, .. } = &mut self.family {
            *m = max_cost;
        }
        self
    }

    pub fn multi_knapsack(items: usize, knapsacks: usize, seed: u64) -> Self {
        Self {
            family: Family::MultiKnapsack { items, knapsacks },
            seed,
        }
    }

    pub fn indep_set(nodes: usize, edge_prob: f64, seed: u64) -> Self {
        Self {
            family: Family::IndepSet { nodes, edge_prob },
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<(), MilpError> {
        let bad = |msg: &str| Err(MilpError::InvalidSpec(msg.to_string()));
        match self.family {
            Family::SetCover {
                rows,
                cols,
                density,
                max_cost,
            } => {
                if rows < 2 || cols < 2 {
                    return bad("set cover needs rows >= 2 and cols >= 2");
                }
                if max_cost < 1 {
                    return bad("max_cost must be at least 1");
                }
                if !(density > 0.0 && density <= 1.0) {
                    return bad("density must lie in (0, 1]");
                }
            }
            Family::MultiKnapsack { items, knapsacks } => {
                if items < 2 || knapsacks < 1 {
                    return bad("multiple knapsack needs items >= 2 and knapsacks >= 1");
                }
            }
            Family::IndepSet { nodes, edge_prob } => {
                if nodes < 2 {
                    return bad("independent set needs nodes >= 2");
                }
                if !(edge_prob > 0.0 && edge_prob <= 1.0) {
                    return bad("edge probability must lie in (0, 1]");
                }
            }
        }
        Ok(())
    }
}

/// Builds a feasible instance. Identical specs give identical instances.
pub fn generate(spec: &GeneratorSpec) -> Result<MilpInstance, MilpError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.family {
        Family::SetCover {
            rows,
            cols,
            density,
            max_cost,
        } => set_cover(rows, cols, density, max_cost, &mut rng),
        Family::MultiKnapsack { items, knapsacks } => multi_knapsack(items, knapsacks, &mut rng),
        Family::IndepSet { nodes, edge_prob } => indep_set(nodes, edge_prob, &mut rng),
    }
}

fn set_cover(
    rows: usize,
    cols: usize,
    density: f64,
    max_cost: u32,
    rng: &mut ChaCha8Rng,
) -> Result<MilpInstance, MilpError> {
    let mut constraints = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut row = Vec::new();
        for _ in 0..MAX_ROW_RESAMPLES {
            row = (0..cols)
                .filter(|_| rng.gen_bool(density))
                .map(|j| (j, -1.0))
                .collect();
            if !row.is_empty() {
                break;
            }
        }
        if row.is_empty() {
            return Err(MilpError::DegenerateSpec(format!(
                "row {i} stayed empty after {MAX_ROW_RESAMPLES} draws at density {density}"
            )));
        }
        constraints.push(row);
    }
    let costs = (0..cols).map(|_| rng.gen_range(1..=max_cost) as f64).collect();
    MilpInstance::new(
        costs,
        constraints,
        vec![-1.0; rows],
        vec![0.0; cols],
        vec![1.0; cols],
        vec![true; cols],
    )
}

/// Variable `i * knapsacks + k` puts item `i` into knapsack `k`.
fn multi_knapsack(
    items: usize,
    knapsacks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MilpInstance, MilpError> {
    let weights: Vec<f64> = (0..items).map(|_| rng.gen_range(16..=96) as f64).collect();
    let values: Vec<f64> = weights
        .iter()
        .map(|w| w + rng.gen_range(0..=10) as f64)
        .collect();
    let total: f64 = weights.iter().sum();
    let n = items * knapsacks;
    let mut objective = vec![0.0; n];
    let mut constraints = Vec::new();
    let mut rhs = Vec::new();
    for k in 0..knapsacks {
        let share = rng.gen_range(0.4..0.6) * total / knapsacks as f64;
        constraints.push((0..items).map(|i| (i * knapsacks + k, weights[i])).collect());
        rhs.push(share.floor().max(1.0));
    }
    for i in 0..items {
        for k in 0..knapsacks {
            objective[i * knapsacks + k] = -values[i];
        }
        if knapsacks > 1 {
            constraints.push((0..knapsacks).map(|k| (i * knapsacks + k, 1.0)).collect());
            rhs.push(1.0);
        }
    }
    MilpInstance::new(
        objective,
        constraints,
        rhs,
        vec![0.0; n],
        vec![1.0; n],
        vec![true; n],
    )
}

fn indep_set(nodes: usize, edge_prob: f64, rng: &mut ChaCha8Rng) -> Result<MilpInstance, MilpError> {
    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in (u + 1)..nodes {
            if rng.gen_bool(edge_prob) {
                edges.push(vec![(u, 1.0), (v, 1.0)]);
            }
        }
    }
    let mut rhs = vec![1.0; edges.len()];
    if edges.is_empty() {
        // an edgeless graph still needs one row; this one is redundant
        let mut all: Vec<(usize, f64)> = (0..nodes).map(|v| (v, 1.0)).collect();
        all.shuffle(rng);
        edges.push(all);
        rhs.push(nodes as f64);
    }
    MilpInstance::new(
        vec![-1.0; nodes],
        edges,
        rhs,
        vec![0.0; nodes],
        vec![1.0; nodes],
        vec![true; nodes],
    )
}

//! Seeded random instances for oracle comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treebranch_core::milp::MilpInstance;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random LP with at most `max_vars` variables and `max_rows` rows, finite
/// box bounds, mixed-sign coefficients. Some draws are infeasible.
pub fn random_box_lp(rng: &mut ChaCha8Rng, max_vars: usize, max_rows: usize) -> MilpInstance {
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=max_rows);
    let objective = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                row.push((j, rng.gen_range(-5.0..5.0)));
            }
        }
        if row.is_empty() {
            row.push((rng.gen_range(0..n), rng.gen_range(-5.0..5.0)));
        }
        rows.push(row);
        rhs.push(rng.gen_range(-4.0..10.0));
    }
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.5..8.0)).collect();
    MilpInstance::new(objective, rows, rhs, lower, upper, vec![false; n]).unwrap()
}

/// Random binary MILP with `x = 0` feasible. Coefficients are small integers
/// so ties and degenerate LPs show up regularly.
pub fn random_binary_milp(rng: &mut ChaCha8Rng, max_vars: usize) -> MilpInstance {
    let n = rng.gen_range(2..=max_vars);
    let m = rng.gen_range(1..=n.max(2));
    let objective = (0..n).map(|_| rng.gen_range(-10..=6) as f64).collect();
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                let v = rng.gen_range(-3..=9) as f64;
                if v != 0.0 {
                    row.push((j, v));
                }
            }
        }
        if row.is_empty() {
            row.push((rng.gen_range(0..n), 1.0));
        }
        let pos: f64 = row.iter().map(|&(_, v)| v.max(0.0)).sum();
        rows.push(row);
        rhs.push((rng.gen_range(0.2..0.7) * pos).floor().max(0.0) + rng.gen_range(0..=1) as f64);
    }
    MilpInstance::new(objective, rows, rhs, vec![0.0; n], vec![1.0; n], vec![true; n]).unwrap()
}

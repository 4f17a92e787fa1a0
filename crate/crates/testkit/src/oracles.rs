use treebranch_core::milp::MilpInstance;

/// Outcome of the vertex enumeration oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VertexOptimum {
    Optimal(f64),
    Infeasible,
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(p, c);
        b.swap(p, c);
        for i in 0..n {
            if i != c {
                let f = a[i][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[i][k] -= f * a[c][k];
                    }
                    b[i] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn for_each_subset(total: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, total: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..total {
            if total - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, total, k, cur, f);
            cur.pop();
        }
    }
    rec(0, total, k, &mut Vec::with_capacity(k), f);
}

/// Minimum of `c'x` over the LP relaxation by enumerating every basic point:
/// each choice of `n` tight constraints among the rows and the (finite) bounds.
/// Requires all bounds finite so the feasible region is a polytope.
pub fn lp_vertex_enumeration(inst: &MilpInstance) -> VertexOptimum {
    let n = inst.num_vars();
    let m = inst.num_rows();
    assert!(inst.lower().iter().chain(inst.upper()).all(|v| v.is_finite()));
    // every candidate hyperplane as (dense row, rhs)
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..m {
        let mut row = vec![0.0; n];
        let (cols, vals) = inst.matrix().row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            row[c] = v;
        }
        planes.push((row, inst.matrix().rhs()[i]));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), inst.lower()[j]));
        planes.push((e, inst.upper()[j]));
    }
    let feasible = |x: &[f64]| {
        (0..n).all(|j| x[j] >= inst.lower()[j] - 1e-9 && x[j] <= inst.upper()[j] + 1e-9)
            && (0..m).all(|i| inst.matrix().row_dot(i, x) <= inst.matrix().rhs()[i] + 1e-9)
    };
    let mut best = f64::INFINITY;
    for_each_subset(planes.len(), n, &mut |subset| {
        let a = subset.iter().map(|&k| planes[k].0.clone()).collect();
        let b = subset.iter().map(|&k| planes[k].1).collect();
        if let Some(x) = solve_dense(a, b) {
            if feasible(&x) {
                best = best.min(inst.objective_value(&x));
            }
        }
    });
    if best.is_finite() {
        VertexOptimum::Optimal(best)
    } else {
        VertexOptimum::Infeasible
    }
}

/// Exhaustive search over all integer points of a bounded pure-integer instance.
/// Returns the optimal objective, or `None` if no integer point is feasible.
pub fn milp_enumeration(inst: &MilpInstance) -> Option<f64> {
    let n = inst.num_vars();
    assert!((0..n).all(|j| inst.is_integer(j)));
    let lo: Vec<i64> = inst.lower().iter().map(|v| v.ceil() as i64).collect();
    let hi: Vec<i64> = inst.upper().iter().map(|v| v.floor() as i64).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return None;
    }
    let mut x: Vec<i64> = lo.clone();
    let mut point = vec![0.0; n];
    let mut best: Option<f64> = None;
    loop {
        for j in 0..n {
            point[j] = x[j] as f64;
        }
        let ok = (0..inst.num_rows())
            .all(|i| inst.matrix().row_dot(i, &point) <= inst.matrix().rhs()[i] + 1e-9);
        if ok {
            let v = inst.objective_value(&point);
            best = Some(best.map_or(v, |b| b.min(v)));
        }
        let mut j = 0;
        loop {
            if j == n {
                return best;
            }
            if x[j] < hi[j] {
                x[j] += 1;
                break;
            }
            x[j] = lo[j];
            j += 1;
        }
    }
}

/// Best value of a 0/1 knapsack by the classic capacity-indexed recurrence.
pub fn knapsack_dp(weights: &[u64], values: &[f64], capacity: u64) -> f64 {
    let cap = capacity as usize;
    let mut best = vec![0.0f64; cap + 1];
    for (&w, &v) in weights.iter().zip(values) {
        let w = w as usize;
        if w > cap {
            continue;
        }
        for c in (w..=cap).rev() {
            best[c] = best[c].max(best[c - w] + v);
        }
    }
    best[cap]
}

/// Central finite-difference derivative of `f` along coordinate `i` of `x`.
pub fn central_difference(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * h)
}

pub struct GradientCheck {
    /// `||a - n|| / max(||a|| + ||n||, 1e-8)` over the coordinates kept.
    pub relative_error: f64,
    /// Coordinates dropped because `f` is not smooth within `h` of the point.
    pub skipped: usize,
}

/// Compares an analytic gradient with central differences of step `h` on
/// the given coordinates. A coordinate whose central difference at `h/2`
/// disagrees with the one at `h` straddles a kink (ReLU, max, clipping) and
/// is left out.
pub fn gradient_check(
    params: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> GradientCheck {
    let mut x = params.to_vec();
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    let mut skipped = 0;
    for &i in coords {
        let num = central_difference(&mut x, i, h, &mut f);
        let half = central_difference(&mut x, i, h / 2.0, &mut f);
        if (num - half).abs() > 1e-6 * (num.abs() + half.abs()).max(1e-4) {
            skipped += 1;
            continue;
        }
        diff += (analytic[i] - num).powi(2);
        na += analytic[i].powi(2);
        nn += num * num;
    }
    GradientCheck {
        relative_error: diff.sqrt() / (na.sqrt() + nn.sqrt()).max(1e-8),
        skipped,
    }
}

/// `exp(mean(ln(v + shift))) - shift`, straight from the definition.
pub fn shifted_geomean_reference(values: &[f64], shift: f64) -> f64 {
    let mean_log = values.iter().map(|v| (v + shift).ln()).sum::<f64>() / values.len() as f64;
    mean_log.exp() - shift
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dp_small() {
        assert_eq!(knapsack_dp(&[1, 3, 4], &[15.0, 20.0, 30.0], 4), 35.0);
    }

    #[test]
    fn subsets_count() {
        let mut count = 0;
        for_each_subset(6, 3, &mut |_| count += 1);
        assert_eq!(count, 20);
    }
}

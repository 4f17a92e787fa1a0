//! Revised primal simplex for `min c'x, Ax + s = b, l <= x <= u, s >= 0`.
//!
//! Columns `0..n` are structural, `n..n+m` are row slacks. The basis inverse is
//! kept dense and updated with eta transformations, refactorized every
//! [`REFACTOR_EVERY`] pivots. Infeasible starting bases (cold or warm) go
//! through a composite phase one that minimizes the sum of bound violations
//! of the basic variables.

use thiserror::Error;

use crate::milp::{MilpInstance, Tolerances};

const REFACTOR_EVERY: usize = 64;
/// Ratio-test entries with smaller magnitude are treated as zero.
const RATIO_ZERO: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basis of an optimal solve, usable to warm-start a related LP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    /// Basic column per row.
    pub basic: Vec<usize>,
    /// Nonbasic columns resting at their upper bound.
    pub at_upper: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Structural values; empty unless optimal.
    pub solution: Vec<f64>,
    pub objective: f64,
    pub basis: Option<Basis>,
    pub iterations: usize,
}

impl LpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn without_solution(status: LpStatus, iterations: usize) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            solution: Vec::new(),
            objective,
            basis: None,
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpSettings {
    pub tol: Tolerances,
    pub max_iterations: usize,
}

impl Default for LpSettings {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            max_iterations: 50_000,
        }
    }
}

/// Solves the LP relaxation of `inst` (integrality ignored).
pub fn lp_solve(
    inst: &MilpInstance,
    warm: Option<&Basis>,
    settings: &LpSettings,
) -> Result<LpResult, LpError> {
    if inst.has_empty_domain() {
        return Ok(LpResult::without_solution(LpStatus::Infeasible, 0));
    }
    let mut simplex = Simplex::new(inst, settings);
    simplex.start(warm)?;
    simplex.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

struct Simplex<'a> {
    inst: &'a MilpInstance,
    settings: &'a LpSettings,
    n: usize,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    basic: Vec<usize>,
    /// Row of a basic column, `usize::MAX` for nonbasic.
    row_of: Vec<usize>,
    /// Dense row-major basis inverse.
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    // scratch
    y: Vec<f64>,
    alpha: Vec<f64>,
    phase_cost: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn new(inst: &'a MilpInstance, settings: &'a LpSettings) -> Self {
        let n = inst.num_vars();
        let m = inst.num_rows();
        let mut lower = inst.lower().to_vec();
        let mut upper = inst.upper().to_vec();
        lower.extend(std::iter::repeat(0.0).take(m));
        upper.extend(std::iter::repeat(f64::INFINITY).take(m));
        let mut cost = inst.objective().to_vec();
        cost.extend(std::iter::repeat(0.0).take(m));
        Self {
            inst,
            settings,
            n,
            m,
            lower,
            upper,
            cost,
            x: vec![0.0; n + m],
            basic: Vec::new(),
            row_of: vec![usize::MAX; n + m],
            binv: vec![0.0; m * m],
            since_refactor: 0,
            iterations: 0,
            y: vec![0.0; m],
            alpha: vec![0.0; m],
            phase_cost: vec![0.0; m],
        }
    }

    fn resting_value(&self, j: usize, prefer_upper: bool) -> f64 {
        let (l, u) = (self.lower[j], self.upper[j]);
        if prefer_upper && u.is_finite() {
            u
        } else if l.is_finite() {
            l
        } else if u.is_finite() {
            u
        } else {
            0.0
        }
    }

    fn set_basis(&mut self, basic: &[usize], at_upper: Option<&[bool]>) {
        self.basic = basic.to_vec();
        self.row_of.iter_mut().for_each(|r| *r = usize::MAX);
        for (r, &k) in basic.iter().enumerate() {
            self.row_of[k] = r;
        }
        for j in 0..self.n + self.m {
            if self.row_of[j] == usize::MAX {
                let up = at_upper.map_or(false, |a| a[j]);
                self.x[j] = self.resting_value(j, up);
            }
        }
    }

    fn start(&mut self, warm: Option<&Basis>) -> Result<(), LpError> {
        let total = self.n + self.m;
        if let Some(b) = warm {
            let mut seen = vec![false; total];
            let valid = b.basic.len() == self.m
                && b.at_upper.len() == total
                && b.basic.iter().all(|&k| k < total && !std::mem::replace(&mut seen[k], true));
            if valid {
                self.set_basis(&b.basic, Some(&b.at_upper));
                if self.refactor().is_ok() {
                    self.recompute_basic_values();
                    return Ok(());
                }
            }
        }
        let slack_basis: Vec<usize> = (self.n..total).collect();
        self.set_basis(&slack_basis, None);
        self.refactor()?;
        self.recompute_basic_values();
        Ok(())
    }

    fn column_dense(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            let (rows, vals) = self.inst.matrix().col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                out[i] = v;
            }
        } else {
            out[j - self.n] = 1.0;
        }
    }

    /// Gauss-Jordan inversion of the current basis matrix.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (r, &k) in self.basic.iter().enumerate() {
            self.column_dense(k, &mut col);
            for i in 0..m {
                a[i * m + r] = col[i];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, best) = (c..m)
                .map(|i| (i, a[i * m + c].abs()))
                .fold((c, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if best < self.settings.tol.pivot {
                return Err(LpError::NumericalBreakdown(format!(
                    "singular basis (pivot {best:.3e} in column {c})"
                )));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let piv = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= piv;
                inv[c * m + k] /= piv;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = a[i * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[i * m + k] -= f * a[c * m + k];
                        inv[i * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        Ok(())
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut resid = self.inst.matrix().rhs().to_vec();
        for j in 0..self.n + self.m {
            if self.row_of[j] != usize::MAX || self.x[j] == 0.0 {
                continue;
            }
            if j < self.n {
                let (rows, vals) = self.inst.matrix().col(j);
                for (&i, &v) in rows.iter().zip(vals) {
                    resid[i] -= v * self.x[j];
                }
            } else {
                resid[j - self.n] -= self.x[j];
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&resid).map(|(a, b)| a * b).sum();
            self.x[self.basic[r]] = v;
        }
    }

    /// Per-row phase-one cost (-1 below lower, +1 above upper), and the
    /// total violation. Zero total means primal feasible.
    fn infeasibility(&mut self) -> f64 {
        let tol = self.settings.tol.feasibility * 1e-2;
        let mut total = 0.0;
        for r in 0..self.m {
            let k = self.basic[r];
            let v = self.x[k];
            self.phase_cost[r] = if v < self.lower[k] - tol {
                total += self.lower[k] - v;
                -1.0
            } else if v > self.upper[k] + tol {
                total += v - self.upper[k];
                1.0
            } else {
                0.0
            };
        }
        total
    }

    fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    fn btran(&mut self, phase_one: bool) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..m {
            let c = if phase_one {
                self.phase_cost[r]
            } else {
                self.cost[self.basic[r]]
            };
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, &b) in self.y.iter_mut().zip(row) {
                    *yi += c * b;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize, phase_one: bool) -> f64 {
        let c = if phase_one { 0.0 } else { self.cost[j] };
        if j < self.n {
            let (rows, vals) = self.inst.matrix().col(j);
            c - rows.iter().zip(vals).map(|(&i, &v)| self.y[i] * v).sum::<f64>()
        } else {
            c - self.y[j - self.n]
        }
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self, phase_one: bool, rule: Pricing) -> Option<(usize, f64)> {
        let tol = self.settings.tol.optimality;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.n + self.m {
            if self.row_of[j] != usize::MAX || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j, phase_one);
            let dir = if d < -tol && self.x[j] < self.upper[j] {
                1.0
            } else if d > tol && self.x[j] > self.lower[j] {
                -1.0
            } else {
                continue;
            };
            match rule {
                Pricing::Bland => return Some((j, dir)),
                Pricing::Dantzig => {
                    if best.map_or(true, |(_, _, s)| d.abs() > s) {
                        best = Some((j, dir, d.abs()));
                    }
                }
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ftran(&mut self, j: usize) {
        let m = self.m;
        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            let (rows, vals) = self.inst.matrix().col(j);
            for r in 0..m {
                let row = &self.binv[r * m..(r + 1) * m];
                self.alpha[r] = rows.iter().zip(vals).map(|(&i, &v)| row[i] * v).sum();
            }
        } else {
            let i = j - self.n;
            for r in 0..m {
                self.alpha[r] = self.binv[r * m + i];
            }
        }
    }

    /// Step length and blocking row (`None` = bound flip of the entering column).
    fn ratio_test(&self, q: usize, dir: f64, rule: Pricing) -> (f64, Option<usize>) {
        let tol = self.settings.tol.feasibility * 1e-2;
        let mut step = self.upper[q] - self.lower[q];
        let mut leave: Option<usize> = None;
        let mut leave_mag = 0.0;
        for r in 0..self.m {
            let rate = -dir * self.alpha[r];
            if rate.abs() <= RATIO_ZERO {
                continue;
            }
            let k = self.basic[r];
            let (v, l, u) = (self.x[k], self.lower[k], self.upper[k]);
            let limit = if rate > 0.0 {
                if v < l - tol {
                    (l - v) / rate
                } else if v > u + tol || u == f64::INFINITY {
                    continue;
                } else {
                    ((u - v) / rate).max(0.0)
                }
            } else if v > u + tol {
                (v - u) / -rate
            } else if v < l - tol || l == f64::NEG_INFINITY {
                continue;
            } else {
                ((v - l) / -rate).max(0.0)
            };
            let better = match leave {
                None => limit < step,
                Some(cur) => {
                    if limit < step - 1e-12 {
                        true
                    } else if limit <= step + 1e-12 {
                        match rule {
                            Pricing::Dantzig => rate.abs() > leave_mag,
                            Pricing::Bland => k < self.basic[cur],
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                step = limit;
                leave = Some(r);
                leave_mag = rate.abs();
            }
        }
        (step, leave)
    }

    fn pivot(&mut self, q: usize, dir: f64, step: f64, leave: Option<usize>) -> Result<(), LpError> {
        let m = self.m;
        if step > 0.0 {
            self.x[q] += dir * step;
            for r in 0..m {
                let k = self.basic[r];
                self.x[k] -= dir * step * self.alpha[r];
            }
        }
        let Some(r) = leave else {
            // bound flip: snap exactly onto the opposite bound
            self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            return Ok(());
        };
        let k = self.basic[r];
        let rate = -dir * self.alpha[r];
        let tol = self.settings.tol.feasibility * 1e-2;
        // the leaving column rests on the bound it reached
        self.x[k] = if rate > 0.0 {
            if self.x[k] <= self.lower[k] + tol && self.lower[k].is_finite() {
                self.lower[k]
            } else {
                self.upper[k]
            }
        } else if self.x[k] >= self.upper[k] - tol && self.upper[k].is_finite() {
            self.upper[k]
        } else {
            self.lower[k]
        };
        let piv = self.alpha[r];
        if piv.abs() < self.settings.tol.pivot {
            return Err(LpError::NumericalBreakdown(format!(
                "pivot magnitude {:.3e} on column {q}",
                piv.abs()
            )));
        }
        for c in 0..m {
            self.binv[r * m + c] /= piv;
        }
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = self.alpha[i];
            if f != 0.0 {
                for c in 0..m {
                    self.binv[i * m + c] -= f * self.binv[r * m + c];
                }
            }
        }
        self.row_of[k] = usize::MAX;
        self.row_of[q] = r;
        self.basic[r] = q;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
            self.recompute_basic_values();
        }
        Ok(())
    }

    fn run(&mut self) -> Result<LpResult, LpError> {
        let stall_limit = 50 * (self.m + self.n);
        let mut rule = Pricing::Dantzig;
        let mut best_value = f64::INFINITY;
        let mut best_phase_one = true;
        let mut stalled = 0usize;
        loop {
            let infeas = self.infeasibility();
            let phase_one = infeas > 0.0;
            let value = if phase_one { infeas } else { self.objective() };

            if phase_one != best_phase_one || value < best_value - 1e-12 * (1.0 + value.abs()) {
                best_value = value;
                best_phase_one = phase_one;
                stalled = 0;
                rule = Pricing::Dantzig;
            } else {
                stalled += 1;
                if stalled >= stall_limit {
                    rule = Pricing::Bland;
                }
            }

            self.btran(phase_one);
            let Some((q, dir)) = self.price(phase_one, rule) else {
                if self.since_refactor > 0 {
                    // confirm on a fresh factorization before declaring a verdict
                    self.refactor()?;
                    self.recompute_basic_values();
                    let again = self.infeasibility();
                    self.btran(again > 0.0);
                    if self.price(again > 0.0, rule).is_some() {
                        continue;
                    }
                }
                let infeas = self.infeasibility();
                if infeas > 0.0 {
                    return Ok(LpResult::without_solution(LpStatus::Infeasible, self.iterations));
                }
                return Ok(self.finish());
            };

            if self.iterations >= self.settings.max_iterations {
                return Err(LpError::IterationLimit(self.settings.max_iterations));
            }
            self.iterations += 1;

            self.ftran(q);
            let (step, leave) = self.ratio_test(q, dir, rule);
            if step.is_infinite() {
                if phase_one {
                    return Err(LpError::NumericalBreakdown(
                        "unbounded ray during phase one".into(),
                    ));
                }
                return Ok(LpResult::without_solution(LpStatus::Unbounded, self.iterations));
            }
            self.pivot(q, dir, step, leave)?;
        }
    }

    fn finish(&self) -> LpResult {
        let n = self.n;
        let solution: Vec<f64> = (0..n)
            .map(|j| self.x[j].clamp(self.lower[j], self.upper[j]))
            .collect();
        let objective = self.inst.objective_value(&solution);
        let at_upper = (0..n + self.m)
            .map(|j| {
                self.row_of[j] == usize::MAX
                    && self.upper[j].is_finite()
                    && self.x[j] == self.upper[j]
                    && self.lower[j] != self.upper[j]
            })
            .collect();
        LpResult {
            status: LpStatus::Optimal,
            solution,
            objective,
            basis: Some(Basis {
                basic: self.basic.clone(),
                at_upper,
            }),
            iterations: self.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(obj: f64, row: f64, rhs: f64, lo: f64, up: f64) -> MilpInstance {
        MilpInstance::new(vec![obj], vec![vec![(0, row)]], vec![rhs], vec![lo], vec![up], vec![false])
            .unwrap()
    }

    #[test]
    fn single_variable_vertex() {
        let r = lp_solve(&single(-1.0, 1.0, 3.0, 0.0, 10.0), None, &LpSettings::default()).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.solution[0] - 3.0).abs() < 1e-12);
        assert!((r.objective + 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let r = lp_solve(&single(0.0, 1.0, -1.0, 0.0, f64::INFINITY), None, &LpSettings::default())
            .unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let inst = MilpInstance::new(
            vec![-1.0, 0.0],
            vec![vec![(1, 1.0)]],
            vec![1.0],
            vec![0.0, 0.0],
            vec![f64::INFINITY, 1.0],
            vec![false; 2],
        )
        .unwrap();
        let r = lp_solve(&inst, None, &LpSettings::default()).unwrap();
        assert_eq!(r.status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable() {
        // min x  s.t. -x <= 2, x free  ->  x = -2
        let r = lp_solve(
            &single(1.0, -1.0, 2.0, f64::NEG_INFINITY, f64::INFINITY),
            None,
            &LpSettings::default(),
        )
        .unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.solution[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_domain_after_branching_is_infeasible() {
        let inst = single(1.0, 1.0, 5.0, 1.0, 4.0);
        // value 0.5 lies below the lower bound: the down child gets upper 0 < lower 1
        let (down, _) = inst.branch(0, 0.5, 1e-6).unwrap();
        let r = lp_solve(&down, None, &LpSettings::default()).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn warm_start_matches_cold() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, 0 <= x, y <= 10
        let inst = MilpInstance::new(
            vec![-1.0, -1.0],
            vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 3.0), (1, 1.0)]],
            vec![4.0, 6.0],
            vec![0.0; 2],
            vec![10.0; 2],
            vec![true; 2],
        )
        .unwrap();
        let s = LpSettings::default();
        let root = lp_solve(&inst, None, &s).unwrap();
        assert!((root.objective + 2.8).abs() < 1e-9);
        let (down, up) = inst.branch(0, root.solution[0], 1e-6).unwrap();
        for child in [down, up] {
            let cold = lp_solve(&child, None, &s).unwrap();
            let warm = lp_solve(&child, root.basis.as_ref(), &s).unwrap();
            assert_eq!(cold.status, warm.status);
            assert!((cold.objective - warm.objective).abs() < 1e-9);
        }
    }

    #[test]
    fn garbage_warm_basis_falls_back() {
        let inst = single(-1.0, 1.0, 3.0, 0.0, 10.0);
        let bogus = Basis {
            basic: vec![5],
            at_upper: vec![false; 2],
        };
        let r = lp_solve(&inst, Some(&bogus), &LpSettings::default()).unwrap();
        assert!((r.objective + 3.0).abs() < 1e-12);
    }
}

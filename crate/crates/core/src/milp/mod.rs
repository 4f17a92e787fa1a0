//! MILP instances in `min c'x, Ax <= b, l <= x <= u` form.

mod format;
mod generate;

use std::sync::Arc;

use thiserror::Error;

pub use format::{read_instance, write_instance, ParseError};
pub use generate::{generate, Family, GeneratorSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid branch on x{var}: value {value} is integral")]
    InvalidBranch { var: usize, value: f64 },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate generator spec: {0}")]
    DegenerateSpec(String),
}

/// Solver tolerances shared by the LP kernel, the tree search and the branchers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    pub integrality: f64,
    pub pivot: f64,
    pub optimality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-7,
            integrality: 1e-6,
            pivot: 1e-11,
            optimality: 1e-9,
        }
    }
}

/// Row-wise and column-wise copies of `A` plus the right-hand side `b`.
///
/// Immutable after construction; shared between a node and its children.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    rhs: Vec<f64>,
}

impl ConstraintMatrix {
    fn new(n: usize, rows: Vec<Vec<(usize, f64)>>, rhs: Vec<f64>) -> Result<Self, MilpError> {
        if rows.len() != rhs.len() {
            return Err(MilpError::InvalidInstance(format!(
                "{} rows but {} right-hand sides",
                rows.len(),
                rhs.len()
            )));
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut row_cols = Vec::new();
        let mut row_vals = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(MilpError::InvalidInstance(format!(
                        "row {i} has duplicate column {}",
                        w[0].0
                    )));
                }
            }
            for (c, v) in row {
                if c >= n {
                    return Err(MilpError::InvalidInstance(format!(
                        "row {i} references column {c} >= n = {n}"
                    )));
                }
                if !v.is_finite() {
                    return Err(MilpError::InvalidInstance(format!(
                        "row {i} has non-finite coefficient"
                    )));
                }
                row_cols.push(c);
                row_vals.push(v);
            }
            row_ptr.push(row_cols.len());
        }
        if rhs.iter().any(|b| !b.is_finite()) {
            return Err(MilpError::InvalidInstance("non-finite right-hand side".into()));
        }

        let mut counts = vec![0usize; n + 1];
        for &c in &row_cols {
            counts[c + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut col_rows = vec![0; row_cols.len()];
        let mut col_vals = vec![0.0; row_cols.len()];
        for i in 0..rhs.len() {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let c = row_cols[k];
                col_rows[next[c]] = i;
                col_vals[next[c]] = row_vals[k];
                next[c] += 1;
            }
        }
        Ok(Self {
            n,
            row_ptr,
            row_cols,
            row_vals,
            col_ptr,
            col_rows,
            col_vals,
            rhs,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Column indices and values of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.row_cols[r.clone()], &self.row_vals[r])
    }

    /// Row indices and values of column `j`, sorted by row.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.col_rows[r.clone()], &self.col_vals[r])
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.row_vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A mixed-integer linear program. Children created by [`MilpInstance::branch`]
/// share the objective, matrix and integrality mask with their parent and
/// only own their bound vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    objective: Arc<Vec<f64>>,
    matrix: Arc<ConstraintMatrix>,
    integrality: Arc<Vec<bool>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl MilpInstance {
    pub fn new(
        objective: Vec<f64>,
        rows: Vec<Vec<(usize, f64)>>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        integrality: Vec<bool>,
    ) -> Result<Self, MilpError> {
        let n = objective.len();
        if n == 0 {
            return Err(MilpError::InvalidInstance("no variables".into()));
        }
        if rows.is_empty() {
            return Err(MilpError::InvalidInstance("no constraints".into()));
        }
        if lower.len() != n || upper.len() != n || integrality.len() != n {
            return Err(MilpError::InvalidInstance(
                "bound or integrality vector length differs from n".into(),
            ));
        }
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(MilpError::InvalidInstance("non-finite objective".into()));
        }
        for j in 0..n {
            if lower[j].is_nan() || upper[j].is_nan() || lower[j] > upper[j] {
                return Err(MilpError::InvalidInstance(format!(
                    "bad bounds on x{j}: [{}, {}]",
                    lower[j], upper[j]
                )));
            }
            if lower[j] == f64::INFINITY || upper[j] == f64::NEG_INFINITY {
                return Err(MilpError::InvalidInstance(format!("empty domain on x{j}")));
            }
        }
        let matrix = ConstraintMatrix::new(n, rows, rhs)?;
        Ok(Self {
            objective: Arc::new(objective),
            matrix: Arc::new(matrix),
            integrality: Arc::new(integrality),
            lower,
            upper,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.matrix.num_rows()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn matrix(&self) -> &ConstraintMatrix {
        &self.matrix
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn integrality(&self) -> &[bool] {
        &self.integrality
    }

    pub fn is_integer(&self, j: usize) -> bool {
        self.integrality[j]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Copy of this instance with new bounds on `x_j`.
    pub fn with_bounds(&self, j: usize, lower: f64, upper: f64) -> Self {
        let mut child = self.clone();
        child.lower[j] = lower;
        child.upper[j] = upper;
        child
    }

    /// Copy of this instance with the objective replaced, sharing everything else.
    pub fn with_objective(&self, objective: Vec<f64>) -> Self {
        assert_eq!(objective.len(), self.num_vars());
        let mut out = self.clone();
        out.objective = Arc::new(objective);
        out
    }

    /// Splits on `x_j <= floor(v)` / `x_j >= ceil(v)`.
    ///
    /// A child can end up with `lower > upper` on `x_j`; the LP reports such a
    /// child as infeasible.
    pub fn branch(&self, j: usize, value: f64, tol: f64) -> Result<(Self, Self), MilpError> {
        if (value - value.round()).abs() <= tol {
            return Err(MilpError::InvalidBranch { var: j, value });
        }
        let down_upper = value.floor();
        let up_lower = value.ceil();
        let mut down = self.clone();
        down.upper[j] = down_upper.min(self.upper[j]);
        let mut up = self.clone();
        up.lower[j] = up_lower.max(self.lower[j]);
        Ok((down, up))
    }

    /// True if some variable has `lower > upper` (possible after branching).
    pub fn has_empty_domain(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
    }

    /// Checks `Ax <= b`, bounds and integrality for a candidate point.
    pub fn is_feasible(&self, x: &[f64], tol: &Tolerances) -> bool {
        if x.len() != self.num_vars() {
            return false;
        }
        for j in 0..x.len() {
            if x[j] < self.lower[j] - tol.feasibility || x[j] > self.upper[j] + tol.feasibility {
                return false;
            }
            if self.integrality[j] && (x[j] - x[j].round()).abs() > tol.integrality {
                return false;
            }
        }
        (0..self.num_rows())
            .all(|i| self.matrix.row_dot(i, x) <= self.matrix.rhs[i] + tol.feasibility)
    }
}

/// Integer variables whose LP value is more than `tol` away from an integer, ascending.
pub fn fractional_candidates(instance: &MilpInstance, solution: &[f64], tol: f64) -> Vec<usize> {
    solution
        .iter()
        .enumerate()
        .filter(|&(j, &v)| instance.is_integer(j) && (v - v.round()).abs() > tol)
        .map(|(j, _)| j)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_instance(lower: Vec<f64>, upper: Vec<f64>) -> MilpInstance {
        let n = lower.len();
        MilpInstance::new(
            vec![1.0; n],
            vec![(0..n).map(|j| (j, 1.0)).collect()],
            vec![100.0],
            lower,
            upper,
            vec![true; n],
        )
        .unwrap()
    }

    #[test]
    fn fractional_candidates_examples() {
        let inst = box_instance(vec![0.0; 3], vec![10.0; 3]);
        assert_eq!(fractional_candidates(&inst, &[0.5, 1.0, 2.3], 1e-6), vec![0, 2]);
        assert!(fractional_candidates(&inst, &[0.0, 1.0, 2.0], 1e-6).is_empty());
        assert!(fractional_candidates(&inst, &[1.0 - 1e-9, 1.0, 2.0], 1e-6).is_empty());
    }

    #[test]
    fn fractional_candidates_skip_continuous() {
        let inst = MilpInstance::new(
            vec![1.0, 1.0],
            vec![vec![(0, 1.0)]],
            vec![1.0],
            vec![0.0; 2],
            vec![1.0; 2],
            vec![false, true],
        )
        .unwrap();
        assert_eq!(fractional_candidates(&inst, &[0.5, 0.5], 1e-6), vec![1]);
    }

    #[test]
    fn branch_bound_arithmetic() {
        let inst = box_instance(vec![0.0, -3.0], vec![10.0, 3.0]);
        let (down, up) = inst.branch(0, 2.4, 1e-6).unwrap();
        assert_eq!((down.lower()[0], down.upper()[0]), (0.0, 2.0));
        assert_eq!((up.lower()[0], up.upper()[0]), (3.0, 10.0));
        let (down, up) = inst.branch(1, -0.5, 1e-6).unwrap();
        assert_eq!((down.lower()[1], down.upper()[1]), (-3.0, -1.0));
        assert_eq!((up.lower()[1], up.upper()[1]), (0.0, 3.0));
        // untouched variable and shared data
        assert_eq!(down.lower()[0], 0.0);
        assert!(Arc::ptr_eq(&down.matrix, &inst.matrix));
    }

    #[test]
    fn branch_on_integral_value_is_rejected() {
        let inst = box_instance(vec![0.0], vec![10.0]);
        assert_eq!(
            inst.branch(0, 3.0 + 1e-9, 1e-6),
            Err(MilpError::InvalidBranch { var: 0, value: 3.0 + 1e-9 })
        );
    }

    #[test]
    fn constructor_validates() {
        assert!(MilpInstance::new(vec![], vec![vec![]], vec![0.0], vec![], vec![], vec![]).is_err());
        assert!(MilpInstance::new(vec![1.0], vec![], vec![], vec![0.0], vec![1.0], vec![true]).is_err());
        assert!(MilpInstance::new(
            vec![1.0],
            vec![vec![(0, 1.0)]],
            vec![1.0],
            vec![2.0],
            vec![1.0],
            vec![true]
        )
        .is_err());
        assert!(MilpInstance::new(
            vec![1.0, 1.0],
            vec![vec![(1, 1.0), (1, 2.0)]],
            vec![1.0],
            vec![0.0; 2],
            vec![1.0; 2],
            vec![true; 2]
        )
        .is_err());
        assert!(MilpInstance::new(
            vec![f64::NAN],
            vec![vec![(0, 1.0)]],
            vec![1.0],
            vec![0.0],
            vec![1.0],
            vec![true]
        )
        .is_err());
    }

    #[test]
    fn rows_are_sorted_and_columns_built() {
        let inst = MilpInstance::new(
            vec![1.0, 2.0, 3.0],
            vec![vec![(2, 3.0), (0, 1.0)], vec![(1, -1.0)]],
            vec![4.0, 5.0],
            vec![0.0; 3],
            vec![1.0; 3],
            vec![true; 3],
        )
        .unwrap();
        assert_eq!(inst.matrix().row(0), (&[0usize, 2][..], &[1.0, 3.0][..]));
        assert_eq!(inst.matrix().col(2), (&[0usize][..], &[3.0][..]));
        assert_eq!(inst.matrix().col(1), (&[1usize][..], &[-1.0][..]));
    }
}

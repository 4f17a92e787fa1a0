//! Fixed-width per-candidate features for learned branching policies.

use crate::bnb::NodeView;
use crate::branching::PseudocostTable;

pub const NUM_FEATURES: usize = 18;
const CLIP: f64 = 10.0;

/// Row-major `rows x NUM_FEATURES` matrix, one row per candidate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * NUM_FEATURES);
        Self { rows, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * NUM_FEATURES..(i + 1) * NUM_FEATURES]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Features for every candidate of `node`, in candidate order.
///
/// Columns: fractionality `f`, `1 - f`, scaled objective coefficient,
/// `x - floor(x)`, `ceil(x) - x`, up and down pseudocost averages, row
/// participation, mean and max `|a_ij|`, min and mean scaled slack of the
/// rows the variable appears in, depth, bound gain over the root, relative
/// gap, fractionality rank, binary flag, bias.
pub fn featurize(node: &NodeView<'_>, pseudocosts: &PseudocostTable) -> FeatureMatrix {
    let inst = node.instance;
    let x = &node.lp.solution;
    let mat = inst.matrix();
    let m = inst.num_rows() as f64;
    let c_scale = 1.0 + inst.objective().iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let a_scale = mat.max_abs().max(1e-12);
    let slack: Vec<f64> = (0..inst.num_rows())
        .map(|i| {
            let b = mat.rhs()[i];
            (b - mat.row_dot(i, x)) / (1.0 + b.abs())
        })
        .collect();
    let depth = node.depth as f64;
    let root = node.root_objective;
    let ldb = node.lp.objective;
    let gain = (ldb - root) / (1.0 + root.abs());
    let gap = if node.primal_bound.is_finite() {
        (node.primal_bound - ldb) / (1.0 + node.primal_bound.abs())
    } else {
        1.0
    };

    // rank of |f - 0.5| among candidates, ties broken by variable index
    let dist = |j: usize| (x[j] - x[j].floor() - 0.5).abs();
    let mut order: Vec<usize> = node.candidates.to_vec();
    order.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)));
    let k = node.candidates.len();

    let mut data = Vec::with_capacity(k * NUM_FEATURES);
    for &j in node.candidates {
        let f = x[j] - x[j].floor();
        let (rows, vals) = mat.col(j);
        let nnz = rows.len();
        let (mean_a, max_a) = if nnz == 0 {
            (0.0, 0.0)
        } else {
            let s: f64 = vals.iter().map(|v| v.abs()).sum();
            (s / nnz as f64 / a_scale, vals.iter().fold(0.0f64, |a, v| a.max(v.abs())) / a_scale)
        };
        let (min_slack, mean_slack) = if nnz == 0 {
            (0.0, 0.0)
        } else {
            let s = rows.iter().map(|&i| slack[i]);
            (s.clone().fold(f64::INFINITY, f64::min), s.sum::<f64>() / nnz as f64)
        };
        let rank = order.iter().position(|&v| v == j).unwrap() as f64;
        let rank = if k > 1 { rank / (k - 1) as f64 } else { 0.0 };
        let binary = inst.is_integer(j) && inst.lower()[j] >= 0.0 && inst.upper()[j] <= 1.0;
        let row = [
            f,
            1.0 - f,
            inst.objective()[j] / c_scale,
            x[j] - x[j].floor(),
            x[j].ceil() - x[j],
            pseudocosts.up_average(j) / c_scale,
            pseudocosts.down_average(j) / c_scale,
            nnz as f64 / m,
            mean_a,
            max_a,
            min_slack,
            mean_slack,
            depth / (1.0 + depth),
            gain,
            gap,
            rank,
            if binary { 1.0 } else { 0.0 },
            1.0,
        ];
        data.extend(row.iter().map(|v| if v.is_finite() { v.clamp(-CLIP, CLIP) } else { 0.0 }));
    }
    FeatureMatrix { rows: k, data }
}

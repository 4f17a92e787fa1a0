/// Per-variable history of dual-bound gain per unit of bound change.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudocostTable {
    down_sum: Vec<f64>,
    down_count: Vec<u32>,
    up_sum: Vec<f64>,
    up_count: Vec<u32>,
}

/// Smallest fractional distance used when converting a gain to a unit gain.
pub const MIN_FRACTION: f64 = 1e-6;

impl PseudocostTable {
    pub fn new(num_vars: usize) -> Self {
        Self {
            down_sum: vec![0.0; num_vars],
            down_count: vec![0; num_vars],
            up_sum: vec![0.0; num_vars],
            up_count: vec![0; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.down_sum.len()
    }

    /// Records a child bound gain. `fractionality` is `x - floor(x)` at the parent;
    /// the down branch moved `x` by `f`, the up branch by `1 - f`.
    pub fn update(&mut self, var: usize, up: bool, gain: f64, fractionality: f64) {
        debug_assert!(gain >= 0.0);
        if !gain.is_finite() {
            return;
        }
        let dist = if up { 1.0 - fractionality } else { fractionality };
        let unit = gain / dist.max(MIN_FRACTION);
        if up {
            self.up_sum[var] += unit;
            self.up_count[var] += 1;
        } else {
            self.down_sum[var] += unit;
            self.down_count[var] += 1;
        }
    }

    pub fn counts(&self, var: usize) -> (u32, u32) {
        (self.down_count[var], self.up_count[var])
    }

    fn global(sums: &[f64], counts: &[u32]) -> f64 {
        let n: u64 = counts.iter().map(|&c| c as u64).sum();
        if n == 0 {
            1.0
        } else {
            sums.iter().sum::<f64>() / n as f64
        }
    }

    pub fn down_average(&self, var: usize) -> f64 {
        match self.down_count[var] {
            0 => Self::global(&self.down_sum, &self.down_count),
            c => self.down_sum[var] / c as f64,
        }
    }

    pub fn up_average(&self, var: usize) -> f64 {
        match self.up_count[var] {
            0 => Self::global(&self.up_sum, &self.up_count),
            c => self.up_sum[var] / c as f64,
        }
    }
}

//! Exact optimal sequential grouping.
//!
//! `C(n, k)` is the minimum intra-group distance mass when the suffix of shots
//! `n..=N` is split into `k` contiguous groups:
//!
//! ```text
//! C(n, 1) = B(n, N)
//! C(n, k) = min_{n <= i <= N-k+1} B(n, i) + C(i + 1, k - 1)
//! ```
//!
//! where `B(a, b)` is the full double sum of `D` over `[a..=b]^2`. With the
//! summed-area table each term is O(1), so a full table costs O(N^2 K).

use crate::distance::DistanceMatrix;
use crate::error::{OsgError, Result};
use crate::model::Division;

/// Largest number of candidate divisions [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Hard-min DP table with the argmin of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    n: usize,
    k: usize,
    // (k-1) * n + (start-1); infinite where the cell is not defined
    cost: Vec<f64>,
    argmin: Vec<usize>,
}

impl DpTable {
    /// Fills levels `k = 1..=max_k`, each level by descending start index.
    pub fn build(d: &DistanceMatrix, max_k: usize) -> Result<Self> {
        let n = d.len();
        check_k(max_k, n)?;
        let mut table = Self { n, k: max_k, cost: vec![f64::INFINITY; n * max_k], argmin: vec![0; n * max_k] };
        for start in (1..=n).rev() {
            let idx = table.idx(start, 1);
            table.cost[idx] = d.block_sum_unchecked(start, n);
            table.argmin[idx] = n;
        }
        for k in 2..=max_k {
            for start in (1..=n + 1 - k).rev() {
                let mut best = f64::INFINITY;
                let mut best_i = start;
                for i in start..=n + 1 - k {
                    let g = d.block_sum_unchecked(start, i) + table.cost[table.idx(i + 1, k - 1)];
                    // strict comparison keeps the smallest index on ties
                    if g < best {
                        best = g;
                        best_i = i;
                    }
                }
                let idx = table.idx(start, k);
                table.cost[idx] = best;
                table.argmin[idx] = best_i;
            }
        }
        Ok(table)
    }

    #[inline]
    fn idx(&self, start: usize, k: usize) -> usize {
        (k - 1) * self.n + (start - 1)
    }

    pub fn n_shots(&self) -> usize {
        self.n
    }

    pub fn max_k(&self) -> usize {
        self.k
    }

    /// Whether `C(start, k)` is defined: `1 <= k <= K` and `1 <= start <= N-k+1`.
    pub fn is_defined(&self, start: usize, k: usize) -> bool {
        k >= 1 && k <= self.k && start >= 1 && start + k <= self.n + 1
    }

    /// `C(start, k)`, 1-based start.
    pub fn cost(&self, start: usize, k: usize) -> Result<f64> {
        self.check_cell(start, k)?;
        Ok(self.cost[self.idx(start, k)])
    }

    /// Index of the first division chosen at `C(start, k)`; `N` when `k = 1`.
    pub fn argmin(&self, start: usize, k: usize) -> Result<usize> {
        self.check_cell(start, k)?;
        Ok(self.argmin[self.idx(start, k)])
    }

    #[inline]
    pub(crate) fn cost_unchecked(&self, start: usize, k: usize) -> f64 {
        self.cost[self.idx(start, k)]
    }

    #[inline]
    pub(crate) fn argmin_unchecked(&self, start: usize, k: usize) -> usize {
        self.argmin[self.idx(start, k)]
    }

    fn check_cell(&self, start: usize, k: usize) -> Result<()> {
        if self.is_defined(start, k) {
            Ok(())
        } else {
            Err(OsgError::IndexOutOfRange(format!("cell (n={start}, k={k}) for N = {}, K = {}", self.n, self.k)))
        }
    }

    /// Follows stored argmins from `(1, k)`.
    pub fn traceback(&self, k: usize) -> Result<Division> {
        self.check_cell(1, k)?;
        let mut boundaries = Vec::with_capacity(k);
        let mut start = 1;
        for level in (2..=k).rev() {
            let i = self.argmin_unchecked(start, level);
            boundaries.push(i);
            start = i + 1;
        }
        boundaries.push(self.n);
        Division::new(boundaries, self.n)
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 1 || k > n {
        Err(OsgError::GroupCountOutOfRange { k, n })
    } else {
        Ok(())
    }
}

/// Sum of intra-group distances over all groups of `div`.
pub fn division_cost(d: &DistanceMatrix, div: &Division) -> Result<f64> {
    if div.n_shots() != d.len() {
        return Err(OsgError::DimensionMismatch { expected: d.len(), got: div.n_shots() });
    }
    Ok(div.groups().map(|(a, b)| d.block_sum_unchecked(a, b)).sum())
}

/// Optimal division into `k` groups, together with the filled table.
pub fn solve(d: &DistanceMatrix, k: usize) -> Result<(Division, DpTable)> {
    let table = DpTable::build(d, k)?;
    let div = table.traceback(k)?;
    Ok((div, table))
}

/// Exhaustive search over every division; ties go to the lexicographically
/// smallest boundary vector. Only meant as a reference for small inputs.
pub fn brute_force(d: &DistanceMatrix, k: usize) -> Result<(Division, f64)> {
    let n = d.len();
    check_k(k, n)?;
    let count = binomial(n as u128 - 1, k as u128 - 1);
    if count > BRUTE_FORCE_LIMIT {
        return Err(OsgError::TooLarge { count });
    }
    // cuts[j] is the last shot of group j, for the first k-1 groups
    let mut cuts: Vec<usize> = (1..k).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let mut boundaries = cuts.clone();
        boundaries.push(n);
        let div = Division::new(boundaries, n)?;
        let cost = division_cost(d, &div)?;
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((div.boundaries().to_vec(), cost));
        }
        if !next_combination(&mut cuts, n - 1) {
            break;
        }
    }
    let (b, c) = best.expect("at least one division exists");
    Ok((Division::new(b, n)?, c))
}

/// Advances `c` (strictly increasing values in `1..=max`) to the next combination in lexicographic order.
fn next_combination(c: &mut [usize], max: usize) -> bool {
    let m = c.len();
    for pos in (0..m).rev() {
        if c[pos] < max - (m - 1 - pos) {
            c[pos] += 1;
            for q in pos + 1..m {
                c[q] = c[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: u128, r: u128) -> u128 {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for j in 0..r {
        acc = acc * (n - j) / (j + 1);
        if acc > u64::MAX as u128 {
            return acc;
        }
    }
    acc
}

/// Candidate costs `G^{n,k}(i)` of one DP cell, for `i` in `[start, N-k+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GRow {
    pub start: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

impl GRow {
    /// The 1-based division index that `values[j]` corresponds to.
    pub fn index_of(&self, j: usize) -> usize {
        self.start + j
    }
}

/// Evaluates `G^{n,k}(i) = B(n, i) + C(i + 1, k - 1)` for a cell with `k >= 2`.
pub fn g_row(d: &DistanceMatrix, table: &DpTable, start: usize, k: usize) -> Result<GRow> {
    if d.len() != table.n_shots() {
        return Err(OsgError::DimensionMismatch { expected: table.n_shots(), got: d.len() });
    }
    if k < 2 || !table.is_defined(start, k) {
        return Err(OsgError::IndexOutOfRange(format!("G row (n={start}, k={k}) for N = {}, K = {}", table.n, table.k)));
    }
    Ok(g_row_unchecked(d, table, start, k))
}

pub(crate) fn g_row_unchecked(d: &DistanceMatrix, table: &DpTable, start: usize, k: usize) -> GRow {
    let n = d.len();
    let values = (start..=n + 1 - k).map(|i| d.block_sum_unchecked(start, i) + table.cost_unchecked(i + 1, k - 1)).collect();
    GRow { start, k, values }
}

/// Standardizes a row to zero mean and unit population standard deviation.
/// A row with no spread maps to all zeros.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let len = values.len() as f64;
    let mean = values.iter().sum::<f64>() / len;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
    let std = var.sqrt();
    if !std.is_finite() || std <= f64::EPSILON * mean.abs() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Two-modality division. Each modality keeps its own hard-min table; at every
/// traceback step the division index is taken from whichever modality has the
/// lowest standardized candidate cost. Ties between modalities go to `dx`.
pub fn solve_fused(dx: &DistanceMatrix, dy: &DistanceMatrix, k: usize) -> Result<Division> {
    let n = dx.len();
    if dy.len() != n {
        return Err(OsgError::DimensionMismatch { expected: n, got: dy.len() });
    }
    check_k(k, n)?;
    let tx = DpTable::build(dx, k)?;
    let ty = DpTable::build(dy, k)?;
    let mut boundaries = Vec::with_capacity(k);
    let mut start = 1;
    for level in (2..=k).rev() {
        let gx = standardize(&g_row_unchecked(dx, &tx, start, level).values);
        let gy = standardize(&g_row_unchecked(dy, &ty, start, level).values);
        let (jx, vx) = first_min(&gx);
        let (jy, vy) = first_min(&gy);
        let j = if vy < vx { jy } else { jx };
        let i = start + j;
        boundaries.push(i);
        start = i + 1;
    }
    boundaries.push(n);
    Division::new(boundaries, n)
}

fn first_min(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bj, bv), (j, v)| if v < bv { (j, v) } else { (bj, bv) })
}

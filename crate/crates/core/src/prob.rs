//! Division probabilities through the DP table, and the cross-entropy loss on
//! them with its exact reverse-mode gradient with respect to `D`.
//!
//! Every DP cell `(n, k)` with `k >= 2` turns its candidate costs `G^{n,k}`
//! into a probability vector with a temperature-1 softmin. The cells are then
//! averaged into a per-index score `T(i) = sum_{n,k} P^{n,k}(i) / (N K)`.
//! The candidate costs themselves come from the hard-min table.

use nalgebra::DMatrix;

use crate::distance::DistanceMatrix;
use crate::dp::{g_row_unchecked, DpTable};
use crate::error::{OsgError, Result};
use crate::model::SceneLabels;

/// Floor applied to `T(i)` before taking its log.
pub const SCORE_FLOOR: f64 = 1e-300;

/// `exp(-v_i) / sum_j exp(-v_j)`, shifted by the row minimum.
pub fn softmin(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out: Vec<f64> = values.iter().map(|v| (min - v).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// One softmin row: probabilities of dividing at `start..start + probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRow {
    pub start: usize,
    pub k: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbTable {
    pub n_shots: usize,
    pub k: usize,
    pub rows: Vec<ProbRow>,
}

impl ProbTable {
    /// `P^{n,k}(i)` for 1-based `i`; zero where the entry is undefined.
    pub fn prob(&self, start: usize, k: usize, i: usize) -> f64 {
        self.rows
            .iter()
            .find(|r| r.start == start && r.k == k)
            .and_then(|r| i.checked_sub(r.start).and_then(|j| r.probs.get(j)).copied())
            .unwrap_or(0.0)
    }
}

pub fn prob_table(d: &DistanceMatrix, k: usize) -> Result<ProbTable> {
    let n = d.len();
    check_prob_k(k, n)?;
    let table = DpTable::build(d, k)?;
    let mut rows = Vec::new();
    for level in 2..=k {
        for start in 1..=n + 1 - level {
            let g = g_row_unchecked(d, &table, start, level);
            rows.push(ProbRow { start, k: level, probs: softmin(&g.values) });
        }
    }
    Ok(ProbTable { n_shots: n, k, rows })
}

fn check_prob_k(k: usize, n: usize) -> Result<()> {
    if k < 2 {
        return Err(OsgError::InvalidInput("division probabilities need at least two groups".into()));
    }
    if k > n {
        return Err(OsgError::GroupCountOutOfRange { k, n });
    }
    Ok(())
}

/// Per-index division scores.
#[derive(Debug, Clone, PartialEq)]
pub struct DivisionScores {
    /// `t[i - 1] = T(i)`.
    pub t: Vec<f64>,
    /// Number of defined rows covering each index.
    pub counts: Vec<usize>,
}

impl DivisionScores {
    /// `T(i)` for 1-based `i`.
    pub fn at(&self, i: usize) -> f64 {
        self.t[i - 1]
    }

    /// Mean score over a set of 1-based indices.
    pub fn mean_at(&self, points: &[usize]) -> f64 {
        points.iter().map(|&i| self.at(i)).sum::<f64>() / points.len() as f64
    }
}

pub fn division_scores(pt: &ProbTable) -> DivisionScores {
    let n = pt.n_shots;
    let mut t = vec![0.0; n];
    let mut counts = vec![0; n];
    for row in &pt.rows {
        for (j, p) in row.probs.iter().enumerate() {
            t[row.start + j - 1] += p;
            counts[row.start + j - 1] += 1;
        }
    }
    let denom = (n * pt.k) as f64;
    for v in &mut t {
        *v /= denom;
    }
    DivisionScores { t, counts }
}

/// `-sum log T(i)` over the ground-truth division points.
pub fn ce_loss(scores: &DivisionScores, gt: &SceneLabels) -> Result<f64> {
    if gt.len() != scores.t.len() {
        return Err(OsgError::DimensionMismatch { expected: scores.t.len(), got: gt.len() });
    }
    let points = gt.division_points();
    if points.is_empty() {
        return Err(OsgError::NoAnnotatedDivision);
    }
    Ok(points.iter().map(|&i| -scores.at(i).max(SCORE_FLOOR).ln()).sum())
}

/// Forward composition: loss of the division scores of `d` against `gt`.
pub fn prob_loss(d: &DistanceMatrix, k: usize, gt: &SceneLabels) -> Result<f64> {
    ce_loss(&division_scores(&prob_table(d, k)?), gt)
}

/// Loss and `dloss/dD` through softmin rows, the hard-min recursion (routed
/// along the stored argmin) and the block sums. The returned gradient is
/// symmetric with a zero diagonal.
pub fn ce_loss_backward(d: &DistanceMatrix, k: usize, gt: &SceneLabels) -> Result<(f64, DMatrix<f64>)> {
    let n = d.len();
    check_prob_k(k, n)?;
    if gt.len() != n {
        return Err(OsgError::DimensionMismatch { expected: n, got: gt.len() });
    }
    let points = gt.division_points();
    if points.is_empty() {
        return Err(OsgError::NoAnnotatedDivision);
    }

    let table = DpTable::build(d, k)?;
    let pt = {
        let mut rows = Vec::new();
        for level in 2..=k {
            for start in 1..=n + 1 - level {
                let g = g_row_unchecked(d, &table, start, level);
                rows.push(ProbRow { start, k: level, probs: softmin(&g.values) });
            }
        }
        ProbTable { n_shots: n, k, rows }
    };
    let scores = division_scores(&pt);
    let loss = ce_loss(&scores, gt)?;

    // dloss/dP(i), identical for every row
    let denom = (n * k) as f64;
    let mut d_prob = vec![0.0; n + 1];
    for &i in &points {
        let t = scores.at(i);
        if t > SCORE_FLOOR {
            d_prob[i] -= 1.0 / (t * denom);
        }
    }

    // gradients on C(start, level), same layout as the table
    let mut d_cost = vec![0.0; n * k];
    let cell = |start: usize, level: usize| (level - 1) * n + start - 1;
    // gradient on the block sum B(a, b), stored at (a-1, b-1)
    let mut d_block = DMatrix::<f64>::zeros(n, n);

    let mut rows = pt.rows.iter().rev();
    for level in (2..=k).rev() {
        for start in (1..=n + 1 - level).rev() {
            let row = rows.next().expect("one row per cell");
            debug_assert_eq!((row.start, row.k), (start, level));
            let p = &row.probs;
            let inner: f64 = p.iter().enumerate().map(|(j, pj)| pj * d_prob[start + j]).sum();
            let mut d_g: Vec<f64> = p.iter().enumerate().map(|(j, pj)| -pj * (d_prob[start + j] - inner)).collect();
            d_g[table.argmin_unchecked(start, level) - start] += d_cost[cell(start, level)];
            for (j, g) in d_g.into_iter().enumerate() {
                let i = start + j;
                d_block[(start - 1, i - 1)] += g;
                d_cost[cell(i + 1, level - 1)] += g;
            }
        }
    }
    for start in 1..=n {
        d_block[(start - 1, n - 1)] += d_cost[cell(start, 1)];
    }

    Ok((loss, block_sum_adjoint(&d_block)))
}

/// Maps gradients on block sums `B(a, b)` (stored at `(a-1, b-1)`, `a <= b`) to
/// gradients on the entries of `D`: entry `(p, q)` lies in every block with
/// `a <= min(p, q)` and `b >= max(p, q)`. Diagonal is zeroed.
pub(crate) fn block_sum_adjoint(d_block: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d_block.nrows();
    // acc[(a, b)] = sum over a' <= a, b' >= b of d_block[(a', b')]
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        let mut suffix = 0.0;
        for b in (a..n).rev() {
            suffix += d_block[(a, b)];
            acc[(a, b)] = suffix + if a > 0 { acc[(a - 1, b)] } else { 0.0 };
        }
    }
    let mut grad = DMatrix::<f64>::zeros(n, n);
    for p in 0..n {
        for q in p + 1..n {
            grad[(p, q)] = acc[(p, q)];
            grad[(q, p)] = acc[(p, q)];
        }
    }
    grad
}

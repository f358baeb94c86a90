//! Triplet loss with semi-hard mining, and the block-diagonal Frobenius losses.
//!
//! All gradients are taken with respect to the entries of `D` as a full
//! matrix and returned symmetrized, `(g + g^T) / 2`, with a zero diagonal.
//! Summing `grad[(i, j)] * dD[(i, j)]` over all ordered pairs gives the first
//! order change of the loss for any symmetric perturbation `dD`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OsgError, Result};
use crate::model::SceneLabels;

/// Target distances: 0 within a scene, 1 across scenes, plus the mask of
/// entries whose scenes are equal or adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub values: DMatrix<f64>,
    pub adjacent_mask: DMatrix<bool>,
}

impl TargetMatrix {
    pub fn new(labels: &SceneLabels) -> Self {
        let l = labels.as_slice();
        let n = l.len();
        Self {
            values: DMatrix::from_fn(n, n, |i, j| if l[i] == l[j] { 0.0 } else { 1.0 }),
            adjacent_mask: DMatrix::from_fn(n, n, |i, j| l[i].abs_diff(l[j]) <= 1),
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn included(&self, i: usize, j: usize, adjacent_only: bool) -> bool {
        !adjacent_only || self.adjacent_mask[(i, j)]
    }
}

fn check_shape(d: &DMatrix<f64>, n: usize) -> Result<()> {
    if d.nrows() != n || d.ncols() != n {
        return Err(OsgError::DimensionMismatch { expected: n, got: d.nrows() });
    }
    Ok(())
}

/// `||D - D*||_F` over every entry, or only over the adjacent-scene mask.
pub fn block_loss(d: &DMatrix<f64>, target: &TargetMatrix, adjacent_only: bool) -> Result<f64> {
    let n = target.len();
    check_shape(d, n)?;
    let mut sq = 0.0;
    for j in 0..n {
        for i in 0..n {
            if target.included(i, j, adjacent_only) {
                sq += (d[(i, j)] - target.values[(i, j)]).powi(2);
            }
        }
    }
    Ok(sq.sqrt())
}

/// Gradient of [`block_loss`]; the zero matrix when the loss is zero.
pub fn block_loss_grad(d: &DMatrix<f64>, target: &TargetMatrix, adjacent_only: bool) -> Result<(f64, DMatrix<f64>)> {
    let loss = block_loss(d, target, adjacent_only)?;
    let n = target.len();
    let mut grad = DMatrix::zeros(n, n);
    if loss > 0.0 {
        for j in 0..n {
            for i in 0..n {
                if i != j && target.included(i, j, adjacent_only) {
                    grad[(i, j)] = (d[(i, j)] - target.values[(i, j)]) / loss;
                }
            }
        }
    }
    Ok((loss, symmetrize(grad)))
}

/// How the per-triple hinge is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HingeMode {
    /// `max(z, 0)`, the usual triplet hinge.
    #[default]
    Max,
    /// `min(z, 0)` exactly as printed in the original loss. Always zero on
    /// semi-hard triples; kept for auditing.
    LiteralMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletConfig {
    pub margin: f64,
    pub hinge: HingeMode,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { margin: 0.5, hinge: HingeMode::Max }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(OsgError::InvalidInput(format!("triplet margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }

    fn hinge(&self, z: f64) -> (f64, f64) {
        match self.hinge {
            HingeMode::Max if z > 0.0 => (z, 1.0),
            HingeMode::Max => (0.0, 0.0),
            HingeMode::LiteralMin if z < 0.0 => (z, 1.0),
            HingeMode::LiteralMin => (0.0, 0.0),
        }
    }
}

/// 0-based shot indices of one triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// All ordered triples with `D(a,p) < D(a,n) < D(a,p) + margin`, in
/// lexicographic `(a, p, n)` order.
pub fn mine_semi_hard(d: &DMatrix<f64>, labels: &SceneLabels, cfg: &TripletConfig) -> Result<Vec<Triplet>> {
    cfg.validate()?;
    let l = labels.as_slice();
    let n = l.len();
    check_shape(d, n)?;
    let mut out = Vec::new();
    for a in 0..n {
        for p in (0..n).filter(|&p| p != a && l[p] == l[a]) {
            let dap = d[(a, p)];
            for neg in (0..n).filter(|&x| l[x] != l[a]) {
                let dan = d[(a, neg)];
                if dap < dan && dan < dap + cfg.margin {
                    out.push(Triplet { anchor: a, positive: p, negative: neg });
                }
            }
        }
    }
    Ok(out)
}

/// Mean hinge over a fixed set of triples, with its gradient.
pub fn triplet_loss_on(d: &DMatrix<f64>, triples: &[Triplet], cfg: &TripletConfig) -> (f64, DMatrix<f64>) {
    let n = d.nrows();
    let mut grad = DMatrix::zeros(n, n);
    if triples.is_empty() {
        return (0.0, grad);
    }
    let m = triples.len() as f64;
    let mut loss = 0.0;
    for t in triples {
        let z = d[(t.anchor, t.positive)] - d[(t.anchor, t.negative)] + cfg.margin;
        let (value, slope) = cfg.hinge(z);
        loss += value;
        grad[(t.anchor, t.positive)] += slope / m;
        grad[(t.anchor, t.negative)] -= slope / m;
    }
    (loss / m, symmetrize(grad))
}

pub fn triplet_loss(d: &DMatrix<f64>, labels: &SceneLabels, cfg: &TripletConfig) -> Result<f64> {
    Ok(triplet_loss_grad(d, labels, cfg)?.0)
}

/// Mines on the current `D`, then differentiates with the mined set held fixed.
pub fn triplet_loss_grad(d: &DMatrix<f64>, labels: &SceneLabels, cfg: &TripletConfig) -> Result<(f64, DMatrix<f64>)> {
    let triples = mine_semi_hard(d, labels, cfg)?;
    Ok(triplet_loss_on(d, &triples, cfg))
}

pub(crate) fn symmetrize(mut g: DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    for i in 0..n {
        g[(i, i)] = 0.0;
        for j in i + 1..n {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

//! Number-of-groups estimation from the singular spectrum of `D`.
//!
//! An ideal block matrix (0 inside blocks, 1 outside) has rank equal to its
//! block count. The log singular values of a real matrix drop sharply after
//! that many values and then plateau; the estimate is the position of the
//! plateau's first point, located as the point of the log graph farthest from
//! the chord joining its two ends.

use crate::distance::DistanceMatrix;
use crate::error::{OsgError, Result};

pub const DEFAULT_EPSILON: f64 = 1e-12;
const EIGEN_TOLERANCE: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// Log singular values in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    pub log_values: Vec<f64>,
    pub epsilon: f64,
}

impl SingularSpectrum {
    /// Sorts `sigma` descending, clamps at `epsilon` and takes logs.
    pub fn from_singular_values(mut sigma: Vec<f64>, epsilon: f64) -> Self {
        sigma.sort_by(|a, b| b.total_cmp(a));
        let log_values = sigma.into_iter().map(|s| s.max(epsilon).ln()).collect();
        Self { log_values, epsilon }
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }
}

/// Singular values of a symmetric matrix are the absolute values of its eigenvalues.
pub fn singular_values(d: &DistanceMatrix) -> Result<Vec<f64>> {
    let eig = d.values().clone().try_symmetric_eigen(EIGEN_TOLERANCE, EIGEN_MAX_ITER).ok_or_else(|| {
        let m = d.values();
        let off: f64 = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].powi(2))
            .sum::<f64>()
            .sqrt();
        OsgError::NoConvergence { iterations: EIGEN_MAX_ITER, residual: off }
    })?;
    let mut sigma: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(sigma)
}

pub fn singular_spectrum(d: &DistanceMatrix) -> Result<SingularSpectrum> {
    Ok(SingularSpectrum::from_singular_values(singular_values(d)?, DEFAULT_EPSILON))
}

/// Perpendicular distance of each point `(j, s_j)` from the chord through the
/// first and last points of the log graph (`j` is 0-based).
pub fn elbow_distances(spec: &SingularSpectrum) -> Vec<f64> {
    let s = &spec.log_values;
    let n = s.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let hx = (n - 1) as f64;
    let hy = s[n - 1] - s[0];
    let len = hx.hypot(hy);
    s.iter()
        .enumerate()
        .map(|(j, &sj)| {
            let (px, py) = (j as f64, sj - s[0]);
            // |P - (P.Ĥ)Ĥ| in 2-D is the magnitude of the cross product with Ĥ
            (px * hy - py * hx).abs() / len
        })
        .collect()
}

/// Number of singular values preceding the elbow point, clamped to `[1, N]`.
/// A constant spectrum has no elbow and yields 1.
pub fn log_elbow(spec: &SingularSpectrum) -> usize {
    let n = spec.len();
    if n < 2 {
        return 1;
    }
    let dist = elbow_distances(spec);
    let mut best = 0;
    for (j, &v) in dist.iter().enumerate() {
        if v > dist[best] {
            best = j;
        }
    }
    best.clamp(1, n)
}

pub fn estimate_k(d: &DistanceMatrix) -> Result<usize> {
    if d.len() == 1 {
        return Ok(1);
    }
    Ok(log_elbow(&singular_spectrum(d)?).clamp(1, d.len()))
}

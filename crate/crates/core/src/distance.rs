//! Pairwise cosine distances and constant-time block sums.

use nalgebra::DMatrix;

use crate::error::{OsgError, Result};
use crate::model::FeatureSequence;

/// Cosine distance mapped affinely from `[-1, 1]` to `[0, 1]`: `(1 - cos) / 2`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(OsgError::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 {
        return Err(OsgError::ZeroVector { shot: 0 });
    }
    if nb == 0.0 {
        return Err(OsgError::ZeroVector { shot: 1 });
    }
    Ok(distance_from_cos(dot(a, b) / (na * nb)))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn distance_from_cos(cos: f64) -> f64 {
    ((1.0 - cos) / 2.0).clamp(0.0, 1.0)
}

/// Symmetric `N x N` distance matrix with a summed-area table over it.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: DMatrix<f64>,
    // (N+1)^2, row-major: prefix[a*(N+1)+b] = sum of values[..a, ..b]
    prefix: Vec<f64>,
}

impl DistanceMatrix {
    /// Pairwise normalized cosine distances between all shots.
    pub fn build(seq: &FeatureSequence) -> Result<Self> {
        let n = seq.len();
        let norms: Vec<f64> = seq.vectors().iter().map(|v| norm(v)).collect();
        if let Some(shot) = norms.iter().position(|&x| x == 0.0) {
            return Err(OsgError::ZeroVector { shot });
        }
        let mut values = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let cos = dot(&seq.vectors()[i], &seq.vectors()[j]) / (norms[i] * norms[j]);
                let d = distance_from_cos(cos);
                values[(i, j)] = d;
                values[(j, i)] = d;
            }
        }
        Ok(Self::with_prefix(values))
    }

    /// Wraps an explicit matrix. It must be square, finite, nonnegative,
    /// exactly symmetric and have a zero diagonal. Entries above 1 are allowed
    /// so that scaled matrices remain representable.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if n == 0 || values.ncols() != n {
            return Err(OsgError::InvalidInput(format!(
                "distance matrix must be square and nonempty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(OsgError::InvalidInput(format!("nonzero diagonal entry at {i}")));
            }
            for j in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(OsgError::InvalidInput(format!("entry ({i},{j}) = {v} is not a finite nonnegative distance")));
                }
                if v != values[(j, i)] {
                    return Err(OsgError::InvalidInput(format!("matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self::with_prefix(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(OsgError::InvalidInput("distance rows must form a square matrix".into()));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    fn with_prefix(values: DMatrix<f64>) -> Self {
        let n = values.nrows();
        let w = n + 1;
        let mut prefix = vec![0.0; w * w];
        for a in 0..n {
            let mut row_sum = 0.0;
            for b in 0..n {
                row_sum += values[(a, b)];
                prefix[(a + 1) * w + b + 1] = prefix[a * w + b + 1] + row_sum;
            }
        }
        Self { values, prefix }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// 0-based entry access.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Sum of all entries in the square block `[a..=b] x [a..=b]` (1-based, inclusive).
    pub fn block_sum(&self, a: usize, b: usize) -> Result<f64> {
        if a < 1 || a > b || b > self.len() {
            return Err(OsgError::IndexOutOfRange(format!("block ({a},{b}) for N = {}", self.len())));
        }
        Ok(self.block_sum_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn block_sum_unchecked(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let w = self.len() + 1;
        let p = &self.prefix;
        // inclusion-exclusion can leave a tiny negative residue on near-zero blocks
        (p[b * w + b] - p[(a - 1) * w + b] - p[b * w + a - 1] + p[(a - 1) * w + a - 1]).max(0.0)
    }

    /// The same matrix with shot order reversed.
    pub fn reversed(&self) -> Self {
        let n = self.len();
        Self::with_prefix(DMatrix::from_fn(n, n, |i, j| self.values[(n - 1 - i, n - 1 - j)]))
    }

    /// Every entry multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_matrix(&self.values * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureSequence {
        FeatureSequence::new((0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(0.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        DistanceMatrix::from_matrix(m).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(cosine_distance(&[2.0, 0.0], &[5.0, 0.0]).unwrap(), 0.0);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn build_examples() {
        let same = FeatureSequence::new(vec![vec![0.3, 0.4], vec![0.3, 0.4]]).unwrap();
        assert_eq!(DistanceMatrix::build(&same).unwrap().values(), &DMatrix::zeros(2, 2));
        let orth = FeatureSequence::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = DistanceMatrix::build(&orth).unwrap();
        assert_eq!(d.values(), &DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]));
    }

    #[test]
    fn build_matches_entrywise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seq = random_seq(&mut rng, 5, 4);
        let d = DistanceMatrix::build(&seq).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let (a, b) = (&seq.vectors()[i], &seq.vectors()[j]);
                let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
                    / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt());
                let expect = if i == j { 0.0 } else { (1.0 - cos) / 2.0 };
                assert!((d.get(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_sum_examples() {
        let d = DistanceMatrix::from_rows(&[vec![0.0, 0.1], vec![0.1, 0.0]]).unwrap();
        assert_eq!(d.block_sum(1, 1).unwrap(), 0.0);
        assert!((d.block_sum(1, 2).unwrap() - 0.2).abs() < 1e-15);
        assert!(d.block_sum(0, 1).is_err());
        assert!(d.block_sum(2, 1).is_err());
        assert!(d.block_sum(1, 3).is_err());
    }

    #[test]
    fn block_sum_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = random_matrix(&mut rng, 6);
            for a in 1..=6 {
                for b in a..=6 {
                    let mut direct = 0.0;
                    let mut upper = 0.0;
                    for i in a - 1..b {
                        for j in a - 1..b {
                            direct += d.get(i, j);
                            if j > i {
                                upper += d.get(i, j);
                            }
                        }
                    }
                    let s = d.block_sum(a, b).unwrap();
                    assert!((s - direct).abs() < 1e-9);
                    assert!((s - 2.0 * upper).abs() < 1e-9);
                    assert!(s >= 0.0);
                }
            }
            assert!((d.block_sum(1, 6).unwrap() - d.values().sum()).abs() < 1e-9);
        }
    }

    #[test]
    fn build_is_permutation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seq = random_seq(&mut rng, 7, 3);
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let permuted = FeatureSequence::new(perm.iter().map(|&p| seq.vectors()[p].clone()).collect()).unwrap();
        let d = DistanceMatrix::build(&seq).unwrap();
        let dp = DistanceMatrix::build(&permuted).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(dp.get(i, j), d.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn built_entries_in_unit_range_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = DistanceMatrix::build(&random_seq(&mut rng, 12, 5)).unwrap();
        for i in 0..12 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..12 {
                assert!((0.0..=1.0).contains(&d.get(i, j)));
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
    }

    #[test]
    fn from_matrix_validation() {
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 0.1], vec![0.2, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.1, 0.1], vec![0.1, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, -0.1], vec![-0.1, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 0.1]]).is_err());
        let seq = FeatureSequence::new_unchecked_zero(vec![vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(DistanceMatrix::build(&seq).unwrap_err(), OsgError::ZeroVector { shot: 1 });
    }
}

//! Shared domain types: feature sequences, per-shot scene labels and divisions.
//!
//! Divisions store 1-based "last shot of group" indices. Every other array in
//! the crate is 0-based; conversions happen here and in the file readers only.

use crate::error::{OsgError, Result};

/// An ordered list of per-shot feature vectors of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    vectors: Vec<Vec<f64>>,
}

impl FeatureSequence {
    /// Validates that the sequence is nonempty, rectangular, finite and free of zero vectors.
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let seq = Self::new_unchecked_zero(vectors)?;
        if let Some(shot) = seq.vectors.iter().position(|v| v.iter().all(|&x| x == 0.0)) {
            return Err(OsgError::ZeroVector { shot });
        }
        Ok(seq)
    }

    /// Like [`FeatureSequence::new`] but accepts zero vectors. Embedding outputs
    /// go through this; distance construction still rejects them.
    pub(crate) fn new_unchecked_zero(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(OsgError::InvalidInput("feature sequence is empty".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(OsgError::InvalidInput("feature dimension is zero".into()));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(OsgError::DimensionMismatch { expected: dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(OsgError::InvalidInput(format!("non-finite feature at shot {i}")));
            }
        }
        Ok(Self { vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<Vec<f64>> {
        self.vectors
    }

    /// Shots in reverse temporal order.
    pub fn reversed(&self) -> Self {
        let mut vectors = self.vectors.clone();
        vectors.reverse();
        Self { vectors }
    }
}

/// Per-shot scene index, 1-based, contiguous and nondecreasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneLabels {
    labels: Vec<usize>,
}

impl SceneLabels {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        match labels.first() {
            None => return Err(OsgError::InvalidInput("scene labels are empty".into())),
            Some(&l) if l != 1 => {
                return Err(OsgError::InvalidLabels { index: 0, reason: format!("first label is {l}, expected 1") })
            }
            _ => {}
        }
        for (i, w) in labels.windows(2).enumerate() {
            if w[1] != w[0] && w[1] != w[0] + 1 {
                return Err(OsgError::InvalidLabels {
                    index: i + 1,
                    reason: format!("label {} follows {}; labels must stay equal or increase by one", w[1], w[0]),
                });
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_scenes(&self) -> usize {
        *self.labels.last().expect("labels are nonempty")
    }

    /// Ground-truth division points: 1-based indices `i` with `L(i+1) > L(i)`.
    /// The final index `N` is not included.
    pub fn division_points(&self) -> Vec<usize> {
        self.labels
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0])
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Scene sizes in temporal order.
    pub fn scene_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_scenes()];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }

    pub fn from_scene_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(OsgError::InvalidInput("scene sizes must be at least 1".into()));
        }
        let labels = sizes.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat_n(i + 1, s)).collect();
        Self::new(labels)
    }
}

/// A partition of `N` shots into `K` contiguous groups.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Division {
    boundaries: Vec<usize>,
    n_shots: usize,
}

impl Division {
    /// `boundaries` are 1-based last indices of each group, strictly increasing, ending at `n_shots`.
    pub fn new(boundaries: Vec<usize>, n_shots: usize) -> Result<Self> {
        if n_shots == 0 {
            return Err(OsgError::InvalidInput("division over zero shots".into()));
        }
        if boundaries.last() != Some(&n_shots) {
            return Err(OsgError::InvalidInput(format!("last boundary must equal the shot count {n_shots}")));
        }
        if boundaries[0] < 1 {
            return Err(OsgError::InvalidInput("boundaries are 1-based".into()));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OsgError::InvalidInput("boundaries must be strictly increasing".into()));
        }
        Ok(Self { boundaries, n_shots })
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn n_shots(&self) -> usize {
        self.n_shots
    }

    pub fn num_groups(&self) -> usize {
        self.boundaries.len()
    }

    /// Groups as 1-based inclusive `(first, last)` ranges.
    pub fn groups(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let starts = std::iter::once(1).chain(self.boundaries.iter().map(|&t| t + 1));
        starts.zip(self.boundaries.iter().copied())
    }
}

pub fn labels_to_division(labels: &SceneLabels) -> Division {
    let mut boundaries = labels.division_points();
    boundaries.push(labels.len());
    Division::new(boundaries, labels.len()).expect("valid labels give a valid division")
}

pub fn division_to_labels(div: &Division) -> SceneLabels {
    let mut labels = Vec::with_capacity(div.n_shots());
    for (g, (first, last)) in div.groups().enumerate() {
        labels.extend(std::iter::repeat_n(g + 1, last + 1 - first));
    }
    SceneLabels::new(labels).expect("valid division gives valid labels")
}

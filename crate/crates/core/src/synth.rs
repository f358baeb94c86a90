//! Seeded synthetic videos: one unit-sphere cluster center per scene, shots
//! scattered around it with isotropic Gaussian noise and renormalized.
//!
//! Optionally every shot gets extra nuisance coordinates of pure noise that
//! carry no scene information. They sit at the same positions in every video,
//! so an embedding trained on one set of videos can learn to suppress them.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distance::{cosine_distance, norm, DistanceMatrix};
use crate::error::{OsgError, Result};
use crate::model::{FeatureSequence, SceneLabels};

pub const MAX_CENTER_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_scenes: usize,
    pub min_shots: usize,
    pub max_shots: usize,
    pub dim: usize,
    /// Lower bound on the normalized cosine distance between any two centers.
    pub min_center_distance: f64,
    /// Standard deviation of the per-coordinate noise added before renormalizing.
    pub sigma: f64,
    pub seed: u64,
    /// Number of nuisance coordinates appended after the `dim` scene coordinates.
    #[serde(default)]
    pub nuisance_dim: usize,
    /// Standard deviation of each nuisance coordinate.
    #[serde(default)]
    pub nuisance_sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { n_scenes: 4, min_shots: 3, max_shots: 8, dim: 16, min_center_distance: 0.3, sigma: 0.1, seed: 0, nuisance_dim: 0, nuisance_sigma: 0.0 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OsgError::InvalidInput(m.into()));
        if self.n_scenes < 1 {
            return bad("at least one scene is required");
        }
        if self.min_shots < 1 || self.max_shots < self.min_shots {
            return bad("shot range must satisfy 1 <= min <= max");
        }
        if self.dim < 2 {
            return bad("feature dimension must be at least 2");
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return bad("noise sigma must be finite and nonnegative");
        }
        if !self.nuisance_sigma.is_finite() || self.nuisance_sigma < 0.0 {
            return bad("nuisance sigma must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&self.min_center_distance) {
            return bad("center distance floor must lie in [0, 1]");
        }
        Ok(())
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&v);
        if len > 1e-12 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

fn centers(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(spec.n_scenes);
    let mut attempts = 0;
    while out.len() < spec.n_scenes {
        attempts += 1;
        if attempts > MAX_CENTER_ATTEMPTS {
            return Err(OsgError::SamplingFailed { k: spec.n_scenes, dim: spec.dim, attempts: MAX_CENTER_ATTEMPTS });
        }
        let c = random_unit(rng, spec.dim);
        if out.iter().all(|o| cosine_distance(o, &c).expect("unit vectors") >= spec.min_center_distance) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Generates one video's features and labels; deterministic per seed.
pub fn generate(spec: &SynthSpec) -> Result<(FeatureSequence, SceneLabels)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = centers(spec, &mut rng)?;
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (scene, center) in centers.iter().enumerate() {
        let shots = rng.random_range(spec.min_shots..=spec.max_shots);
        for _ in 0..shots {
            let shot = loop {
                let v: Vec<f64> = center.iter().map(|&c| c + spec.sigma * rng.sample::<f64, _>(StandardNormal)).collect();
                let len = norm(&v);
                if len > 1e-12 {
                    break v.into_iter().map(|x| x / len).collect::<Vec<_>>();
                }
            };
            let mut shot = shot;
            shot.extend((0..spec.nuisance_dim).map(|_| spec.nuisance_sigma * rng.sample::<f64, _>(StandardNormal)));
            vectors.push(shot);
            labels.push(scene + 1);
        }
    }
    Ok((FeatureSequence::new(vectors)?, SceneLabels::new(labels)?))
}

/// Exact 0/1 block matrix: 0 within a block, 1 across blocks.
pub fn ideal_block_matrix(block_sizes: &[usize]) -> Result<DistanceMatrix> {
    let labels = SceneLabels::from_scene_sizes(block_sizes)?;
    let l = labels.as_slice();
    let n = l.len();
    DistanceMatrix::from_matrix(DMatrix::from_fn(n, n, |i, j| if l[i] == l[j] { 0.0 } else { 1.0 }))
}

//! Browser demo: synthetic videos segmented, scored and trained in the page.
//!
//! Every export takes plain numbers and returns a JSON string. Failures come
//! back as `{"error": "..."}` so the page can show them.

use osg::embed::{train, EmbeddingModel, LossKind, TrainConfig};
use osg::k_estim::{log_elbow, singular_spectrum};
use osg::synth::{generate, SynthSpec};
use osg::{division_scores, f_score, prob_table, solve, DistanceMatrix, FeatureSequence, SceneLabels};
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

/// Largest video the page will build; keeps the canvas and DP instant.
pub const MAX_SCENES: usize = 12;
pub const MAX_EPOCHS: usize = 60;

/// Training videos carry uninformative extra coordinates for the embedding to learn to ignore.
fn video(scenes: usize, sigma: f64, seed: u64, nuisance: bool) -> osg::Result<(FeatureSequence, SceneLabels)> {
    if scenes == 0 || scenes > MAX_SCENES {
        return Err(osg::OsgError::InvalidInput(format!("scenes must be in 1..={MAX_SCENES}")));
    }
    generate(&SynthSpec {
        n_scenes: scenes,
        min_shots: 3,
        max_shots: 8,
        // wider than the longest video, so the distance matrix is not rank-limited
        dim: if nuisance { 8 } else { 128 },
        sigma,
        seed,
        nuisance_dim: if nuisance { 16 } else { 0 },
        nuisance_sigma: if nuisance { 0.5 } else { 0.0 },
        ..SynthSpec::default()
    })
}

fn to_json<T: Serialize>(result: osg::Result<T>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[derive(Debug, Serialize)]
pub struct Segmentation {
    pub n: usize,
    /// Row-major `n x n` cosine distances.
    pub distances: Vec<f64>,
    pub truth: Vec<usize>,
    pub predicted: Vec<usize>,
    pub k: usize,
    pub estimated_k: usize,
    pub log_singular_values: Vec<f64>,
    pub f_score: f64,
}

/// Segments a synthetic video; `k == 0` uses the estimated group count.
pub fn segment(scenes: usize, sigma: f64, seed: u64, k: usize) -> osg::Result<Segmentation> {
    let (seq, labels) = video(scenes, sigma, seed, false)?;
    let d = DistanceMatrix::build(&seq)?;
    let spectrum = singular_spectrum(&d)?;
    let estimated_k = log_elbow(&spectrum);
    let k = if k == 0 { estimated_k } else { k };
    let (div, _) = solve(&d, k)?;
    let n = d.len();
    Ok(Segmentation {
        n,
        distances: (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| d.get(i, j)).collect(),
        truth: osg::labels_to_division(&labels).boundaries().to_vec(),
        predicted: div.boundaries().to_vec(),
        k,
        estimated_k,
        log_singular_values: spectrum.log_values,
        f_score: f_score(&div, &labels)?.f_score,
    })
}

#[derive(Debug, Serialize)]
pub struct Scores {
    /// `t[i-1]` is the division score of shot `i`.
    pub t: Vec<f64>,
    pub truth: Vec<usize>,
}

/// Division scores of a synthetic video with K from its labels.
pub fn scores(scenes: usize, sigma: f64, seed: u64) -> osg::Result<Scores> {
    let (seq, labels) = video(scenes, sigma, seed, false)?;
    let d = DistanceMatrix::build(&seq)?;
    Ok(Scores { t: division_scores(&prob_table(&d, labels.num_scenes().max(2))?).t, truth: labels.division_points() })
}

#[derive(Debug, Serialize)]
pub struct Training {
    pub epoch_losses: Vec<f64>,
    /// Division scores of the first training video, before training and after each epoch (prob loss only).
    pub traces: Vec<Vec<f64>>,
    pub trace_truth: Vec<usize>,
    pub f_before: f64,
    pub f_after: f64,
}

fn mean_f(model: &EmbeddingModel, videos: &[(FeatureSequence, SceneLabels)]) -> osg::Result<f64> {
    let mut total = 0.0;
    for (seq, labels) in videos {
        let d = DistanceMatrix::build(&model.forward(seq)?)?;
        total += f_score(&solve(&d, labels.num_scenes())?.0, labels)?.f_score;
    }
    Ok(total / videos.len() as f64)
}

/// Trains on six synthetic videos and scores three held-out ones.
pub fn train_run(loss: &str, scenes: usize, sigma: f64, seed: u64, epochs: usize) -> osg::Result<Training> {
    let loss: LossKind = loss.parse()?;
    if epochs > MAX_EPOCHS {
        return Err(osg::OsgError::InvalidInput(format!("at most {MAX_EPOCHS} epochs")));
    }
    let videos = (0..9).map(|i| video(scenes, sigma, seed * 100 + i, true)).collect::<osg::Result<Vec<_>>>()?;
    let (train_set, test_set) = videos.split_at(6);
    let cfg = TrainConfig { loss, max_epochs: epochs, seed, widths: vec![32, 16], ..TrainConfig::default() };
    let untrained = EmbeddingModel::new(train_set[0].0.dim(), &cfg.widths, seed)?;
    let out = train(train_set, &cfg)?;
    Ok(Training {
        epoch_losses: out.epoch_losses,
        trace_truth: out.trace_video.map(|v| train_set[v].1.division_points()).unwrap_or_default(),
        traces: out.traces,
        f_before: mean_f(&untrained, test_set)?,
        f_after: mean_f(&out.model, test_set)?,
    })
}

#[wasm_bindgen]
pub fn segment_json(scenes: usize, sigma: f64, seed: u32, k: usize) -> String {
    to_json(segment(scenes, sigma, seed.into(), k))
}

#[wasm_bindgen]
pub fn scores_json(scenes: usize, sigma: f64, seed: u32) -> String {
    to_json(scores(scenes, sigma, seed.into()))
}

#[wasm_bindgen]
pub fn train_json(loss: &str, scenes: usize, sigma: f64, seed: u32, epochs: usize) -> String {
    to_json(train_run(loss, scenes, sigma, seed.into(), epochs))
}

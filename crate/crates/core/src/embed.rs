//! Trainable per-shot embedding: a stack of affine layers with ReLU on every
//! layer but the last, trained with ADAM through the cosine distance matrix
//! into one of the segmentation losses.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{OsgError, Result};
use crate::losses::{block_loss_grad, triplet_loss_grad, HingeMode, TargetMatrix, TripletConfig};
use crate::model::{FeatureSequence, SceneLabels};
use crate::prob::{ce_loss_backward, division_scores, prob_table};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    layers: Vec<Layer>,
}

/// Per-layer `(dweights, dbias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect()
    }
}

impl EmbeddingModel {
    /// Glorot-uniform weights, zero biases, ReLU on all layers but the last.
    pub fn new(input_dim: usize, widths: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || widths.is_empty() || widths.contains(&0) {
            return Err(OsgError::InvalidInput("layer widths and input dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for (idx, &out) in widths.iter().enumerate() {
            let bound = (6.0 / (fan_in + out) as f64).sqrt();
            let weights = DMatrix::from_fn(out, fan_in, |_, _| rng.random_range(-bound..=bound));
            layers.push(Layer { weights, bias: DVector::zeros(out), relu: idx + 1 < widths.len() });
            fan_in = out;
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(OsgError::InvalidInput("model has no layers".into()));
        };
        if last.relu {
            return Err(OsgError::InvalidInput("the output layer must not apply ReLU".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(OsgError::DimensionMismatch { expected: l.weights.nrows(), got: l.bias.len() });
            }
            if i + 1 < layers.len() {
                if !l.relu {
                    return Err(OsgError::InvalidInput(format!("hidden layer {i} must apply ReLU")));
                }
                if layers[i + 1].weights.ncols() != l.weights.nrows() {
                    return Err(OsgError::DimensionMismatch { expected: l.weights.nrows(), got: layers[i + 1].weights.ncols() });
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights (column-major) then bias, layer by layer.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied()).collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(OsgError::DimensionMismatch { expected: self.num_params(), got: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn stack(&self, seq: &FeatureSequence) -> Result<DMatrix<f64>> {
        if seq.dim() != self.input_dim() {
            return Err(OsgError::DimensionMismatch { expected: self.input_dim(), got: seq.dim() });
        }
        Ok(DMatrix::from_fn(seq.dim(), seq.len(), |r, c| seq.vectors()[c][r]))
    }

    /// Layer inputs (one column per shot), followed by the final output.
    fn activations(&self, seq: &FeatureSequence) -> Result<Vec<DMatrix<f64>>> {
        let mut acts = vec![self.stack(seq)?];
        for l in &self.layers {
            let mut z = &l.weights * acts.last().expect("nonempty");
            for mut col in z.column_iter_mut() {
                col += &l.bias;
            }
            if l.relu {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn forward(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        let out = self.activations(seq)?.pop().expect("nonempty");
        FeatureSequence::new_unchecked_zero(out.column_iter().map(|c| c.iter().copied().collect()).collect())
    }

    /// Parameter gradients given `dloss/dD` for the distance matrix of this
    /// model's output on `seq`. `dloss_dd` must be symmetric.
    pub fn backward(&self, seq: &FeatureSequence, dloss_dd: &DMatrix<f64>) -> Result<Gradients> {
        let acts = self.activations(seq)?;
        let n = seq.len();
        if dloss_dd.nrows() != n || dloss_dd.ncols() != n {
            return Err(OsgError::DimensionMismatch { expected: n, got: dloss_dd.nrows() });
        }
        let y = acts.last().expect("nonempty");
        let mut grad = cosine_backward(y, dloss_dd)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (idx, l) in self.layers.iter().enumerate().rev() {
            if l.relu {
                // the ReLU output is positive exactly where its input was
                grad.zip_apply(&acts[idx + 1], |g, o| {
                    if o <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            let dw = &grad * acts[idx].transpose();
            let db = grad.column_sum();
            grad = l.weights.transpose() * &grad;
            layers.push((dw, db));
        }
        layers.reverse();
        Ok(Gradients { layers })
    }
}

/// `dloss/dY` for `D[i][j] = (1 - cos(y_i, y_j)) / 2` given symmetric `dloss/dD`.
fn cosine_backward(y: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = y.ncols();
    let norms: Vec<f64> = y.column_iter().map(|c| c.norm()).collect();
    if let Some(shot) = norms.iter().position(|&v| v == 0.0) {
        return Err(OsgError::ZeroVector { shot });
    }
    let mut u = y.clone();
    for (mut col, &len) in u.column_iter_mut().zip(&norms) {
        col /= len;
    }
    let cos = u.transpose() * &u;
    // d/dy_i = -(1/|y_i|) sum_j g_ij (u_j - c_ij u_i), counting both (i,j) and (j,i)
    let mut out = &u * g;
    for i in 0..n {
        let w: f64 = (0..n).filter(|&j| j != i).map(|j| g[(i, j)] * cos[(i, j)]).sum();
        let mut col = out.column_mut(i);
        col.axpy(-w, &u.column(i), 1.0);
        col *= -1.0 / norms[i];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Triplet,
    Block,
    BlockAdjacent,
    Prob,
}

impl LossKind {
    fn needs_divisions(self) -> bool {
        matches!(self, Self::Triplet | Self::Prob)
    }
}

impl std::str::FromStr for LossKind {
    type Err = OsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triplet" => Ok(Self::Triplet),
            "block" => Ok(Self::Block),
            "block-adjacent" => Ok(Self::BlockAdjacent),
            "prob" => Ok(Self::Prob),
            other => Err(OsgError::InvalidInput(format!("unknown loss kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub stop_ratio: f64,
    pub seed: u64,
    pub widths: Vec<usize>,
    pub margin: f64,
    #[serde(default)]
    pub hinge: HingeMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Prob,
            learning_rate: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 200,
            stop_ratio: 0.25,
            seed: 0,
            widths: vec![64, 32],
            margin: 0.5,
            hinge: HingeMode::Max,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(OsgError::InvalidInput("learning rate must be positive".into()));
        }
        if !(self.stop_ratio > 0.0 && self.stop_ratio < 1.0) {
            return Err(OsgError::InvalidInput("stop ratio must lie in (0, 1)".into()));
        }
        self.triplet().validate()
    }

    fn triplet(&self) -> TripletConfig {
        TripletConfig { margin: self.margin, hinge: self.hinge }
    }
}

/// Loss of `kind` on `D` and its gradient with respect to `D`.
pub fn loss_and_grad(kind: LossKind, d: &DistanceMatrix, labels: &SceneLabels, cfg: &TrainConfig) -> Result<(f64, DMatrix<f64>)> {
    match kind {
        LossKind::Triplet => triplet_loss_grad(d.values(), labels, &cfg.triplet()),
        LossKind::Block => block_loss_grad(d.values(), &TargetMatrix::new(labels), false),
        LossKind::BlockAdjacent => block_loss_grad(d.values(), &TargetMatrix::new(labels), true),
        LossKind::Prob => ce_loss_backward(d, labels.num_scenes(), labels),
    }
}

/// Loss and parameter gradients for one video.
pub fn video_loss_and_grad(
    model: &EmbeddingModel,
    seq: &FeatureSequence,
    labels: &SceneLabels,
    cfg: &TrainConfig,
) -> Result<(f64, Gradients)> {
    let d = DistanceMatrix::build(&model.forward(seq)?)?;
    let (loss, g) = loss_and_grad(cfg.loss, &d, labels, cfg)?;
    Ok((loss, model.backward(seq, &g)?))
}

/// Division scores of the embedded video, with `K` taken from the labels.
pub fn embedded_scores(model: &EmbeddingModel, seq: &FeatureSequence, labels: &SceneLabels) -> Result<Vec<f64>> {
    let d = DistanceMatrix::build(&model.forward(seq)?)?;
    Ok(division_scores(&prob_table(&d, labels.num_scenes())?).t)
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    /// Mean training loss of each completed epoch, starting at epoch 1.
    pub epoch_losses: Vec<f64>,
    /// For the prob loss: `T` of the traced video before training (row 0) and
    /// after every epoch.
    pub traces: Vec<Vec<f64>>,
    /// Corpus index of the traced video.
    pub trace_video: Option<usize>,
    pub stopped_early: bool,
}

/// Trains a fresh model on `corpus`, one ADAM step per video per epoch.
pub fn train(corpus: &[(FeatureSequence, SceneLabels)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Some((first, _)) = corpus.first() else {
        return Err(OsgError::InvalidInput("training corpus is empty".into()));
    };
    let input_dim = first.dim();
    for (i, (seq, labels)) in corpus.iter().enumerate() {
        if seq.dim() != input_dim {
            return Err(OsgError::DimensionMismatch { expected: input_dim, got: seq.dim() });
        }
        if seq.len() != labels.len() {
            return Err(OsgError::InvalidInput(format!("video {i}: {} shots but {} labels", seq.len(), labels.len())));
        }
    }
    let mut model = EmbeddingModel::new(input_dim, &cfg.widths, cfg.seed)?;
    let mut outcome = TrainOutcome { model: model.clone(), epoch_losses: vec![], traces: vec![], trace_video: None, stopped_early: false };
    if cfg.max_epochs == 0 {
        return Ok(outcome);
    }

    let usable: Vec<usize> = (0..corpus.len())
        .filter(|&i| {
            let ok = !cfg.loss.needs_divisions() || corpus[i].1.num_scenes() >= 2;
            if !ok {
                warn!("skipping video {i}: a single scene has no division to learn from");
            }
            ok
        })
        .collect();
    if usable.is_empty() {
        return Err(OsgError::DegenerateCorpus);
    }

    let trace_video = (cfg.loss == LossKind::Prob).then_some(usable[0]);
    let trace = |m: &EmbeddingModel| -> Result<Option<Vec<f64>>> {
        trace_video.map(|v| embedded_scores(m, &corpus[v].0, &corpus[v].1)).transpose()
    };
    outcome.trace_video = trace_video;
    outcome.traces.extend(trace(&model)?);

    let mut adam = Adam::new(model.num_params());
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut order = usable.clone();
    let mut params = model.flat_params();
    let mut first_loss = None;
    for _epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for &v in &order {
            let (seq, labels) = &corpus[v];
            let (loss, grads) = video_loss_and_grad(&model, seq, labels, cfg)?;
            total += loss;
            adam.update(&mut params, &grads.flatten(), cfg);
            model.set_flat_params(&params)?;
        }
        let mean = total / order.len() as f64;
        outcome.epoch_losses.push(mean);
        outcome.traces.extend(trace(&model)?);
        let initial = *first_loss.get_or_insert(mean);
        if mean <= cfg.stop_ratio * initial {
            outcome.stopped_early = true;
            break;
        }
    }
    outcome.model = model;
    Ok(outcome)
}

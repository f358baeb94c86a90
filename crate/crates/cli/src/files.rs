//! On-disk formats: feature and label CSVs, division and model JSON, loss
//! logs and score traces.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nalgebra::{DMatrix, DVector};
use osg::embed::{EmbeddingModel, Layer, TrainConfig};
use osg::{Division, FeatureSequence, SceneLabels};
use serde::{Deserialize, Serialize};

/// Writes floats in JSON with 17 significant digits so every value
/// round-trips and output is byte-stable.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?).with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed JSON", path.display()))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn parse_shot_id(field: &str, expected: usize, path: &Path, row: usize) -> Result<()> {
    let id: usize = field.parse().with_context(|| format!("{}: row {row}: bad shot_id {field:?}", path.display()))?;
    ensure!(id == expected, "{}: row {row}: shot_id {id}, expected {expected}", path.display());
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().with_context(|| format!("{}: missing header", path.display()))?.clone();
    ensure!(headers.get(0) == Some("shot_id"), "{}: first column must be shot_id", path.display());
    ensure!(headers.len() > 1, "{}: no feature columns", path.display());
    let mut vectors = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {row}", path.display()))?;
        parse_shot_id(&record[0], row, path, row)?;
        let v = record
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>().with_context(|| format!("{}: row {row}: bad value {f:?}", path.display())))
            .collect::<Result<Vec<_>>>()?;
        vectors.push(v);
    }
    FeatureSequence::new(vectors).with_context(|| format!("{}: invalid features", path.display()))
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["shot_id".to_string()];
    header.extend((0..seq.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (i, v) in seq.vectors().iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<SceneLabels> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().with_context(|| format!("{}: missing header", path.display()))?.clone();
    ensure!(
        headers.iter().collect::<Vec<_>>() == ["shot_id", "scene_id"],
        "{}: header must be shot_id,scene_id",
        path.display()
    );
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {row}", path.display()))?;
        parse_shot_id(&record[0], row, path, row)?;
        labels.push(record[1].parse().with_context(|| format!("{}: row {row}: bad scene_id {:?}", path.display(), &record[1]))?);
    }
    SceneLabels::new(labels).with_context(|| format!("{}: invalid labels", path.display()))
}

pub fn write_labels(path: &Path, labels: &SceneLabels) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["shot_id", "scene_id"])?;
    for (i, l) in labels.as_slice().iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisionFile {
    pub num_shots: usize,
    pub k: usize,
    /// 1-based index of the last shot of each group.
    pub boundaries: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_score: Option<f64>,
}

impl DivisionFile {
    pub fn new(div: &Division) -> Self {
        Self { num_shots: div.n_shots(), k: div.num_groups(), boundaries: div.boundaries().to_vec(), cost: None, f_score: None }
    }

    pub fn division(&self) -> Result<Division> {
        ensure!(self.k == self.boundaries.len(), "k is {} but {} boundaries are listed", self.k, self.boundaries.len());
        Ok(Division::new(self.boundaries.clone(), self.num_shots)?)
    }
}

pub fn read_division(path: &Path) -> Result<Division> {
    read_json::<DivisionFile>(path)?.division().with_context(|| format!("{}: invalid division", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows x cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub input_dim: usize,
    pub layers: Vec<LayerFile>,
    pub seed: u64,
    pub config: TrainConfig,
}

impl ModelFile {
    pub fn new(model: &EmbeddingModel, config: &TrainConfig) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| LayerFile {
                rows: l.weights.nrows(),
                cols: l.weights.ncols(),
                weights: l.weights.transpose().iter().copied().collect(),
                bias: l.bias.iter().copied().collect(),
                relu: l.relu,
            })
            .collect();
        Self { input_dim: model.input_dim(), layers, seed: config.seed, config: config.clone() }
    }

    pub fn model(&self) -> Result<EmbeddingModel> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            ensure!(l.weights.len() == l.rows * l.cols, "layer {i}: {} weights for a {}x{} matrix", l.weights.len(), l.rows, l.cols);
            ensure!(l.weights.iter().chain(&l.bias).all(|v| v.is_finite()), "layer {i}: non-finite parameter");
            layers.push(Layer {
                weights: DMatrix::from_row_slice(l.rows, l.cols, &l.weights),
                bias: DVector::from_column_slice(&l.bias),
                relu: l.relu,
            });
        }
        let model = EmbeddingModel::from_layers(layers)?;
        ensure!(model.input_dim() == self.input_dim, "input_dim is {} but the first layer takes {}", self.input_dim, model.input_dim());
        Ok(model)
    }
}

pub fn read_model(path: &Path) -> Result<EmbeddingModel> {
    read_json::<ModelFile>(path)?.model().with_context(|| format!("{}: invalid model", path.display()))
}

pub fn write_loss_log(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "mean_loss"])?;
    for (e, l) in losses.iter().enumerate() {
        w.write_record([(e + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Row `e` holds the division scores after epoch `e` (row 0 is the
/// untrained model).
pub fn write_trace(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let n = rows.first().map_or(0, Vec::len);
    let mut w = csv_writer(path)?;
    let mut header = vec!["epoch".to_string()];
    header.extend((1..=n).map(|i| format!("t{i}")));
    w.write_record(&header)?;
    for (e, row) in rows.iter().enumerate() {
        let mut rec = vec![e.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().with_context(|| format!("{}: missing header", path.display()))?.clone();
    ensure!(headers.get(0) == Some("epoch"), "{}: first column must be epoch", path.display());
    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {row}", path.display()))?;
        let epoch: usize = record[0].parse().with_context(|| format!("{}: row {row}: bad epoch", path.display()))?;
        ensure!(epoch == row, "{}: row {row}: epoch {epoch} out of order", path.display());
        rows.push(
            record
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>().with_context(|| format!("{}: row {row}: bad value {f:?}", path.display())))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(rows)
}

/// Paired `<name>.features.csv` / `<name>.labels.csv` files, sorted by name.
pub fn corpus_pairs(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot read corpus directory {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".features.csv") {
            features.push(stem.to_string());
        } else if let Some(stem) = name.strip_suffix(".labels.csv") {
            labels.push(stem.to_string());
        }
    }
    features.sort();
    labels.sort();
    let unpaired: Vec<String> = features
        .iter()
        .filter(|s| !labels.contains(s))
        .map(|s| format!("{s}.labels.csv"))
        .chain(labels.iter().filter(|s| !features.contains(s)).map(|s| format!("{s}.features.csv")))
        .collect();
    if !unpaired.is_empty() {
        bail!("{}: missing pair files: {}", dir.display(), unpaired.join(", "));
    }
    if features.is_empty() {
        bail!("{}: no <name>.features.csv files", dir.display());
    }
    Ok(features
        .into_iter()
        .map(|s| {
            let f = dir.join(format!("{s}.features.csv"));
            let l = dir.join(format!("{s}.labels.csv"));
            (s, f, l)
        })
        .collect())
}

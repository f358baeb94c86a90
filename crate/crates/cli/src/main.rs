//! `osg`: segment shot sequences into scenes, train embeddings, evaluate.

mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use osg::embed::{train, LossKind, TrainConfig};
use osg::k_estim::{elbow_distances, log_elbow, singular_spectrum};
use osg::losses::HingeMode;
use osg::synth::{generate, SynthSpec};
use osg::{division_cost, f_score, solve, solve_fused, DistanceMatrix, FeatureSequence};
use serde::Serialize;

use crate::files::{
    corpus_pairs, read_division, read_features, read_labels, read_model, read_trace, to_json, write_features, write_json,
    write_labels, write_loss_log, write_trace, DivisionFile, ModelFile,
};

#[derive(Parser)]
#[command(name = "osg", version, about = "Optimal sequential grouping of shot sequences into scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Divide a feature sequence into K contiguous groups.
    Segment(SegmentArgs),
    /// Train an embedding on a directory of labelled videos.
    Train(TrainArgs),
    /// Score a division against ground-truth labels.
    Eval(EvalArgs),
    /// Estimate the number of groups from the singular spectrum.
    Elbow(ElbowArgs),
    /// Generate a synthetic video with known scenes.
    Synth(SynthArgs),
    /// Summarize a division-score trace written by `train --trace`.
    Trace(TraceArgs),
}

#[derive(Args)]
struct SegmentArgs {
    /// Feature CSV of the first modality.
    #[arg(long)]
    features: PathBuf,
    /// Feature CSV of a second modality, fused with the first.
    #[arg(long)]
    features2: Option<PathBuf>,
    /// Number of groups.
    #[arg(long, required_unless_present = "estimate_k", conflicts_with = "estimate_k")]
    k: Option<usize>,
    /// Estimate K from the first modality's distance matrix.
    #[arg(long)]
    estimate_k: bool,
    /// Embedding applied to the first modality.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Embedding applied to the second modality.
    #[arg(long, requires = "features2")]
    model2: Option<PathBuf>,
    /// Ground-truth labels; adds the F-score to the output.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Division JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Triplet,
    Block,
    BlockAdjacent,
    Prob,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Triplet => LossKind::Triplet,
            LossArg::Block => LossKind::Block,
            LossArg::BlockAdjacent => LossKind::BlockAdjacent,
            LossArg::Prob => LossKind::Prob,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HingeArg {
    Max,
    LiteralMin,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of `<name>.features.csv` / `<name>.labels.csv` pairs.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    loss: LossArg,
    #[arg(long, default_value_t = 5e-3)]
    lr: f64,
    /// Triplet margin.
    #[arg(long, default_value_t = 0.5)]
    margin: f64,
    #[arg(long, value_enum, default_value = "max")]
    hinge: HingeArg,
    /// Stop once the epoch mean loss falls to this fraction of the first epoch's.
    #[arg(long, default_value_t = 0.25)]
    stop_ratio: f64,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layer widths, comma separated; the last is the embedding size.
    #[arg(long, value_delimiter = ',', default_value = "64,32")]
    widths: Vec<usize>,
    /// Model JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss log CSV (default: next to the model, `.loss.csv`).
    #[arg(long)]
    loss_log: Option<PathBuf>,
    /// Per-epoch division scores of the first video (prob loss only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Division JSON.
    #[arg(long)]
    pred: PathBuf,
    /// Label CSV.
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
struct ElbowArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scenes: usize,
    /// Shots per scene as MIN:MAX.
    #[arg(long, value_parser = parse_range, default_value = "3:8")]
    shots: (usize, usize),
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Per-coordinate noise added to scene centers.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Minimum cosine distance between scene centers.
    #[arg(long, default_value_t = 0.3)]
    min_center_distance: f64,
    /// Extra uninformative coordinates appended to every shot.
    #[arg(long, default_value_t = 0)]
    nuisance_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    nuisance_sigma: f64,
    /// Writes PREFIX.features.csv and PREFIX.labels.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    /// Trace CSV from `train --trace`.
    #[arg(long)]
    trace: PathBuf,
    /// Labels of the traced video.
    #[arg(long)]
    gt: PathBuf,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let lo = lo.trim().parse().map_err(|e| format!("bad MIN: {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("bad MAX: {e}"))?;
    Ok((lo, hi))
}

/// Flag combinations clap cannot express; reported like parse errors.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn embedded_distances(features: &Path, model: Option<&Path>) -> Result<(FeatureSequence, DistanceMatrix)> {
    let mut seq = read_features(features)?;
    if let Some(m) = model {
        let model = read_model(m)?;
        ensure!(
            model.input_dim() == seq.dim(),
            "{}: model expects {} features, {} has {}",
            m.display(),
            model.input_dim(),
            features.display(),
            seq.dim()
        );
        seq = model.forward(&seq).with_context(|| format!("embedding {}", features.display()))?;
    }
    let d = DistanceMatrix::build(&seq).with_context(|| format!("distances of {}", features.display()))?;
    Ok((seq, d))
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let (_, dx) = embedded_distances(&a.features, a.model.as_deref())?;
    let k = match a.k {
        Some(k) => k,
        None => osg::estimate_k(&dx)?,
    };
    let mut out = match &a.features2 {
        None => {
            let (div, _) = solve(&dx, k)?;
            let mut file = DivisionFile::new(&div);
            file.cost = Some(division_cost(&dx, &div)?);
            (file, div)
        }
        Some(f2) => {
            let (_, dy) = embedded_distances(f2, a.model2.as_deref())?;
            ensure!(dy.len() == dx.len(), "{} has {} shots but {} has {}", f2.display(), dy.len(), a.features.display(), dx.len());
            let div = solve_fused(&dx, &dy, k)?;
            (DivisionFile::new(&div), div)
        }
    };
    if let Some(gt) = &a.gt {
        out.0.f_score = Some(f_score(&out.1, &read_labels(gt)?)?.f_score);
    }
    write_json(&a.out, &out.0)
}

#[derive(Serialize)]
struct TrainSummary {
    videos: usize,
    epochs: usize,
    first_loss: Option<f64>,
    final_loss: Option<f64>,
    stopped_early: bool,
    traced_video: Option<String>,
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let loss = LossKind::from(a.loss);
    if a.trace.is_some() && loss != LossKind::Prob {
        return Err(UsageError("--trace requires --loss prob".into()).into());
    }
    let cfg = TrainConfig {
        loss,
        learning_rate: a.lr,
        margin: a.margin,
        hinge: match a.hinge {
            HingeArg::Max => HingeMode::Max,
            HingeArg::LiteralMin => HingeMode::LiteralMin,
        },
        stop_ratio: a.stop_ratio,
        max_epochs: a.max_epochs,
        seed: a.seed,
        widths: a.widths.clone(),
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;

    let pairs = corpus_pairs(&a.corpus)?;
    let mut corpus = Vec::with_capacity(pairs.len());
    for (name, f, l) in &pairs {
        let seq = read_features(f)?;
        let labels = read_labels(l)?;
        ensure!(seq.len() == labels.len(), "{name}: {} shots but {} labels", seq.len(), labels.len());
        corpus.push((seq, labels));
    }
    let outcome = train(&corpus, &cfg)?;

    write_json(&a.out, &ModelFile::new(&outcome.model, &cfg))?;
    let log_path = a.loss_log.clone().unwrap_or_else(|| a.out.with_extension("loss.csv"));
    write_loss_log(&log_path, &outcome.epoch_losses)?;
    if let Some(t) = &a.trace {
        write_trace(t, &outcome.traces)?;
    }
    let summary = TrainSummary {
        videos: corpus.len(),
        epochs: outcome.epoch_losses.len(),
        first_loss: outcome.epoch_losses.first().copied(),
        final_loss: outcome.epoch_losses.last().copied(),
        stopped_early: outcome.stopped_early,
        traced_video: outcome.trace_video.map(|v| pairs[v].0.clone()),
    };
    print!("{}", to_json(&summary)?);
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let report = f_score(&read_division(&a.pred)?, &read_labels(&a.gt)?)
        .with_context(|| format!("comparing {} with {}", a.pred.display(), a.gt.display()))?;
    print!("{}", to_json(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct ElbowReport {
    num_shots: usize,
    k: usize,
    log_singular_values: Vec<f64>,
    elbow_distances: Vec<f64>,
}

fn elbow(a: &ElbowArgs) -> Result<()> {
    let (_, d) = embedded_distances(&a.features, a.model.as_deref())?;
    let spectrum = singular_spectrum(&d)?;
    let report = ElbowReport {
        num_shots: d.len(),
        k: log_elbow(&spectrum),
        elbow_distances: elbow_distances(&spectrum),
        log_singular_values: spectrum.log_values,
    };
    print!("{}", to_json(&report)?);
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_scenes: a.scenes,
        min_shots: a.shots.0,
        max_shots: a.shots.1,
        dim: a.dim,
        min_center_distance: a.min_center_distance,
        sigma: a.sigma,
        seed: a.seed,
        nuisance_dim: a.nuisance_dim,
        nuisance_sigma: a.nuisance_sigma,
    };
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let (seq, labels) = generate(&spec)?;
    let prefix = a.out.to_string_lossy();
    write_features(Path::new(&format!("{prefix}.features.csv")), &seq)?;
    write_labels(Path::new(&format!("{prefix}.labels.csv")), &labels)
}

#[derive(Serialize)]
struct EpochScores {
    epoch: usize,
    mean_at_boundaries: f64,
    /// 1-based shot with the highest score.
    peak: usize,
}

#[derive(Serialize)]
struct TraceReport {
    boundaries: Vec<usize>,
    epochs: Vec<EpochScores>,
}

fn trace(a: &TraceArgs) -> Result<()> {
    let rows = read_trace(&a.trace)?;
    let labels = read_labels(&a.gt)?;
    let boundaries = labels.division_points();
    ensure!(!boundaries.is_empty(), "{}: a single scene has no boundaries", a.gt.display());
    let mut epochs = Vec::with_capacity(rows.len());
    for (epoch, row) in rows.iter().enumerate() {
        ensure!(row.len() == labels.len(), "{}: epoch {epoch} has {} scores for {} shots", a.trace.display(), row.len(), labels.len());
        let mean_at_boundaries = boundaries.iter().map(|&i| row[i - 1]).sum::<f64>() / boundaries.len() as f64;
        let peak = row.iter().enumerate().fold(0, |best, (i, v)| if *v > row[best] { i } else { best }) + 1;
        epochs.push(EpochScores { epoch, mean_at_boundaries, peak });
    }
    print!("{}", to_json(&TraceReport { boundaries, epochs })?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Segment(a) => segment(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Elbow(a) => elbow(a),
        Command::Synth(a) => synth(a),
        Command::Trace(a) => trace(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version are not errors
            return if e.exit_code() == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}


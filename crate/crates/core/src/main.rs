//! Command-line entry point. Subcommands: synth, sample, train, eval,
//! mine-stats, report. Exit codes: 0 success, 1 usage, 2 data error,
//! 3 numeric failure.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use dfdet::checkpoint::Checkpoint;
use dfdet::error::{Error, Result};
use dfdet::eval::{
    grouped_report, read_predictions_csv, video_scores, write_predictions_csv, FramePrediction,
    GroupKey,
};
use dfdet::ingest::{load_manifest, save_manifest, Manifest};
use dfdet::losses::softmax_row;
use dfdet::mining::{count_categories, pairwise_distances};
use dfdet::model::{LabelMode, TripletVariant};
use dfdet::network::MlpModel;
use dfdet::sampler::{balanced_sample, generate_synthetic_corpus, SamplingPlan, SynthSpec};
use dfdet::trainer::{dataset_from_manifest, label_space_for, train, TrainConfig};

#[derive(Parser)]
#[command(name = "dfdet", version, about = "Metric-learning deepfake detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature-space corpus (train/val/test manifests).
    Synth(SynthArgs),
    /// Build a balanced subset of a manifest.
    Sample(SampleArgs),
    /// Train the toy model with the combined objective.
    Train(TrainArgs),
    /// Evaluate a checkpoint: predictions, video-level AUC/bACC report.
    Eval(EvalArgs),
    /// Per-batch triplet-category statistics for a manifest.
    MineStats(MineStatsArgs),
    /// Regenerate a grouped report from a predictions CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossFlag {
    Bce,
    #[value(name = "bce+ba")]
    BceBa,
    #[value(name = "bce+hphn")]
    BceHpHn,
    #[value(name = "bce+ephn")]
    BceEpHn,
}

impl LossFlag {
    fn variant(self) -> TripletVariant {
        match self {
            LossFlag::Bce => TripletVariant::None,
            LossFlag::BceBa => TripletVariant::BatchAll,
            LossFlag::BceHpHn => TripletVariant::HpHn,
            LossFlag::BceEpHn => TripletVariant::EpHn,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LabelModeFlag {
    Binary,
    AttCateg,
    AttDataset,
}

impl LabelModeFlag {
    fn mode(self) -> LabelMode {
        match self {
            LabelModeFlag::Binary => LabelMode::Binary,
            LabelModeFlag::AttCateg => LabelMode::AttCateg,
            LabelModeFlag::AttDataset => LabelMode::AttDataset,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GroupByFlag {
    Dataset,
    Manipulation,
}

impl GroupByFlag {
    fn key(self) -> GroupKey {
        match self {
            GroupByFlag::Dataset => GroupKey::Dataset,
            GroupByFlag::Manipulation => GroupKey::Manipulation,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for train.jsonl / val.jsonl / test.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with a full SynthSpec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated dataset tags.
    #[arg(long, value_delimiter = ',')]
    datasets: Option<Vec<String>>,
    #[arg(long)]
    videos_per_cell: Option<usize>,
    #[arg(long)]
    val_videos_per_cell: Option<usize>,
    #[arg(long)]
    test_videos_per_cell: Option<usize>,
    #[arg(long)]
    frames_min: Option<usize>,
    #[arg(long)]
    frames_max: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    mean_scale: Option<f64>,
    #[arg(long)]
    cluster_std: Option<f64>,
    #[arg(long)]
    coherence_std: Option<f64>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Total samples to draw (split evenly between real and fake).
    #[arg(long)]
    target: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// Output directory for checkpoint.ckpt / metrics.csv.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with a full TrainConfig; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    loss: Option<LossFlag>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    triplet_weight: Option<f64>,
    #[arg(long, value_enum)]
    label_mode: Option<LabelModeFlag>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    layer_decay: Option<f64>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    feature_jitter_std: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for predictions.csv / report.csv / report.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "dataset")]
    group_by: GroupByFlag,
    /// Cross-check against the checkpoint's label mode.
    #[arg(long, value_enum)]
    label_mode: Option<LabelModeFlag>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct MineStatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint to embed with; random init when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "dataset")]
    group_by: GroupByFlag,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::MineStats(args) => cmd_mine_stats(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn write_config_snapshot<T: Serialize>(dir: &Path, name: &str, config: &T) -> Result<()> {
    let path = dir.join(name);
    let json = serde_json::to_string_pretty(config)
        .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn load_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&content)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &args.config {
        Some(path) => load_json_config(path)?,
        None => SynthSpec::default(),
    };
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.datasets {
        spec.datasets = v;
    }
    if let Some(v) = args.videos_per_cell {
        spec.train_videos_per_cell = v;
    }
    if let Some(v) = args.val_videos_per_cell {
        spec.val_videos_per_cell = v;
    }
    if let Some(v) = args.test_videos_per_cell {
        spec.test_videos_per_cell = v;
    }
    if let Some(v) = args.frames_min {
        spec.frames_per_video_min = v;
    }
    if let Some(v) = args.frames_max {
        spec.frames_per_video_max = v;
    }
    if let Some(v) = args.dim {
        spec.feature_dim = v;
    }
    if let Some(v) = args.mean_scale {
        spec.mean_scale = v;
    }
    if let Some(v) = args.cluster_std {
        spec.cluster_std = v;
    }
    if let Some(v) = args.coherence_std {
        spec.video_coherence_std = v;
    }
    ensure_dir(&args.out)?;
    let corpus = generate_synthetic_corpus(&spec)?;
    save_manifest(&corpus.train, args.out.join("train.jsonl"))?;
    save_manifest(&corpus.val, args.out.join("val.jsonl"))?;
    save_manifest(&corpus.test, args.out.join("test.jsonl"))?;
    write_config_snapshot(&args.out, "synth_config.json", &spec)?;
    println!(
        "wrote {} train / {} val / {} test records to {}",
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let plan = SamplingPlan {
        seed: args.seed,
        target_total: args.target,
        class_ratio_tolerance: args.tolerance,
        per_video_min: 1,
    };
    let sampled = balanced_sample(&manifest, &plan)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    save_manifest(&sampled.records, &args.out)?;
    let snapshot_dir = args.out.parent().unwrap_or_else(|| Path::new("."));
    write_config_snapshot(snapshot_dir, "sample_config.json", &plan)?;
    println!(
        "sampled {} records ({} real, {} fake, imbalance {:.4})",
        sampled.records.len(),
        sampled.n_real,
        sampled.n_fake,
        sampled.ratio_imbalance
    );
    if !sampled.within_tolerance {
        eprintln!(
            "warning: achieved ratio imbalance {:.4} exceeds tolerance {:.4} (best achievable)",
            sampled.ratio_imbalance, plan.class_ratio_tolerance
        );
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config: TrainConfig = match &args.config {
        Some(path) => load_json_config(path)?,
        None => TrainConfig::default(),
    };
    if let Some(loss) = args.loss {
        config.loss.triplet_variant = loss.variant();
        if loss == LossFlag::Bce && args.triplet_weight.is_some() {
            eprintln!("warning: --triplet-weight is ignored with --loss bce");
        }
    }
    if let Some(v) = args.margin {
        config.loss.margin = v;
    }
    if let Some(v) = args.triplet_weight {
        config.loss.triplet_weight = v;
    }
    if let Some(v) = args.label_mode {
        config.label_mode = v.mode();
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.base_lr {
        config.base_lr = v;
    }
    if let Some(v) = args.weight_decay {
        config.weight_decay = v;
    }
    if let Some(v) = args.layer_decay {
        config.layer_decay = v;
    }
    if let Some(v) = args.warmup_epochs {
        config.warmup_epochs = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.hidden_dims {
        config.hidden_dims = v;
    }
    if let Some(v) = args.embedding_dim {
        config.embedding_dim = v;
    }
    if let Some(v) = args.feature_jitter_std {
        config.feature_jitter_std = v;
    }
    config.validate()?;

    let train_manifest = load_manifest(&args.train)?;
    let val_manifest = load_manifest(&args.val)?;
    ensure_dir(&args.out)?;
    write_config_snapshot(&args.out, "train_config.json", &config)?;

    let outcome = train(&train_manifest, &val_manifest, &config)?;
    let ckpt_path = args.out.join("checkpoint.ckpt");
    outcome.checkpoint.save(&ckpt_path)?;

    let metrics_path = args.out.join("metrics.csv");
    let mut csv = String::from("epoch,train_loss,val_loss,lr,active_triplets_mean\n");
    for m in &outcome.metrics {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            m.epoch, m.train_loss, m.val_loss, m.lr, m.active_triplets_mean
        ));
    }
    std::fs::write(&metrics_path, csv)
        .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
    println!(
        "best epoch {} (val loss {:.6}); checkpoint at {}",
        outcome.checkpoint.epoch,
        outcome.checkpoint.val_loss,
        ckpt_path.display()
    );
    Ok(())
}

// Forward a whole manifest through a model, in chunks, producing per-frame
// softmax probabilities.
fn predict_manifest(
    model: &MlpModel,
    manifest: &Manifest,
    space: &dfdet::model::LabelSpace,
) -> Result<Vec<FramePrediction>> {
    let data = dataset_from_manifest(manifest, space)?;
    if data.dim != model.input_dim() {
        return Err(Error::Shape(format!(
            "manifest feature dim {} != model input dim {}",
            data.dim,
            model.input_dim()
        )));
    }
    let chunk = 256;
    let mut predictions = Vec::with_capacity(data.n);
    for start in (0..data.n).step_by(chunk) {
        let end = (start + chunk).min(data.n);
        let b = end - start;
        let cache = model.forward(&data.features[start * data.dim..end * data.dim], b)?;
        let c = model.num_classes();
        for i in 0..b {
            let record = &manifest.records[start + i];
            let probs = softmax_row(&cache.logits[i * c..(i + 1) * c]);
            predictions.push(FramePrediction {
                sample_id: record.sample_id.clone(),
                video_id: record.video_id.clone(),
                dataset: record.dataset.clone(),
                manipulation: record.manipulation,
                true_label: record.label,
                class_probs: probs,
            });
        }
    }
    Ok(predictions)
}

fn write_report(
    dir: &Path,
    videos: &[dfdet::eval::VideoScore],
    key: GroupKey,
    threshold: f64,
) -> Result<()> {
    let report = grouped_report(videos, key, threshold);
    let csv_path = dir.join("report.csv");
    std::fs::write(&csv_path, report.to_csv())
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    let txt_path = dir.join("report.txt");
    std::fs::write(&txt_path, report.to_table())
        .map_err(|e| Error::io(txt_path.display().to_string(), e))?;
    print!("{}", report.to_table());
    Ok(())
}

#[derive(Serialize)]
struct EvalConfigSnapshot {
    checkpoint: String,
    manifest: String,
    group_by: String,
    threshold: f64,
    label_mode: String,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    if let Some(flag) = args.label_mode {
        if flag.mode() != ckpt.config.label_mode {
            return Err(Error::Config(format!(
                "label mode mismatch: checkpoint was trained with {}, flag requests {}",
                ckpt.config.label_mode,
                flag.mode()
            )));
        }
    }
    let manifest = load_manifest(&args.manifest)?;
    ensure_dir(&args.out)?;
    let predictions = predict_manifest(&ckpt.model, &manifest, &ckpt.label_space)?;
    write_predictions_csv(&predictions, &ckpt.label_space, args.out.join("predictions.csv"))?;
    let videos = video_scores(&predictions, &ckpt.label_space)?;
    write_config_snapshot(
        &args.out,
        "eval_config.json",
        &EvalConfigSnapshot {
            checkpoint: args.checkpoint.display().to_string(),
            manifest: args.manifest.display().to_string(),
            group_by: match args.group_by {
                GroupByFlag::Dataset => "dataset".to_string(),
                GroupByFlag::Manipulation => "manipulation".to_string(),
            },
            threshold: args.threshold,
            label_mode: ckpt.config.label_mode.to_string(),
        },
    )?;
    write_report(&args.out, &videos, args.group_by.key(), args.threshold)
}

fn cmd_mine_stats(args: MineStatsArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let (model, space) = match &args.checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            (ckpt.model, ckpt.label_space)
        }
        None => {
            let space = label_space_for(&manifest, LabelMode::Binary)?;
            let data = dataset_from_manifest(&manifest, &space)?;
            let defaults = TrainConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let model = MlpModel::new_random(
                data.dim,
                &defaults.hidden_dims,
                defaults.embedding_dim,
                space.num_classes(),
                &mut rng,
            );
            (model, space)
        }
    };
    let data = dataset_from_manifest(&manifest, &space)?;
    let mut csv = String::from("epoch,batch,n_easy,n_semi,n_hard,active_fraction\n");
    for (batch_idx, start) in (0..data.n).step_by(args.batch_size).enumerate() {
        let end = (start + args.batch_size).min(data.n);
        let b = end - start;
        let cache = model.forward(&data.features[start * data.dim..end * data.dim], b)?;
        let batch = dfdet::model::EmbeddingBatch::new(
            cache.embeddings,
            data.labels[start..end].to_vec(),
            model.embedding_dim(),
        )?;
        let d = pairwise_distances(&batch);
        let counts = count_categories(&d, &batch.labels, args.margin);
        csv.push_str(&format!(
            "0,{},{},{},{},{}\n",
            batch_idx,
            counts.easy,
            counts.semi_hard,
            counts.hard,
            counts.active_fraction()
        ));
    }
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    std::fs::write(&args.out, csv).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    println!("wrote mining statistics to {}", args.out.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let (predictions, space) = read_predictions_csv(&args.predictions)?;
    ensure_dir(&args.out)?;
    let videos = video_scores(&predictions, &space)?;
    write_report(&args.out, &videos, args.group_by.key(), args.threshold)
}

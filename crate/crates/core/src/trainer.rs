//! Training loop: AdamW with decoupled weight decay, layer-wise learning rate
//! decay, warmup-cosine schedule, seeded shuffling and lowest-validation-loss
//! checkpointing.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::ingest::Manifest;
use crate::losses::combined_loss;
use crate::model::{assign_class, make_label_space, EmbeddingBatch, LabelMode, LabelSpace, LossConfig};
use crate::network::MlpModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub layer_decay: f64,
    pub warmup_epochs: usize,
    pub loss: LossConfig,
    pub label_mode: LabelMode,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    /// Optional seeded Gaussian jitter on input features (augmentation
    /// stand-in for feature-space corpora). 0 disables it.
    pub feature_jitter_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            base_lr: 1e-4,
            weight_decay: 0.05,
            layer_decay: 0.75,
            warmup_epochs: 5,
            loss: LossConfig::default(),
            label_mode: LabelMode::Binary,
            seed: 0,
            hidden_dims: vec![64, 64],
            embedding_dim: 16,
            feature_jitter_std: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_epochs >= self.epochs {
            return Err(Error::Config(
                "warmup_epochs must be smaller than epochs".to_string(),
            ));
        }
        if self.base_lr <= 0.0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("rates and sizes must be positive".to_string()));
        }
        if !(0.0..=1.0).contains(&self.layer_decay) || self.layer_decay == 0.0 {
            return Err(Error::Config("layer_decay must be in (0, 1]".to_string()));
        }
        self.loss.validate()
    }
}

/// Learning rate at fractional epoch t: linear warmup from 0 to base over the
/// warmup span, then cosine decay from base to 0 over the remaining epochs.
pub fn lr_at(t: f64, config: &TrainConfig) -> f64 {
    let warmup = config.warmup_epochs as f64;
    let total = config.epochs as f64;
    if t < warmup {
        config.base_lr * t / warmup
    } else {
        let progress = (t - warmup) / (total - warmup);
        config.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Layer-wise multiplier decay^(L - l); the head (l = L) gets 1.0.
pub fn layer_lr_scale(layer_index: usize, num_layers: usize, decay: f64) -> f64 {
    decay.powi((num_layers - layer_index) as i32)
}

/// One AdamW step on a single tensor. Decoupled weight decay:
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    wd: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for k in 0..params.len() {
        m[k] = beta1 * m[k] + (1.0 - beta1) * grads[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * grads[k] * grads[k];
        let m_hat = m[k] / bc1;
        let v_hat = v[k] / bc2;
        params[k] -= lr * m_hat / (v_hat.sqrt() + eps) + lr * wd * params[k];
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// AdamW moment buffers, one (m, v) pair per parameter tensor in canonical
/// order, plus the global step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl OptimizerState {
    pub fn zeros_like(model: &MlpModel) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        OptimizerState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// Per-epoch training metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub active_triplets_mean: f64,
}

/// Training result: best checkpoint plus the per-epoch log.
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

/// Feature matrix and class labels extracted from a manifest.
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub n: usize,
    pub dim: usize,
}

/// Resolves the label space for a mode from the manifest's dataset tags.
pub fn label_space_for(manifest: &Manifest, mode: LabelMode) -> Result<LabelSpace> {
    let mut tags = manifest.dataset_tags();
    tags.sort();
    make_label_space(mode, &tags)
}

pub fn dataset_from_manifest(manifest: &Manifest, space: &LabelSpace) -> Result<Dataset> {
    if manifest.records.is_empty() {
        return Err(Error::Sampling("empty manifest".to_string()));
    }
    if !manifest.is_feature_based() {
        return Err(Error::Sampling(
            "training requires feature-based manifests".to_string(),
        ));
    }
    let dim = manifest.records[0].features.as_ref().unwrap().len();
    let mut features = Vec::with_capacity(manifest.records.len() * dim);
    let mut labels = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let f = r.features.as_ref().unwrap();
        if f.len() != dim {
            return Err(Error::Shape(format!(
                "record {} has feature dim {} != {}",
                r.sample_id,
                f.len(),
                dim
            )));
        }
        features.extend_from_slice(f);
        labels.push(assign_class(r, space)?);
    }
    Ok(Dataset {
        features,
        labels,
        n: manifest.records.len(),
        dim,
    })
}

fn subseed(seed: u64, name: &str) -> u64 {
    // stable per-component stream derivation
    let mut h: u64 = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in name.bytes() {
        h = h.wrapping_mul(0x100_0000_01b3).wrapping_add(b as u64);
    }
    h
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// Mean combined loss over a dataset, in fixed batch order, no gradients.
fn evaluate_loss(
    model: &MlpModel,
    data: &Dataset,
    num_classes: usize,
    loss: &LossConfig,
    batch_size: usize,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for start in (0..data.n).step_by(batch_size) {
        let end = (start + batch_size).min(data.n);
        let b = end - start;
        let feats = &data.features[start * data.dim..end * data.dim];
        let labels = data.labels[start..end].to_vec();
        let cache = model.forward(feats, b)?;
        let batch = EmbeddingBatch::new(cache.embeddings.clone(), labels, model.embedding_dim())?;
        let out = combined_loss(&batch, &cache.logits, num_classes, loss)?;
        total += out.value * b as f64;
        count += b;
    }
    Ok(total / count as f64)
}

/// Trains the toy model end-to-end and returns the checkpoint with the lowest
/// validation loss (earliest epoch on ties).
pub fn train(
    train_manifest: &Manifest,
    val_manifest: &Manifest,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let space = label_space_for(train_manifest, config.label_mode)?;
    let train_data = dataset_from_manifest(train_manifest, &space)?;
    let val_data = dataset_from_manifest(val_manifest, &space)?;
    let num_classes = space.num_classes();

    let mut init_rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, "init"));
    let mut model = MlpModel::new_random(
        train_data.dim,
        &config.hidden_dims,
        config.embedding_dim,
        num_classes,
        &mut init_rng,
    );
    let mut opt = OptimizerState::zeros_like(&model);
    let groups: Vec<usize> = model
        .tensor_names_and_groups()
        .iter()
        .map(|(_, g)| *g)
        .collect();
    let num_layers = model.encoder.len();

    let mut best: Option<Checkpoint> = None;
    let mut metrics = Vec::with_capacity(config.epochs);
    let n_batches = train_data.n.div_ceil(config.batch_size);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_data.n).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(subseed(config.seed, "shuffle").wrapping_add(epoch as u64));
        order.shuffle(&mut shuffle_rng);
        let mut jitter_rng =
            ChaCha8Rng::seed_from_u64(subseed(config.seed, "jitter").wrapping_add(epoch as u64));

        let mut epoch_loss = 0.0;
        let mut epoch_samples = 0usize;
        let mut active_sum = 0.0;
        let mut epoch_lr = 0.0;

        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let b = chunk.len();
            let mut feats = Vec::with_capacity(b * train_data.dim);
            let mut labels = Vec::with_capacity(b);
            for &i in chunk {
                feats.extend_from_slice(
                    &train_data.features[i * train_data.dim..(i + 1) * train_data.dim],
                );
                labels.push(train_data.labels[i]);
            }
            if config.feature_jitter_std > 0.0 {
                for v in &mut feats {
                    *v += standard_normal(&mut jitter_rng) * config.feature_jitter_std;
                }
            }
            let cache = model.forward(&feats, b)?;
            let batch =
                EmbeddingBatch::new(cache.embeddings.clone(), labels, model.embedding_dim())?;
            let out = combined_loss(&batch, &cache.logits, num_classes, &config.loss)?;
            if !out.value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch} batch {batch_idx}"
                )));
            }
            epoch_loss += out.value * b as f64;
            epoch_samples += b;
            active_sum += out.active_triplet_count as f64;

            let grads = model.backward(&cache, &out.grad_logits, &out.grad_embeddings);
            let t_frac = epoch as f64 + batch_idx as f64 / n_batches as f64;
            let lr = lr_at(t_frac, config);
            epoch_lr = lr;
            opt.t += 1;
            let grad_tensors = grads.tensors();
            let mut param_tensors = model.tensors_mut();
            for (idx, params) in param_tensors.iter_mut().enumerate() {
                let scale = layer_lr_scale(groups[idx], num_layers, config.layer_decay);
                adamw_step(
                    params,
                    grad_tensors[idx],
                    &mut opt.m[idx],
                    &mut opt.v[idx],
                    lr * scale,
                    config.weight_decay,
                    ADAM_BETA1,
                    ADAM_BETA2,
                    ADAM_EPS,
                    opt.t,
                );
            }
        }

        let val_loss = evaluate_loss(&model, &val_data, num_classes, &config.loss, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss at epoch {epoch}")));
        }
        metrics.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss / epoch_samples as f64,
            val_loss,
            lr: epoch_lr,
            active_triplets_mean: active_sum / n_batches as f64,
        });
        let is_better = best.as_ref().is_none_or(|c| val_loss < c.val_loss);
        if is_better {
            best = Some(Checkpoint {
                format_version: Checkpoint::FORMAT_VERSION,
                epoch,
                val_loss,
                config: config.clone(),
                label_space: space.clone(),
                model: model.clone(),
                optimizer: opt.clone(),
            });
        }
    }
    Ok(TrainOutcome {
        checkpoint: best.expect("epochs >= 1 guarantees a checkpoint"),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, Manipulation, SampleRecord, TripletVariant};

    #[test]
    fn lr_warmup_endpoint_is_base() {
        let config = TrainConfig::default();
        assert!((lr_at(5.0, &config) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn lr_cosine_midpoint_is_half_base() {
        let config = TrainConfig::default();
        // cosine span is [5, 30], midpoint 17.5
        assert!((lr_at(17.5, &config) - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn lr_end_is_zero() {
        let config = TrainConfig::default();
        assert!(lr_at(30.0, &config).abs() < 1e-18);
    }

    #[test]
    fn lr_continuous_and_nonincreasing_after_warmup() {
        let config = TrainConfig::default();
        let eps = 1e-6;
        assert!((lr_at(5.0 - eps, &config) - lr_at(5.0 + eps, &config)).abs() < 1e-9);
        let mut prev = lr_at(5.0, &config);
        let mut t = 5.0;
        while t <= 30.0 {
            let cur = lr_at(t, &config);
            assert!(cur <= prev + 1e-15);
            prev = cur;
            t += 0.1;
        }
    }

    #[test]
    fn layer_scale_fixtures() {
        assert_eq!(layer_lr_scale(2, 2, 0.75), 1.0); // head
        assert!((layer_lr_scale(0, 2, 0.75) - 0.5625).abs() < 1e-12);
        assert_eq!(layer_lr_scale(0, 3, 1.0), 1.0);
    }

    #[test]
    fn adamw_hand_fixture() {
        let mut p = vec![1.0];
        let g = vec![0.5];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        adamw_step(&mut p, &g, &mut m, &mut v, 0.1, 0.05, 0.9, 0.999, 0.0, 1);
        // m_hat = g, v_hat = g^2 -> update = lr * g/|g| + lr*wd*p
        assert!((p[0] - 0.895).abs() < 1e-12);
    }

    #[test]
    fn adamw_zero_grad_zero_wd_is_identity() {
        let mut p = vec![0.3, -1.2];
        let g = vec![0.0, 0.0];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adamw_step(&mut p, &g, &mut m, &mut v, 0.1, 0.0, 0.9, 0.999, 1e-8, 1);
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn adamw_zero_grad_pure_shrink() {
        let mut p = vec![2.0];
        let g = vec![0.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        adamw_step(&mut p, &g, &mut m, &mut v, 0.1, 0.05, 0.9, 0.999, 1e-8, 1);
        assert!((p[0] - 2.0 * (1.0 - 0.1 * 0.05)).abs() < 1e-15);
    }

    fn tiny_manifest(n_per_class: usize, offset: f64) -> Manifest {
        let mut records = Vec::new();
        for i in 0..n_per_class {
            let x = i as f64 * 0.1;
            records.push(SampleRecord {
                sample_id: format!("r{i}"),
                video_id: format!("vr{i}"),
                dataset: "ds".to_string(),
                label: Label::Real,
                manipulation: None,
                features: Some(vec![x, -x]),
                frame: None,
            });
            records.push(SampleRecord {
                sample_id: format!("f{i}"),
                video_id: format!("vf{i}"),
                dataset: "ds".to_string(),
                label: Label::Fake,
                manipulation: Some(Manipulation::FS),
                features: Some(vec![x + offset, offset - x]),
                frame: None,
            });
        }
        Manifest {
            records,
            source_path: "mem".to_string(),
        }
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            warmup_epochs: 1,
            hidden_dims: vec![6],
            embedding_dim: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_at_init() {
        let m = tiny_manifest(4, 2.0);
        let mut config = quick_config();
        config.epochs = 2;
        config.warmup_epochs = 1;
        // warmup from 0 with 1 warmup epoch: first epoch lr ramps from 0;
        // force zero by shrinking base_lr to the minimum positive value
        config.base_lr = f64::MIN_POSITIVE;
        let out = train(&m, &m, &config).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, "init"));
        let reference = MlpModel::new_random(2, &config.hidden_dims, 3, 2, &mut init_rng);
        for (got, want) in out.checkpoint.model.tensors().iter().zip(reference.tensors()) {
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_checkpoint() {
        let m = tiny_manifest(6, 1.5);
        let config = quick_config();
        let a = train(&m, &m, &config).unwrap();
        let b = train(&m, &m, &config).unwrap();
        assert_eq!(a.checkpoint.model, b.checkpoint.model);
        assert_eq!(a.checkpoint.optimizer, b.checkpoint.optimizer);
        assert_eq!(a.checkpoint.epoch, b.checkpoint.epoch);
    }

    #[test]
    fn separable_data_improves_validation_loss() {
        let m = tiny_manifest(10, 3.0);
        let mut config = quick_config();
        config.epochs = 10;
        config.warmup_epochs = 2;
        config.base_lr = 1e-2;
        let out = train(&m, &m, &config).unwrap();
        assert!(out.checkpoint.val_loss < out.metrics[0].val_loss);
    }

    #[test]
    fn zero_weight_and_none_variant_match() {
        let m = tiny_manifest(5, 1.0);
        let mut c1 = quick_config();
        c1.loss.triplet_variant = TripletVariant::None;
        c1.loss.triplet_weight = 1.0;
        let mut c2 = quick_config();
        c2.loss.triplet_variant = TripletVariant::BatchAll;
        c2.loss.triplet_weight = 0.0;
        let a = train(&m, &m, &c1).unwrap();
        let b = train(&m, &m, &c2).unwrap();
        assert_eq!(a.checkpoint.model, b.checkpoint.model);
    }

    #[test]
    fn empty_manifest_rejected() {
        let empty = Manifest {
            records: Vec::new(),
            source_path: "mem".to_string(),
        };
        let m = tiny_manifest(3, 1.0);
        assert!(train(&empty, &m, &quick_config()).is_err());
    }
}

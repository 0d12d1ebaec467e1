//! Forward values and analytic gradients for softmax cross-entropy, the three
//! online-mined triplet variants (Batch-All, HP-HN, EP-HN) and the combined
//! objective L = L_ce + w * L_tri.

use crate::error::{Error, Result};
use crate::mining::{pairwise_distances, select_anchor_extremes, valid_triplets};
use crate::model::{EmbeddingBatch, LossConfig, TripletVariant};

/// Loss value plus gradients. `grad_embeddings` is B x D (empty for pure
/// cross-entropy), `grad_logits` is B x C (empty for pure triplet losses).
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_embeddings: Vec<f64>,
    pub grad_logits: Vec<f64>,
    pub active_triplet_count: usize,
}

/// Hinge loss of a single triplet: max(d_ap - d_an + m, 0).
pub fn triplet_single(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

/// Mean negative log softmax probability of the true class, with
/// max-subtraction for stability. Works for any C >= 2 so the attribution
/// modes reuse it unchanged.
pub fn softmax_cross_entropy(
    logits: &[f64],
    labels: &[usize],
    num_classes: usize,
) -> Result<LossOutput> {
    let b = labels.len();
    if logits.len() != b * num_classes {
        return Err(Error::Shape(format!(
            "logits length {} != B*C = {}*{}",
            logits.len(),
            b,
            num_classes
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logit".to_string()));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; b * num_classes];
    for i in 0..b {
        let row = &logits[i * num_classes..(i + 1) * num_classes];
        let y = labels[i];
        if y >= num_classes {
            return Err(Error::Shape(format!("label {y} out of range (C={num_classes})")));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        value += -(row[y] - max - sum.ln());
        for c in 0..num_classes {
            let p = exps[c] / sum;
            grad[i * num_classes + c] = (p - if c == y { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok(LossOutput {
        value: value / b as f64,
        grad_embeddings: Vec::new(),
        grad_logits: grad,
        active_triplet_count: 0,
    })
}

/// Per-class softmax probabilities for one logits row.
pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

// Accumulates the gradient of coeff * d(i, j) with respect to the embeddings.
// The epsilon floor guards the zero-distance singularity; forward values are
// never touched by it.
fn accumulate_distance_grad(
    grad: &mut [f64],
    batch: &EmbeddingBatch,
    i: usize,
    j: usize,
    dist: f64,
    coeff: f64,
    eps: f64,
) {
    let denom = dist.max(eps);
    let d = batch.d;
    for k in 0..d {
        let u = (batch.embeddings[i * d + k] - batch.embeddings[j * d + k]) / denom;
        grad[i * d + k] += coeff * u;
        grad[j * d + k] -= coeff * u;
    }
}

/// Batch-All: mean hinge over the active subset (triplets with a strictly
/// positive hinge). Zero value and gradients when no triplet is active.
pub fn loss_batch_all(batch: &EmbeddingBatch, margin: f64, eps: f64) -> LossOutput {
    let d = pairwise_distances(batch);
    let mut active = Vec::new();
    for t in valid_triplets(&batch.labels) {
        let hinge = triplet_single(d.get(t.a, t.p), d.get(t.a, t.n), margin);
        if hinge > 0.0 {
            active.push((t, hinge));
        }
    }
    let mut grad = vec![0.0; batch.b * batch.d];
    if active.is_empty() {
        return LossOutput {
            value: 0.0,
            grad_embeddings: grad,
            grad_logits: Vec::new(),
            active_triplet_count: 0,
        };
    }
    let count = active.len();
    let coeff = 1.0 / count as f64;
    let mut sum = 0.0;
    for (t, hinge) in &active {
        sum += hinge;
        accumulate_distance_grad(&mut grad, batch, t.a, t.p, d.get(t.a, t.p), coeff, eps);
        accumulate_distance_grad(&mut grad, batch, t.a, t.n, d.get(t.a, t.n), -coeff, eps);
    }
    LossOutput {
        value: sum / count as f64,
        grad_embeddings: grad,
        grad_logits: Vec::new(),
        active_triplet_count: count,
    }
}

fn loss_anchor_extremes(
    batch: &EmbeddingBatch,
    margin: f64,
    eps: f64,
    use_easy_positive: bool,
) -> LossOutput {
    let d = pairwise_distances(batch);
    // qualifying anchors: at least one positive and one negative peer
    let mut terms = Vec::new();
    for a in 0..batch.b {
        let sel = select_anchor_extremes(&d, &batch.labels, a);
        let pos = if use_easy_positive {
            sel.easy_positive
        } else {
            sel.hard_positive
        };
        if let (Some(p), Some(n)) = (pos, sel.hard_negative) {
            terms.push((a, p, n));
        }
    }
    let mut grad = vec![0.0; batch.b * batch.d];
    if terms.is_empty() {
        return LossOutput {
            value: 0.0,
            grad_embeddings: grad,
            grad_logits: Vec::new(),
            active_triplet_count: 0,
        };
    }
    let q = terms.len();
    let coeff = 1.0 / q as f64;
    let mut sum = 0.0;
    let mut active = 0;
    for (a, p, n) in terms {
        let hinge = triplet_single(d.get(a, p), d.get(a, n), margin);
        sum += hinge;
        if hinge > 0.0 {
            active += 1;
            accumulate_distance_grad(&mut grad, batch, a, p, d.get(a, p), coeff, eps);
            accumulate_distance_grad(&mut grad, batch, a, n, d.get(a, n), -coeff, eps);
        }
    }
    LossOutput {
        value: sum / q as f64,
        grad_embeddings: grad,
        grad_logits: Vec::new(),
        active_triplet_count: active,
    }
}

/// HP-HN: per anchor, hinge over (hardest positive, hardest negative), mean
/// over anchors that have both kinds of peers.
pub fn loss_hp_hn(batch: &EmbeddingBatch, margin: f64, eps: f64) -> LossOutput {
    loss_anchor_extremes(batch, margin, eps, false)
}

/// EP-HN: per anchor, hinge over (easiest positive, hardest negative), mean
/// over anchors that have both kinds of peers.
pub fn loss_ep_hn(batch: &EmbeddingBatch, margin: f64, eps: f64) -> LossOutput {
    loss_anchor_extremes(batch, margin, eps, true)
}

/// Selected triplet variant, or a zero output for `None`.
pub fn triplet_loss(batch: &EmbeddingBatch, config: &LossConfig) -> LossOutput {
    match config.triplet_variant {
        TripletVariant::None => LossOutput {
            value: 0.0,
            grad_embeddings: vec![0.0; batch.b * batch.d],
            grad_logits: Vec::new(),
            active_triplet_count: 0,
        },
        TripletVariant::BatchAll => {
            loss_batch_all(batch, config.margin, config.distance_epsilon)
        }
        TripletVariant::HpHn => loss_hp_hn(batch, config.margin, config.distance_epsilon),
        TripletVariant::EpHn => loss_ep_hn(batch, config.margin, config.distance_epsilon),
    }
}

/// Combined objective: cross-entropy plus w times the selected triplet
/// variant. `grad_logits` carries the cross-entropy term, `grad_embeddings`
/// the weighted triplet term.
pub fn combined_loss(
    batch: &EmbeddingBatch,
    logits: &[f64],
    num_classes: usize,
    config: &LossConfig,
) -> Result<LossOutput> {
    config.validate()?;
    let ce = softmax_cross_entropy(logits, &batch.labels, num_classes)?;
    let tri = triplet_loss(batch, config);
    let w = config.triplet_weight;
    let grad_embeddings = tri.grad_embeddings.iter().map(|g| g * w).collect();
    Ok(LossOutput {
        value: ce.value + w * tri.value,
        grad_embeddings,
        grad_logits: ce.grad_logits,
        active_triplet_count: tri.active_triplet_count,
    })
}

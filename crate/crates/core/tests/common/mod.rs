//! Independent oracles shared by the integration suites. These deliberately
//! re-derive every quantity by brute force, without touching the library's
//! computation paths beyond raw embedding access.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use dfdet::model::EmbeddingBatch;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Brute-force Batch-All: enumerate every valid triplet, keep the strictly
/// positive hinges, average. Returns (value, active count).
pub fn oracle_batch_all(batch: &EmbeddingBatch, margin: f64) -> (f64, usize) {
    let b = batch.b;
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..b {
        for p in 0..b {
            if p == a || batch.labels[p] != batch.labels[a] {
                continue;
            }
            for n in 0..b {
                if batch.labels[n] == batch.labels[a] {
                    continue;
                }
                let hinge =
                    euclid(batch.row(a), batch.row(p)) - euclid(batch.row(a), batch.row(n)) + margin;
                if hinge > 0.0 {
                    sum += hinge;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        (0.0, 0)
    } else {
        (sum / count as f64, count)
    }
}

/// Brute-force per-anchor variant. `easy_positive` selects EP-HN, otherwise
/// HP-HN. Mean over anchors that have both a positive and a negative peer.
pub fn oracle_anchor_extremes(batch: &EmbeddingBatch, margin: f64, easy_positive: bool) -> f64 {
    let b = batch.b;
    let mut sum = 0.0;
    let mut qualifying = 0usize;
    for a in 0..b {
        let mut best_pos: Option<f64> = None;
        let mut best_neg: Option<f64> = None;
        for j in 0..b {
            if j == a {
                continue;
            }
            let dist = euclid(batch.row(a), batch.row(j));
            if batch.labels[j] == batch.labels[a] {
                best_pos = Some(match best_pos {
                    None => dist,
                    Some(cur) => {
                        if easy_positive {
                            cur.min(dist)
                        } else {
                            cur.max(dist)
                        }
                    }
                });
            } else {
                best_neg = Some(match best_neg {
                    None => dist,
                    Some(cur) => cur.min(dist),
                });
            }
        }
        if let (Some(dp), Some(dn)) = (best_pos, best_neg) {
            qualifying += 1;
            sum += (dp - dn + margin).max(0.0);
        }
    }
    if qualifying == 0 {
        0.0
    } else {
        sum / qualifying as f64
    }
}

/// O(n^2) pair-counting AUC: concordant pairs count 1, ties 0.5.
pub fn oracle_pair_count_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                total += 1.0;
            } else if p == n {
                total += 0.5;
            }
        }
    }
    Some(total / (pos.len() * neg.len()) as f64)
}

/// Random batch with the given bounds; guarantees at least two classes are
/// present when `classes >= 2` and `b >= 2`.
pub fn random_batch(rng: &mut ChaCha8Rng, b: usize, d: usize, classes: usize) -> EmbeddingBatch {
    let embeddings: Vec<f64> = (0..b * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();
    if classes >= 2 && b >= 2 && labels.iter().all(|&l| l == labels[0]) {
        labels[0] = (labels[0] + 1) % classes;
    }
    EmbeddingBatch::new(embeddings, labels, d).unwrap()
}

/// Mean inter-class to mean intra-class distance ratio over an embedding set,
/// computed by direct double loop.
pub fn class_separation_ratio(embeddings: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut intra = (0.0, 0usize);
    let mut inter = (0.0, 0usize);
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            let dist = euclid(&embeddings[i], &embeddings[j]);
            if labels[i] == labels[j] {
                intra.0 += dist;
                intra.1 += 1;
            } else {
                inter.0 += dist;
                inter.1 += 1;
            }
        }
    }
    (inter.0 / inter.1 as f64) / (intra.0 / intra.1 as f64)
}

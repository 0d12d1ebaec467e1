//! Online triplet mining: pairwise distances, valid-triplet enumeration,
//! triplet categorization and per-anchor hard/easy selection.

use crate::model::{DistanceMatrix, EmbeddingBatch};

/// Indices of one (anchor, positive, negative) triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletIndex {
    pub a: usize,
    pub p: usize,
    pub n: usize,
}

/// Per-anchor extremes. Fields are absent when the anchor lacks a same-class
/// or different-class peer in the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorSelection {
    pub anchor: usize,
    pub hard_positive: Option<usize>,
    pub easy_positive: Option<usize>,
    pub hard_negative: Option<usize>,
}

/// Triplet taxonomy by where the anchor-negative distance falls relative to
/// the anchor-positive distance and the margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripletCategory {
    Easy,
    SemiHard,
    Hard,
}

/// True Euclidean distances, exact zero diagonal.
pub fn pairwise_distances(batch: &EmbeddingBatch) -> DistanceMatrix {
    let b = batch.b;
    let mut d = vec![0.0; b * b];
    for i in 0..b {
        for j in (i + 1)..b {
            let mut sq = 0.0;
            for (x, y) in batch.row(i).iter().zip(batch.row(j)) {
                let diff = x - y;
                sq += diff * diff;
            }
            let dist = sq.max(0.0).sqrt();
            d[i * b + j] = dist;
            d[j * b + i] = dist;
        }
    }
    DistanceMatrix { d, b }
}

/// Exhaustive enumeration of valid triplets (y_a = y_p, y_a != y_n, a != p)
/// in lexicographic (a, p, n) order. Single-class batches yield an empty list.
pub fn valid_triplets(labels: &[usize]) -> Vec<TripletIndex> {
    let b = labels.len();
    let mut out = Vec::new();
    for a in 0..b {
        for p in 0..b {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            for n in 0..b {
                if labels[n] != labels[a] {
                    out.push(TripletIndex { a, p, n });
                }
            }
        }
    }
    out
}

/// Classifies one triplet. The boundary d_an = d_ap counts as semi-hard
/// (strict inequality for hard); d_an = d_ap + margin counts as easy.
pub fn categorize_triplet(
    d: &DistanceMatrix,
    triplet: TripletIndex,
    margin: f64,
) -> TripletCategory {
    let d_ap = d.get(triplet.a, triplet.p);
    let d_an = d.get(triplet.a, triplet.n);
    if d_an < d_ap {
        TripletCategory::Hard
    } else if d_an < d_ap + margin {
        TripletCategory::SemiHard
    } else {
        TripletCategory::Easy
    }
}

/// Hard positive (most distant same-class peer), easy positive (closest
/// same-class peer) and hard negative (closest different-class peer) for one
/// anchor. Ties break to the lowest batch index.
pub fn select_anchor_extremes(
    d: &DistanceMatrix,
    labels: &[usize],
    anchor: usize,
) -> AnchorSelection {
    let mut hard_positive: Option<usize> = None;
    let mut easy_positive: Option<usize> = None;
    let mut hard_negative: Option<usize> = None;
    for j in 0..labels.len() {
        if j == anchor {
            continue;
        }
        let dist = d.get(anchor, j);
        if labels[j] == labels[anchor] {
            if hard_positive.is_none_or(|k| dist > d.get(anchor, k)) {
                hard_positive = Some(j);
            }
            if easy_positive.is_none_or(|k| dist < d.get(anchor, k)) {
                easy_positive = Some(j);
            }
        } else if hard_negative.is_none_or(|k| dist < d.get(anchor, k)) {
            hard_negative = Some(j);
        }
    }
    AnchorSelection {
        anchor,
        hard_positive,
        easy_positive,
        hard_negative,
    }
}

/// Per-batch counts of easy / semi-hard / hard triplets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    pub easy: usize,
    pub semi_hard: usize,
    pub hard: usize,
}

impl CategoryCounts {
    pub fn total(&self) -> usize {
        self.easy + self.semi_hard + self.hard
    }

    /// Fraction of valid triplets that are active (hard or semi-hard).
    pub fn active_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.semi_hard + self.hard) as f64 / self.total() as f64
        }
    }
}

pub fn count_categories(d: &DistanceMatrix, labels: &[usize], margin: f64) -> CategoryCounts {
    let mut counts = CategoryCounts::default();
    for t in valid_triplets(labels) {
        match categorize_triplet(d, t, margin) {
            TripletCategory::Easy => counts.easy += 1,
            TripletCategory::SemiHard => counts.semi_hard += 1,
            TripletCategory::Hard => counts.hard += 1,
        }
    }
    counts
}

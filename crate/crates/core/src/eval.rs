//! Video-level evaluation: attribution collapse, per-video score aggregation,
//! ROC-AUC (rank-based Mann-Whitney with average-rank tie handling), balanced
//! accuracy and grouped reporting.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Label, LabelSpace, Manipulation};

/// Per-frame prediction, the unit written to the predictions CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub sample_id: String,
    pub video_id: String,
    pub dataset: String,
    pub manipulation: Option<Manipulation>,
    pub true_label: Label,
    /// Softmax probabilities in label-space class order.
    pub class_probs: Vec<f64>,
}

/// Aggregated score for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore {
    pub video_id: String,
    pub dataset: String,
    pub manipulation: Option<Manipulation>,
    pub true_label: Label,
    pub fake_probability: f64,
    pub n_frames: usize,
}

/// Sums the fake-class probabilities into a single binary fake score.
pub fn collapse_to_binary(class_probs: &[f64], space: &LabelSpace) -> Result<f64> {
    if class_probs.len() != space.num_classes() {
        return Err(Error::Shape(format!(
            "probability vector length {} != {} classes",
            class_probs.len(),
            space.num_classes()
        )));
    }
    let sum: f64 = class_probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Numeric(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(space
        .fake_class_indices()
        .iter()
        .map(|&i| class_probs[i])
        .sum())
}

/// Arithmetic mean of per-frame fake probabilities.
pub fn aggregate_video(frame_probs: &[f64]) -> Result<f64> {
    if frame_probs.is_empty() {
        return Err(Error::Numeric("cannot aggregate an empty video".to_string()));
    }
    Ok(frame_probs.iter().sum::<f64>() / frame_probs.len() as f64)
}

/// Groups frame predictions by video (ordered by video id) and averages the
/// collapsed fake probability per video.
pub fn video_scores(predictions: &[FramePrediction], space: &LabelSpace) -> Result<Vec<VideoScore>> {
    let mut by_video: BTreeMap<&str, Vec<&FramePrediction>> = BTreeMap::new();
    for p in predictions {
        by_video.entry(p.video_id.as_str()).or_default().push(p);
    }
    let mut out = Vec::with_capacity(by_video.len());
    for (video_id, frames) in by_video {
        let probs: Vec<f64> = frames
            .iter()
            .map(|f| collapse_to_binary(&f.class_probs, space))
            .collect::<Result<_>>()?;
        let first = frames[0];
        out.push(VideoScore {
            video_id: video_id.to_string(),
            dataset: first.dataset.clone(),
            manipulation: first.manipulation,
            true_label: first.true_label,
            fake_probability: aggregate_video(&probs)?,
            n_frames: frames.len(),
        });
    }
    Ok(out)
}

/// ROC-AUC via the Mann-Whitney statistic with average ranks (ties count
/// one half). `labels[i]` true means positive (fake). Returns `None` when a
/// class is missing, where the metric is undefined.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // average ranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// (TPR + TNR) / 2 with prediction "fake" iff score >= threshold. `None`
/// when a class is missing.
pub fn balanced_accuracy(scores: &[f64], labels: &[bool], threshold: f64) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let mut tp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    let mut fp = 0usize;
    for (&s, &fake) in scores.iter().zip(labels) {
        let predicted_fake = s >= threshold;
        match (fake, predicted_fake) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    if tp + fn_ == 0 || tn + fp == 0 {
        return None;
    }
    let tpr = tp as f64 / (tp + fn_) as f64;
    let tnr = tn as f64 / (tn + fp) as f64;
    Some((tpr + tnr) / 2.0)
}

/// Key for grouped reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Dataset,
    Manipulation,
}

#[derive(Debug, Clone)]
pub struct GroupRow {
    pub name: String,
    pub n_videos: usize,
    pub auc: Option<f64>,
    pub bacc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GroupedReport {
    pub rows: Vec<GroupRow>,
    /// Unweighted means over groups where the metric is defined.
    pub avg_auc: Option<f64>,
    pub avg_bacc: Option<f64>,
    /// Names of groups excluded from the averages (single-class groups).
    pub excluded: Vec<String>,
}

/// Per-group AUC and bACC plus unweighted averages. Grouping by dataset
/// partitions videos; grouping by manipulation pairs each manipulation's fake
/// videos with every real video.
pub fn grouped_report(
    videos: &[VideoScore],
    key: GroupKey,
    threshold: f64,
) -> GroupedReport {
    let mut groups: BTreeMap<String, Vec<&VideoScore>> = BTreeMap::new();
    match key {
        GroupKey::Dataset => {
            for v in videos {
                groups.entry(v.dataset.clone()).or_default().push(v);
            }
        }
        GroupKey::Manipulation => {
            let reals: Vec<&VideoScore> =
                videos.iter().filter(|v| v.true_label == Label::Real).collect();
            for v in videos {
                if let Some(m) = v.manipulation {
                    groups.entry(m.tag().to_string()).or_default().push(v);
                }
            }
            for members in groups.values_mut() {
                members.extend(reals.iter());
            }
        }
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let mut auc_values = Vec::new();
    let mut bacc_values = Vec::new();
    for (name, members) in groups {
        let scores: Vec<f64> = members.iter().map(|v| v.fake_probability).collect();
        let labels: Vec<bool> = members.iter().map(|v| v.true_label == Label::Fake).collect();
        let auc = roc_auc(&scores, &labels);
        let bacc = balanced_accuracy(&scores, &labels, threshold);
        match (auc, bacc) {
            (Some(a), Some(b)) => {
                auc_values.push(a);
                bacc_values.push(b);
            }
            _ => excluded.push(name.clone()),
        }
        rows.push(GroupRow {
            name,
            n_videos: members.len(),
            auc,
            bacc,
        });
    }
    let mean = |vals: &[f64]| {
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    GroupedReport {
        rows,
        avg_auc: mean(&auc_values),
        avg_bacc: mean(&bacc_values),
        excluded,
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "undef".to_string(),
    }
}

impl GroupedReport {
    /// CSV rendering: group, n_videos, auc, bacc; Avg row last.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,n_videos,auc,bacc\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.name,
                r.n_videos,
                fmt_metric(r.auc),
                fmt_metric(r.bacc)
            ));
        }
        out.push_str(&format!(
            "Avg,,{},{}\n",
            fmt_metric(self.avg_auc),
            fmt_metric(self.avg_bacc)
        ));
        out
    }

    /// Aligned-text rendering for terminals.
    pub fn to_table(&self) -> String {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(["group".len(), "Avg".len()])
            .max()
            .unwrap();
        let mut out = format!("{:<name_width$}  {:>8}  {:>7}  {:>7}\n", "group", "videos", "AUC", "bACC");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<name_width$}  {:>8}  {:>7}  {:>7}\n",
                r.name,
                r.n_videos,
                fmt_metric(r.auc),
                fmt_metric(r.bacc)
            ));
        }
        out.push_str(&format!(
            "{:<name_width$}  {:>8}  {:>7}  {:>7}\n",
            "Avg",
            "",
            fmt_metric(self.avg_auc),
            fmt_metric(self.avg_bacc)
        ));
        if !self.excluded.is_empty() {
            out.push_str(&format!(
                "warning: single-class groups excluded from Avg: {}\n",
                self.excluded.join(", ")
            ));
        }
        out
    }
}

/// Writes the predictions CSV. Binary label spaces get a single
/// `fake_probability` column; attribution spaces get one `p_<class>` column
/// per class. Floats use shortest round-trip formatting, so the file is
/// deterministic and lossless.
pub fn write_predictions_csv(
    predictions: &[FramePrediction],
    space: &LabelSpace,
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    use std::io::Write as _;
    let path_str = path.as_ref().display().to_string();
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path_str, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(&path_str, e);
    let binary = space.mode == crate::model::LabelMode::Binary;
    if binary {
        writeln!(w, "sample_id,video_id,dataset,manipulation,true_label,fake_probability")
            .map_err(io_err)?;
    } else {
        let prob_cols: Vec<String> =
            space.class_names.iter().map(|c| format!("p_{c}")).collect();
        writeln!(
            w,
            "sample_id,video_id,dataset,manipulation,true_label,{}",
            prob_cols.join(",")
        )
        .map_err(io_err)?;
    }
    for p in predictions {
        let manip = p.manipulation.map(|m| m.tag()).unwrap_or("");
        let label = match p.true_label {
            Label::Real => "real",
            Label::Fake => "fake",
        };
        if binary {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.sample_id, p.video_id, p.dataset, manip, label, p.class_probs[1]
            )
            .map_err(io_err)?;
        } else {
            let probs: Vec<String> = p.class_probs.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.sample_id,
                p.video_id,
                p.dataset,
                manip,
                label,
                probs.join(",")
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

/// Reads a predictions CSV written by `write_predictions_csv`. Returns the
/// predictions plus the reconstructed label space.
pub fn read_predictions_csv(
    path: impl AsRef<std::path::Path>,
) -> Result<(Vec<FramePrediction>, LabelSpace)> {
    let path_str = path.as_ref().display().to_string();
    let content =
        std::fs::read_to_string(&path).map_err(|e| Error::io(&path_str, e))?;
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Manifest {
            path: path_str.clone(),
            line: 0,
            msg: "empty predictions file".to_string(),
        })?;
    let cols: Vec<&str> = header.split(',').collect();
    let expected_prefix = ["sample_id", "video_id", "dataset", "manipulation", "true_label"];
    if cols.len() < 6 || cols[..5] != expected_prefix {
        return Err(Error::Manifest {
            path: path_str.clone(),
            line: 1,
            msg: "unexpected predictions header".to_string(),
        });
    }
    let (class_names, single_prob) = if cols[5] == "fake_probability" && cols.len() == 6 {
        (vec!["real".to_string(), "fake".to_string()], true)
    } else {
        let mut names = Vec::new();
        for c in &cols[5..] {
            let name = c.strip_prefix("p_").ok_or_else(|| Error::Manifest {
                path: path_str.clone(),
                line: 1,
                msg: format!("unexpected probability column '{c}'"),
            })?;
            names.push(name.to_string());
        }
        if names.first().map(|n| n.as_str()) != Some("real") {
            return Err(Error::Manifest {
                path: path_str.clone(),
                line: 1,
                msg: "first probability column must be p_real".to_string(),
            });
        }
        (names, false)
    };
    let mode = if single_prob {
        crate::model::LabelMode::Binary
    } else if class_names == ["real", "FS", "RE"] {
        crate::model::LabelMode::AttCateg
    } else {
        crate::model::LabelMode::AttDataset
    };
    let space = LabelSpace {
        mode,
        class_names: class_names.clone(),
    };
    let mut predictions = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Manifest {
                path: path_str.clone(),
                line: line_no,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let parse_err = |msg: String| Error::Manifest {
            path: path_str.clone(),
            line: line_no,
            msg,
        };
        let manipulation = match fields[3] {
            "" => None,
            "FS" => Some(Manipulation::FS),
            "RE" => Some(Manipulation::RE),
            other => return Err(parse_err(format!("unknown manipulation '{other}'"))),
        };
        let true_label = match fields[4] {
            "real" => Label::Real,
            "fake" => Label::Fake,
            other => return Err(parse_err(format!("unknown label '{other}'"))),
        };
        let class_probs = if single_prob {
            let p: f64 = fields[5]
                .parse()
                .map_err(|e| parse_err(format!("bad probability: {e}")))?;
            vec![1.0 - p, p]
        } else {
            fields[5..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(format!("bad probability: {e}")))?
        };
        predictions.push(FramePrediction {
            sample_id: fields[0].to_string(),
            video_id: fields[1].to_string(),
            dataset: fields[2].to_string(),
            manipulation,
            true_label,
            class_probs,
        });
    }
    Ok((predictions, space))
}

//! Domain types shared by every module: samples, labels, batches, distances
//! and loss configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth authenticity of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

/// Manipulation family of a fake sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manipulation {
    /// Face swapping.
    FS,
    /// Face reenactment.
    RE,
}

impl Manipulation {
    pub fn tag(self) -> &'static str {
        match self {
            Manipulation::FS => "FS",
            Manipulation::RE => "RE",
        }
    }
}

/// Reference to a face crop inside a source video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub path: String,
    /// Timestamp of the sampled frame, in seconds.
    pub t: f64,
    /// [x0, y0, x1, y1] pixel coordinates.
    pub bbox: [f64; 4],
}

/// One face observation: either a precomputed feature vector or a frame
/// reference, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub video_id: String,
    pub dataset: String,
    pub label: Label,
    pub manipulation: Option<Manipulation>,
    pub features: Option<Vec<f64>>,
    pub frame: Option<FrameRef>,
}

impl SampleRecord {
    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: &str| Error::InvalidRecord {
            sample_id: self.sample_id.clone(),
            msg: msg.to_string(),
        };
        match (&self.features, &self.frame) {
            (Some(_), Some(_)) => return Err(err("both features and frame present")),
            (None, None) => return Err(err("neither features nor frame present")),
            _ => {}
        }
        if self.label == Label::Real && self.manipulation.is_some() {
            return Err(err("real sample carries a manipulation tag"));
        }
        if let Some(f) = &self.features {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(err("non-finite feature value"));
            }
        }
        if self.dataset.is_empty() {
            return Err(err("empty dataset tag"));
        }
        Ok(())
    }
}

/// Label-space flavour selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    Binary,
    AttCateg,
    AttDataset,
}

impl std::fmt::Display for LabelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LabelMode::Binary => "binary",
            LabelMode::AttCateg => "att_categ",
            LabelMode::AttDataset => "att_dataset",
        };
        f.write_str(s)
    }
}

/// Mapping between record labels and contiguous class indices.
/// The real class is always index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub mode: LabelMode,
    pub class_names: Vec<String>,
}

impl LabelSpace {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub const REAL_CLASS: usize = 0;

    pub fn fake_class_indices(&self) -> Vec<usize> {
        (1..self.class_names.len()).collect()
    }
}

/// Builds the label space for a mode. Fake classes are ordered
/// lexicographically by tag so the mapping is deterministic across runs.
pub fn make_label_space(mode: LabelMode, dataset_tags: &[String]) -> Result<LabelSpace> {
    let class_names = match mode {
        LabelMode::Binary => vec!["real".to_string(), "fake".to_string()],
        LabelMode::AttCateg => vec!["real".to_string(), "FS".to_string(), "RE".to_string()],
        LabelMode::AttDataset => {
            if dataset_tags.is_empty() {
                return Err(Error::LabelSpace(
                    "att_dataset requires at least one dataset tag".to_string(),
                ));
            }
            let mut tags: Vec<String> = dataset_tags.to_vec();
            tags.sort();
            tags.dedup();
            let mut names = vec!["real".to_string()];
            names.extend(tags);
            names
        }
    };
    Ok(LabelSpace { mode, class_names })
}

/// Maps a record to its class index under the given label space.
pub fn assign_class(record: &SampleRecord, space: &LabelSpace) -> Result<usize> {
    if record.label == Label::Real {
        return Ok(LabelSpace::REAL_CLASS);
    }
    match space.mode {
        LabelMode::Binary => Ok(1),
        LabelMode::AttCateg => {
            let m = record.manipulation.ok_or_else(|| Error::InvalidRecord {
                sample_id: record.sample_id.clone(),
                msg: "fake record lacks manipulation tag under att_categ".to_string(),
            })?;
            space
                .class_names
                .iter()
                .position(|n| n == m.tag())
                .ok_or_else(|| Error::LabelSpace(format!("no class for manipulation {}", m.tag())))
        }
        LabelMode::AttDataset => space
            .class_names
            .iter()
            .position(|n| *n == record.dataset)
            .ok_or_else(|| Error::InvalidRecord {
                sample_id: record.sample_id.clone(),
                msg: format!("unknown dataset tag '{}' under att_dataset", record.dataset),
            }),
    }
}

/// A batch of encoder embeddings (B x D, row-major) with aligned class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub embeddings: Vec<f64>,
    pub labels: Vec<usize>,
    pub b: usize,
    pub d: usize,
}

impl EmbeddingBatch {
    pub fn new(embeddings: Vec<f64>, labels: Vec<usize>, d: usize) -> Result<Self> {
        let b = labels.len();
        if embeddings.len() != b * d {
            return Err(Error::Shape(format!(
                "embeddings length {} != B*D = {}*{}",
                embeddings.len(),
                b,
                d
            )));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding value".to_string()));
        }
        Ok(EmbeddingBatch {
            embeddings,
            labels,
            b,
            d,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.d..(i + 1) * self.d]
    }
}

/// B x B pairwise Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub d: Vec<f64>,
    pub b: usize,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.b + j]
    }
}

/// Triplet-loss variant selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletVariant {
    None,
    BatchAll,
    HpHn,
    EpHn,
}

/// Loss hyperparameters for the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
    pub triplet_weight: f64,
    pub triplet_variant: TripletVariant,
    /// Floor for gradient denominators only; forward values are exact.
    pub distance_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            margin: 0.2,
            triplet_weight: 1.0,
            triplet_variant: TripletVariant::None,
            distance_epsilon: 1e-12,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin < 0.0 {
            return Err(Error::Config("margin must be nonnegative".to_string()));
        }
        if self.triplet_weight < 0.0 {
            return Err(Error::Config(
                "triplet_weight must be nonnegative".to_string(),
            ));
        }
        if self.distance_epsilon <= 0.0 {
            return Err(Error::Config(
                "distance_epsilon must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

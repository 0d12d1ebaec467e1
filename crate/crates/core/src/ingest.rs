//! Manifest I/O plus the frame-sampling and face-crop geometry used during
//! preprocessing. Geometry only; no pixels are touched here.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::SampleRecord;

/// Axis-aligned box in pixel coordinates, x0 < x1 and y0 < y1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::Config(format!(
                "degenerate bbox ({x0},{y0},{x1},{y1})"
            )));
        }
        Ok(BBox { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// An ordered collection of records loaded from one JSONL file.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
    pub source_path: String,
}

impl Manifest {
    /// Validates manifest-level invariants: unique sample ids and a single
    /// representation (features xor frame refs) across all records.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        let mut has_features = false;
        let mut has_frames = false;
        for (idx, r) in self.records.iter().enumerate() {
            r.validate()?;
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::Manifest {
                    path: self.source_path.clone(),
                    line: idx + 1,
                    msg: format!("duplicate sample_id '{}'", r.sample_id),
                });
            }
            has_features |= r.features.is_some();
            has_frames |= r.frame.is_some();
            if has_features && has_frames {
                return Err(Error::Manifest {
                    path: self.source_path.clone(),
                    line: idx + 1,
                    msg: "mixed feature and frame representations".to_string(),
                });
            }
        }
        Ok(())
    }

    /// Distinct dataset tags in first-appearance order.
    pub fn dataset_tags(&self) -> Vec<String> {
        let mut tags = Vec::new();
        for r in &self.records {
            if !tags.contains(&r.dataset) {
                tags.push(r.dataset.clone());
            }
        }
        tags
    }

    pub fn is_feature_based(&self) -> bool {
        self.records.iter().all(|r| r.features.is_some())
    }
}

/// Loads a JSONL manifest; fails atomically with the offending line number.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(&path).map_err(|e| Error::io(&path_str, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: path_str.clone(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        record.validate().map_err(|e| Error::Manifest {
            path: path_str.clone(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        records.push(record);
    }
    let manifest = Manifest {
        records,
        source_path: path_str,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Writes records as JSONL, one object per line.
pub fn save_manifest(records: &[SampleRecord], path: impl AsRef<Path>) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let file = File::create(&path).map_err(|e| Error::io(&path_str, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Manifest {
            path: path_str.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(&path_str, e))?;
    }
    w.flush().map_err(|e| Error::io(&path_str, e))?;
    Ok(())
}

/// Frame timestamps t_k = k / rate for k = 0, 1, ... while t_k < duration.
pub fn select_frame_timestamps(video_duration_s: f64, fps_rate: f64) -> Result<Vec<f64>> {
    if video_duration_s < 0.0 {
        return Err(Error::Config("negative video duration".to_string()));
    }
    if fps_rate <= 0.0 {
        return Err(Error::Config("fps rate must be positive".to_string()));
    }
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 / fps_rate;
        if t >= video_duration_s {
            break;
        }
        out.push(t);
        k += 1;
    }
    Ok(out)
}

/// Scales the box width and height by (1 + margin_fraction) about its center,
/// then clips to the image bounds.
pub fn expand_bbox(
    bbox: BBox,
    margin_fraction: f64,
    image_w: f64,
    image_h: f64,
) -> Result<BBox> {
    if margin_fraction < 0.0 {
        return Err(Error::Config("margin_fraction must be >= 0".to_string()));
    }
    let cx = (bbox.x0 + bbox.x1) / 2.0;
    let cy = (bbox.y0 + bbox.y1) / 2.0;
    let half_w = bbox.width() / 2.0 * (1.0 + margin_fraction);
    let half_h = bbox.height() / 2.0 * (1.0 + margin_fraction);
    let x0 = (cx - half_w).max(0.0);
    let y0 = (cy - half_h).max(0.0);
    let x1 = (cx + half_w).min(image_w);
    let y1 = (cy + half_h).min(image_h);
    if !(x0 < x1 && y0 < y1) {
        return Err(Error::Config(
            "bbox degenerate after clipping (fully outside image)".to_string(),
        ));
    }
    Ok(BBox { x0, y0, x1, y1 })
}

/// Affine map from source box coordinates onto the square target crop:
/// target = (source - offset) * scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.offset_x) * self.scale_x, (y - self.offset_y) * self.scale_y)
    }
}

/// Map sending the box corners onto (0,0)-(target_side, target_side).
/// Anisotropic for non-square boxes.
pub fn crop_resize_geometry(bbox: BBox, target_side: f64) -> Result<AffineMap> {
    if target_side <= 0.0 {
        return Err(Error::Config("target_side must be positive".to_string()));
    }
    Ok(AffineMap {
        scale_x: target_side / bbox.width(),
        scale_y: target_side / bbox.height(),
        offset_x: bbox.x0,
        offset_y: bbox.y0,
    })
}

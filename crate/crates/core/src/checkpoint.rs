//! Versioned binary checkpoint container: JSON header (config, label space,
//! epoch, validation loss, tensor shapes) followed by named little-endian f64
//! arrays for parameters and optimizer moments. Save -> load -> save is
//! byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabelSpace;
use crate::network::{AffineLayer, MlpModel};
use crate::trainer::{OptimizerState, TrainConfig};

const MAGIC: &[u8; 4] = b"DFCK";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub format_version: u32,
    pub epoch: usize,
    pub val_loss: f64,
    pub config: TrainConfig,
    pub label_space: LabelSpace,
    pub model: MlpModel,
    pub optimizer: OptimizerState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    epoch: usize,
    val_loss: f64,
    config: TrainConfig,
    label_space: LabelSpace,
    /// (input_dim, output_dim) per encoder layer, head last.
    layer_dims: Vec<(usize, usize)>,
    optimizer_step: u64,
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    fn named_arrays(&self) -> Vec<(String, &[f64])> {
        let names = self.model.tensor_names_and_groups();
        let tensors = self.model.tensors();
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for ((name, _), tensor) in names.iter().zip(&tensors) {
            out.push((name.clone(), tensor.as_slice()));
        }
        for (idx, (name, _)) in names.iter().enumerate() {
            out.push((format!("m.{name}"), self.optimizer.m[idx].as_slice()));
        }
        for (idx, (name, _)) in names.iter().enumerate() {
            out.push((format!("v.{name}"), self.optimizer.v[idx].as_slice()));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path_str = path.as_ref().display().to_string();
        let file = File::create(&path).map_err(|e| Error::io(&path_str, e))?;
        let mut w = BufWriter::new(file);
        let mut layer_dims: Vec<(usize, usize)> = self
            .model
            .encoder
            .iter()
            .map(|l| (l.input_dim, l.output_dim))
            .collect();
        layer_dims.push((self.model.head.input_dim, self.model.head.output_dim));
        let header = Header {
            format_version: self.format_version,
            epoch: self.epoch,
            val_loss: self.val_loss,
            config: self.config.clone(),
            label_space: self.label_space.clone(),
            layer_dims,
            optimizer_step: self.optimizer.t,
        };
        let header_json =
            serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let io_err = |e: std::io::Error| Error::io(&path_str, e);
        w.write_all(MAGIC).map_err(io_err)?;
        w.write_all(&self.format_version.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(io_err)?;
        w.write_all(&header_json).map_err(io_err)?;
        let arrays = self.named_arrays();
        w.write_all(&(arrays.len() as u64).to_le_bytes()).map_err(io_err)?;
        for (name, data) in arrays {
            let name_bytes = name.as_bytes();
            w.write_all(&(name_bytes.len() as u64).to_le_bytes()).map_err(io_err)?;
            w.write_all(name_bytes).map_err(io_err)?;
            w.write_all(&(data.len() as u64).to_le_bytes()).map_err(io_err)?;
            for value in data {
                w.write_all(&value.to_le_bytes()).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path_str = path.as_ref().display().to_string();
        let file = File::open(&path).map_err(|e| Error::io(&path_str, e))?;
        let mut r = BufReader::new(file);
        let io_err = |e: std::io::Error| Error::io(&path_str, e);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!("{path_str}: bad magic")));
        }
        let mut u32_buf = [0u8; 4];
        r.read_exact(&mut u32_buf).map_err(io_err)?;
        let version = u32::from_le_bytes(u32_buf);
        if version != Self::FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{path_str}: unsupported format version {version}"
            )));
        }
        let mut u64_buf = [0u8; 8];
        r.read_exact(&mut u64_buf).map_err(io_err)?;
        let header_len = u64::from_le_bytes(u64_buf) as usize;
        let mut header_json = vec![0u8; header_len];
        r.read_exact(&mut header_json).map_err(io_err)?;
        let header: Header = serde_json::from_slice(&header_json)
            .map_err(|e| Error::Checkpoint(format!("{path_str}: bad header: {e}")))?;

        r.read_exact(&mut u64_buf).map_err(io_err)?;
        let n_arrays = u64::from_le_bytes(u64_buf) as usize;
        let mut arrays: Vec<(String, Vec<f64>)> = Vec::with_capacity(n_arrays);
        for _ in 0..n_arrays {
            r.read_exact(&mut u64_buf).map_err(io_err)?;
            let name_len = u64::from_le_bytes(u64_buf) as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes).map_err(io_err)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::Checkpoint(format!("{path_str}: bad array name: {e}")))?;
            r.read_exact(&mut u64_buf).map_err(io_err)?;
            let len = u64::from_le_bytes(u64_buf) as usize;
            let mut data = Vec::with_capacity(len);
            let mut f64_buf = [0u8; 8];
            for _ in 0..len {
                r.read_exact(&mut f64_buf).map_err(io_err)?;
                data.push(f64::from_le_bytes(f64_buf));
            }
            arrays.push((name, data));
        }

        // rebuild the model skeleton from the recorded dims
        if header.layer_dims.is_empty() {
            return Err(Error::Checkpoint(format!("{path_str}: no layers in header")));
        }
        let (head_dims, encoder_dims) = header.layer_dims.split_last().unwrap();
        let mut model = MlpModel {
            encoder: encoder_dims
                .iter()
                .map(|&(i, o)| AffineLayer::zeros(i, o))
                .collect(),
            head: AffineLayer::zeros(head_dims.0, head_dims.1),
        };
        let take = |arrays: &[(String, Vec<f64>)], name: &str, expected_len: usize| -> Result<Vec<f64>> {
            let (_, data) = arrays
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("{path_str}: missing array {name}")))?;
            if data.len() != expected_len {
                return Err(Error::Checkpoint(format!(
                    "{path_str}: array {name} has length {} (expected {expected_len})",
                    data.len()
                )));
            }
            Ok(data.clone())
        };
        let names = model.tensor_names_and_groups();
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        {
            let mut tensors = model.tensors_mut();
            for (idx, (name, _)) in names.iter().enumerate() {
                *tensors[idx] = take(&arrays, name, shapes[idx])?;
            }
        }
        let mut optimizer = OptimizerState {
            m: Vec::new(),
            v: Vec::new(),
            t: header.optimizer_step,
        };
        for (idx, (name, _)) in names.iter().enumerate() {
            optimizer.m.push(take(&arrays, &format!("m.{name}"), shapes[idx])?);
        }
        for (idx, (name, _)) in names.iter().enumerate() {
            optimizer.v.push(take(&arrays, &format!("v.{name}"), shapes[idx])?);
        }

        Ok(Checkpoint {
            format_version: header.format_version,
            epoch: header.epoch,
            val_loss: header.val_loss,
            config: header.config,
            label_space: header.label_space,
            model,
            optimizer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LabelMode, LossConfig, TripletVariant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_checkpoint() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = MlpModel::new_random(4, &[5], 3, 2, &mut rng);
        let mut optimizer = OptimizerState::zeros_like(&model);
        optimizer.t = 17;
        optimizer.m[0][0] = 0.25;
        optimizer.v[1][0] = 1e-4;
        Checkpoint {
            format_version: Checkpoint::FORMAT_VERSION,
            epoch: 7,
            val_loss: 0.123456789,
            config: TrainConfig {
                loss: LossConfig {
                    triplet_variant: TripletVariant::BatchAll,
                    ..Default::default()
                },
                label_mode: LabelMode::Binary,
                ..Default::default()
            },
            label_space: crate::model::make_label_space(LabelMode::Binary, &[]).unwrap(),
            model,
            optimizer,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        ckpt.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded.model, ckpt.model);
        assert_eq!(loaded.optimizer, ckpt.optimizer);
        assert_eq!(loaded.epoch, ckpt.epoch);
    }

    #[test]
    fn corrupt_magic_rejected() {
        let ckpt = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ckpt");
        ckpt.save(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, bytes).unwrap();
        assert!(Checkpoint::load(&p).is_err());
    }
}

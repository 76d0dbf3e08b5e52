//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//! magic "CSCK", format version u32, config JSON (length-prefixed),
//! tensor count, then per tensor: module path, rank, dims, raw f64 data;
//! an optional trainer-state block; finally the SHA-256 of every
//! preceding byte. Tensor bytes are exact f64 bit patterns, so
//! load(save(x)) reproduces every parameter bit for bit.

use crate::model::{ModelConfig, ModelParams, TensorMut, TensorRef};
use crate::train::{TrainConfig, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"CSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint format version {found}, this build reads {CHECKPOINT_VERSION}")]
    VersionMismatch { found: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Everything a checkpoint carries. `trainer_state` is present only for
/// mid-training checkpoints; its parameter vector is reconstructed from
/// the tensor section on load rather than stored twice.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: Option<TrainConfig>,
    pub params: ModelParams,
    pub trainer_state: Option<TrainState>,
}

#[derive(Serialize, Deserialize)]
struct ConfigSnapshot {
    model: ModelConfig,
    train: Option<TrainConfig>,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let snapshot = ConfigSnapshot {
        model: checkpoint.model_config.clone(),
        train: checkpoint.train_config.clone(),
    };
    let config_json =
        serde_json::to_vec(&snapshot).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    write_bytes(&mut buf, &config_json);

    let tensors = checkpoint.params.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in &tensors {
        write_bytes(&mut buf, name.as_bytes());
        match tensor {
            TensorRef::M(m) => {
                buf.push(2);
                buf.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
                buf.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
                for &x in m.iter() {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorRef::V(v) => {
                buf.push(1);
                buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
                for &x in v.iter() {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }

    match &checkpoint.trainer_state {
        None => buf.push(0),
        Some(state) => {
            buf.push(1);
            write_f64s(&mut buf, &state.adam_m);
            write_f64s(&mut buf, &state.adam_v);
            buf.extend_from_slice(&state.adam_t.to_le_bytes());
            for w in state.gradnorm_weights {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            match state.gradnorm_initial {
                None => buf.push(0),
                Some(init) => {
                    buf.push(1);
                    for w in init {
                        buf.extend_from_slice(&w.to_le_bytes());
                    }
                }
            }
            buf.push(state.gradnorm_frozen as u8);
            buf.extend_from_slice(&state.rng_seed);
            buf.extend_from_slice(&state.rng_stream.to_le_bytes());
            buf.extend_from_slice(&state.rng_word_pos.to_le_bytes());
            buf.extend_from_slice(&state.epoch.to_le_bytes());
            buf.extend_from_slice(&state.cursor.to_le_bytes());
            buf.extend_from_slice(&(state.order.len() as u64).to_le_bytes());
            for &i in &state.order {
                buf.extend_from_slice(&i.to_le_bytes());
            }
        }
    }

    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);

    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 40 {
        return Err(CheckpointError::Corrupt("file too short".into()));
    }
    let (payload, stored_digest) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(payload);
    if digest.as_slice() != stored_digest {
        return Err(CheckpointError::Corrupt("checksum mismatch".into()));
    }

    let mut r = Cursor {
        bytes: payload,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }

    let config_json = r.bytes()?;
    let snapshot: ConfigSnapshot = serde_json::from_slice(config_json)
        .map_err(|e| CheckpointError::Corrupt(format!("config snapshot: {e}")))?;

    // Tensor shapes are dictated by the config; the file must agree.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = ModelParams::init(&snapshot.model, &mut rng);
    let tensor_count = r.u32()? as usize;
    {
        let mut slots = params.tensors_mut();
        if tensor_count != slots.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{tensor_count} tensors, expected {}",
                slots.len()
            )));
        }
        for (expected_name, slot) in slots.iter_mut() {
            let name = std::str::from_utf8(r.bytes()?)
                .map_err(|_| CheckpointError::Corrupt("tensor name not utf-8".into()))?;
            if name != expected_name.as_str() {
                return Err(CheckpointError::Corrupt(format!(
                    "tensor {name:?} where {expected_name:?} expected"
                )));
            }
            let rank = r.take(1)?[0];
            match slot {
                TensorMut::M(m) => {
                    if rank != 2 {
                        return Err(CheckpointError::Corrupt(format!("{name}: rank {rank}")));
                    }
                    let rows = r.u32()? as usize;
                    let cols = r.u32()? as usize;
                    if (rows, cols) != (m.nrows(), m.ncols()) {
                        return Err(CheckpointError::Corrupt(format!(
                            "{name}: shape {rows}x{cols}, expected {}x{}",
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    for x in m.iter_mut() {
                        *x = r.f64()?;
                    }
                }
                TensorMut::V(v) => {
                    if rank != 1 {
                        return Err(CheckpointError::Corrupt(format!("{name}: rank {rank}")));
                    }
                    let len = r.u32()? as usize;
                    if len != v.len() {
                        return Err(CheckpointError::Corrupt(format!(
                            "{name}: length {len}, expected {}",
                            v.len()
                        )));
                    }
                    for x in v.iter_mut() {
                        *x = r.f64()?;
                    }
                }
            }
        }
    }

    let trainer_state = match r.take(1)?[0] {
        0 => None,
        1 => {
            let adam_m = r.f64s()?;
            let adam_v = r.f64s()?;
            let adam_t = r.u64()?;
            let mut gradnorm_weights = [0.0; 3];
            for w in &mut gradnorm_weights {
                *w = r.f64()?;
            }
            let gradnorm_initial = match r.take(1)?[0] {
                0 => None,
                1 => {
                    let mut init = [0.0; 3];
                    for w in &mut init {
                        *w = r.f64()?;
                    }
                    Some(init)
                }
                b => return Err(CheckpointError::Corrupt(format!("initial-loss flag {b}"))),
            };
            let gradnorm_frozen = match r.take(1)?[0] {
                0 => false,
                1 => true,
                b => return Err(CheckpointError::Corrupt(format!("frozen flag {b}"))),
            };
            let mut rng_seed = [0u8; 32];
            rng_seed.copy_from_slice(r.take(32)?);
            let rng_stream = r.u64()?;
            let rng_word_pos = r.u128()?;
            let epoch = r.u64()?;
            let cursor = r.u64()?;
            let order_len = r.u64()? as usize;
            let mut order = Vec::with_capacity(order_len);
            for _ in 0..order_len {
                order.push(r.u32()?);
            }
            Some(TrainState {
                params: params.flat(),
                adam_m,
                adam_v,
                adam_t,
                gradnorm_weights,
                gradnorm_initial,
                gradnorm_frozen,
                rng_seed,
                rng_stream,
                rng_word_pos,
                epoch,
                cursor,
                order,
            })
        }
        b => return Err(CheckpointError::Corrupt(format!("trainer flag {b}"))),
    };

    if r.pos != r.bytes.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes",
            r.bytes.len() - r.pos
        )));
    }

    Ok(Checkpoint {
        model_config: snapshot.model,
        train_config: snapshot.train,
        params,
        trainer_state,
    })
}

fn write_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(bytes);
}

fn write_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for &x in values {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt("unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128, CheckpointError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8], CheckpointError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let len = self.u64()? as usize;
        if self.pos + len.saturating_mul(8) > self.bytes.len() {
            return Err(CheckpointError::Corrupt("unexpected end of file".into()));
        }
        (0..len).map(|_| self.f64()).collect()
    }
}

//! Binary checkpoint container.
//!
//! Layout (little-endian): 4-byte magic `CHBT`, `u32` format version,
//! `u32` header length followed by a JSON header, `u32` array count, then
//! per array a `u16` name length, the UTF-8 name, a `u8` rank, `u64` dims
//! and the `f64` payload. Adam moments are stored as `adam.m/<tensor>` and
//! `adam.v/<tensor>` so training resumes exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::nn::{Adam, Tensor};
use super::{PolicyConfig, PolicyError, PolicyParams};

const MAGIC: &[u8; 4] = b"CHBT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Completed optimizer steps.
    pub step: u64,
    pub seed: u64,
    pub batch_size: usize,
    /// Instruction vocabulary; position is the instruction id.
    #[serde(default)]
    pub instructions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: PolicyConfig,
    meta: CheckpointMeta,
    adam: Option<AdamHeader>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamHeader {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub adam: Option<Adam>,
    pub meta: CheckpointMeta,
}

fn corrupt(msg: impl Into<String>) -> PolicyError {
    PolicyError::Checkpoint(msg.into())
}

fn write_array<W: Write>(w: &mut W, name: &str, shape: &[usize], data: &[f64]) -> std::io::Result<()> {
    w.write_u16::<LittleEndian>(name.len() as u16)?;
    w.write_all(name.as_bytes())?;
    w.write_u8(shape.len() as u8)?;
    for d in shape {
        w.write_u64::<LittleEndian>(*d as u64)?;
    }
    for v in data {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), PolicyError> {
    let header = Header {
        config: ckpt.params.config.clone(),
        meta: ckpt.meta.clone(),
        adam: ckpt.adam.as_ref().map(|a| AdamHeader { beta1: a.beta1, beta2: a.beta2, eps: a.eps, step: a.step }),
    };
    let header = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u32::<LittleEndian>(header.len() as u32)?;
        w.write_all(&header)?;
        let tensors = &ckpt.params.tensors;
        let n_arrays = tensors.len() * if ckpt.adam.is_some() { 3 } else { 1 };
        w.write_u32::<LittleEndian>(n_arrays as u32)?;
        for t in tensors {
            write_array(&mut w, &t.name, &t.shape, &t.data)?;
        }
        if let Some(adam) = &ckpt.adam {
            for (t, m) in tensors.iter().zip(&adam.m) {
                write_array(&mut w, &format!("adam.m/{}", t.name), &t.shape, m)?;
            }
            for (t, v) in tensors.iter().zip(&adam.v) {
                write_array(&mut w, &format!("adam.v/{}", t.name), &t.shape, v)?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_array<R: Read>(r: &mut R) -> Result<Tensor, PolicyError> {
    let name_len = r.read_u16::<LittleEndian>()? as usize;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| corrupt("array name is not UTF-8"))?;
    let rank = r.read_u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.read_u64::<LittleEndian>()? as usize);
    }
    let n: usize = shape.iter().product();
    if n > 1 << 28 {
        return Err(corrupt(format!("array {name} is implausibly large")));
    }
    let mut data = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    Ok(Tensor { name, shape, data })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, PolicyError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("file too short"))?;
    if &magic != MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let header_len = r.read_u32::<LittleEndian>()? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| corrupt(format!("bad header: {e}")))?;
    header.config.validate()?;
    let n_arrays = r.read_u32::<LittleEndian>()? as usize;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        arrays.push(read_array(&mut r)?);
    }

    // Reference layout from the config; every tensor must be present with the same shape.
    let mut params = PolicyParams::init(header.config.clone(), 0)?;
    let take = |name: &str, shape: &[usize], arrays: &mut Vec<Tensor>| -> Result<Vec<f64>, PolicyError> {
        let pos = arrays.iter().position(|a| a.name == name).ok_or_else(|| corrupt(format!("missing array {name}")))?;
        let a = arrays.swap_remove(pos);
        if a.shape != shape {
            return Err(corrupt(format!("array {name} has shape {:?}, expected {:?}", a.shape, shape)));
        }
        Ok(a.data)
    };
    for t in params.tensors.iter_mut() {
        t.data = take(&t.name.clone(), &t.shape.clone(), &mut arrays)?;
    }
    let adam = match header.adam {
        None => None,
        Some(h) => {
            let mut adam = Adam::new(params.tensors.iter().map(Tensor::len));
            adam.beta1 = h.beta1;
            adam.beta2 = h.beta2;
            adam.eps = h.eps;
            adam.step = h.step;
            for (k, t) in params.tensors.iter().enumerate() {
                adam.m[k] = take(&format!("adam.m/{}", t.name), &t.shape, &mut arrays)?;
                adam.v[k] = take(&format!("adam.v/{}", t.name), &t.shape, &mut arrays)?;
            }
            Some(adam)
        }
    };
    if let Some(extra) = arrays.first() {
        return Err(corrupt(format!("unexpected array {}", extra.name)));
    }
    Ok(Checkpoint { params, adam, meta: header.meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PolicyConfig {
        PolicyConfig {
            horizon: 3,
            action_dim: 2,
            state_dim: 2,
            feature_dim: 3,
            obs_len: 2,
            n_instructions: 2,
            embed_dim: 4,
            hidden_dim: 5,
            hidden_layers: 1,
            time_features: 4,
            attn_dim: 4,
            progress_hidden: 3,
            rtc_max_prefix: 1,
            ..PolicyConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        let params = PolicyParams::init(tiny(), 5).unwrap();
        let mut adam = Adam::new(params.tensors.iter().map(Tensor::len));
        adam.step = 7;
        adam.m[0][0] = 0.25;
        adam.v[3][1] = 1e-9;
        let meta = CheckpointMeta { step: 7, seed: 11, batch_size: 4, instructions: vec!["a".into(), "b".into()] };
        save_checkpoint(&path, &Checkpoint { params: params.clone(), adam: Some(adam.clone()), meta: meta.clone() }).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.params, params);
        assert_eq!(back.adam.unwrap(), adam);
        assert_eq!(back.meta, meta);
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(PolicyError::Checkpoint(_))));
    }
}

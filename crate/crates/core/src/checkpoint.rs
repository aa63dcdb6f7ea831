//! Binary checkpoint container. See `docs/checkpoint-format.md`.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"CRYPTCKP"
//! version u32
//! hlen    u64      length of the JSON header in bytes
//! header  hlen bytes of UTF-8 JSON
//! data    raw little-endian tensor payloads, at the offsets the header lists
//! ```

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::ModelConfig;
use crate::error::{Error, Result};
use crate::heads::GumbelSinkhorn;
use crate::model::{HeadKind, Model};
use crate::params::Parameters;
use crate::tensor::Real;
use crate::training::{AdamW, AdamWConfig};

pub const MAGIC: &[u8; 8] = b"CRYPTCKP";
pub const VERSION: u32 = 1;
pub const ORIENTATION: &str = "rows are ciphertext letters, columns are plaintext letters";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub config: AdamWConfig,
    pub t: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// Training step the next batch is drawn for.
    pub next_step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header {
    pub dtype: String,
    pub model: ModelConfig,
    pub head: HeadKind,
    pub tau: f64,
    pub sinkhorn_iters: usize,
    pub matrix_orientation: String,
    pub step: u64,
    pub rng: RngState,
    pub optimizer: Option<OptimizerHeader>,
    #[serde(default)]
    pub train_config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

/// A loaded checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint<F> {
    pub model: Model<F>,
    pub step: u64,
    pub seed: u64,
    pub optimizer: Option<AdamW<F>>,
    pub train_config: serde_json::Value,
}

fn dtype_width(dtype: &str) -> Result<usize> {
    match dtype {
        "f32" => Ok(4),
        "f64" => Ok(8),
        other => Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
    }
}

fn push_values<F: Real>(buf: &mut Vec<u8>, values: &[F]) {
    for &v in values {
        match F::DTYPE {
            "f32" => buf.extend_from_slice(&(v.f64() as f32).to_le_bytes()),
            _ => buf.extend_from_slice(&v.f64().to_le_bytes()),
        }
    }
}

/// Write `model` (and optionally optimizer state) to `path`.
pub fn save_checkpoint<F: Real>(
    path: &Path,
    model: &Model<F>,
    step: u64,
    seed: u64,
    optimizer: Option<&AdamW<F>>,
    train_config: serde_json::Value,
) -> Result<()> {
    let params = model.params();
    let mut data = Vec::new();
    let mut tensors = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, values: &[F], data: &mut Vec<u8>| {
        tensors.push(TensorEntry { name, shape, offset: data.len() as u64 });
        push_values(data, values);
    };
    for p in &params {
        add(p.name.clone(), p.shape.clone(), p.data, &mut data);
    }
    if let Some(opt) = optimizer {
        for (p, (m, v)) in params.iter().zip(opt.m.iter().zip(&opt.v)) {
            add(format!("optim.m.{}", p.name), p.shape.clone(), m, &mut data);
            add(format!("optim.v.{}", p.name), p.shape.clone(), v, &mut data);
        }
    }
    let header = Header {
        dtype: F::DTYPE.to_owned(),
        model: model.config().clone(),
        head: model.head_kind(),
        tau: model.relax.tau,
        sinkhorn_iters: model.relax.iters,
        matrix_orientation: ORIENTATION.to_owned(),
        step,
        rng: RngState { seed, next_step: step },
        optimizer: optimizer.map(|o| OptimizerHeader { config: o.config, t: o.t }),
        train_config,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    // Write to a sibling file first so a crash never leaves a torn checkpoint.
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&data)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read the header only.
pub fn read_header(path: &Path) -> Result<Header> {
    let mut f = fs::File::open(path)?;
    let mut prefix = [0u8; 20];
    f.read_exact(&mut prefix).map_err(|_| Error::Checkpoint("file too short".into()))?;
    let hlen = parse_prefix(&prefix)?;
    let mut json = vec![0u8; hlen];
    f.read_exact(&mut json).map_err(|_| Error::Checkpoint("truncated header".into()))?;
    Ok(serde_json::from_slice(&json)?)
}

fn parse_prefix(prefix: &[u8]) -> Result<usize> {
    if &prefix[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(prefix[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    Ok(u64::from_le_bytes(prefix[12..20].try_into().expect("8 bytes")) as usize)
}

/// Load a checkpoint, converting stored values to `F` if needed.
pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let hlen = parse_prefix(&bytes[..20])?;
    let json = bytes.get(20..20 + hlen).ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(json)?;
    let data = &bytes[20 + hlen..];
    let width = dtype_width(&header.dtype)?;

    let read = |entry: &TensorEntry| -> Result<Vec<F>> {
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let raw = data
            .get(start..start + n * width)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {} extends past the end of the file", entry.name)))?;
        Ok(raw
            .chunks_exact(width)
            .map(|c| match width {
                4 => F::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64),
                _ => F::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))),
            })
            .collect())
    };
    let find = |name: &str| header.tensors.iter().find(|t| t.name == name);

    let mut model = Model::<F>::new(&header.model, header.head, 0)?;
    model.relax = GumbelSinkhorn::new(header.tau, header.sinkhorn_iters)?;
    let names: Vec<(String, Vec<usize>)> = model.params().into_iter().map(|p| (p.name, p.shape)).collect();
    for (p, (name, shape)) in model.params_mut().into_iter().zip(&names) {
        let entry = find(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if &entry.shape != shape {
            return Err(Error::Checkpoint(format!("tensor {name} has shape {:?}, expected {shape:?}", entry.shape)));
        }
        p.data.copy_from_slice(&read(entry)?);
    }
    let optimizer = match &header.optimizer {
        None => None,
        Some(o) => {
            let mut m = Vec::with_capacity(names.len());
            let mut v = Vec::with_capacity(names.len());
            for (name, _) in &names {
                for (prefix, out) in [("optim.m.", &mut m), ("optim.v.", &mut v)] {
                    let key = format!("{prefix}{name}");
                    let entry = find(&key).ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
                    out.push(read(entry)?);
                }
            }
            Some(AdamW { config: o.config, t: o.t, m, v })
        }
    };
    Ok(Checkpoint { model, step: header.step, seed: header.rng.seed, optimizer, train_config: header.train_config })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        let mut c = ModelConfig::new(8, 1, 2, 16);
        c.max_len = 16;
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for head in [HeadKind::Standard, HeadKind::Bijective] {
            let model = Model::<f32>::new(&tiny(), head, 3).unwrap();
            let mut opt = AdamW::new(AdamWConfig::default(), &model.params());
            opt.t = 7;
            opt.m[0][1] = 0.25;
            let path = dir.path().join(format!("{head}.ckpt"));
            save_checkpoint(&path, &model, 42, 9, Some(&opt), serde_json::json!({"steps": 100})).unwrap();
            let ck = load_checkpoint::<f32>(&path).unwrap();
            assert_eq!(ck.model, model);
            assert_eq!(ck.optimizer.unwrap(), opt);
            assert_eq!((ck.step, ck.seed), (42, 9));
            assert_eq!(ck.train_config["steps"], 100);
            assert_eq!(read_header(&path).unwrap().head, head);
        }
    }

    #[test]
    fn widening_to_f64_preserves_values() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::<f32>::new(&tiny(), HeadKind::Standard, 4).unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &model, 0, 0, None, serde_json::Value::Null).unwrap();
        let wide = load_checkpoint::<f64>(&path).unwrap().model;
        for (a, b) in model.params().iter().zip(wide.params()) {
            assert!(a.data.iter().zip(b.data).all(|(&x, &y)| x as f64 == y));
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"NOTACKPTxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Checkpoint(_))));
        let model = Model::<f32>::new(&tiny(), HeadKind::Standard, 4).unwrap();
        save_checkpoint(&path, &model, 0, 0, None, serde_json::Value::Null).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Checkpoint(_))));
    }
}

//! Binary parameter checkpoints.
//!
//! Layout (little endian):
//!
//! ```text
//! magic     8 bytes  "LSD2CKPT"
//! version   u32
//! kind      u8       0 = lsd2, 1 = fusion
//! record    u32 length + UTF-8 JSON (model config, optional training state)
//! count     u32
//! tensors   count x (u32 name length, name, u32 rank, rank x u32 dims, f32 values)
//! ```
//!
//! Training checkpoints also carry the Adam moments as tensors named
//! `adam.m/<param>` and `adam.v/<param>`, which makes resumption exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::layers::Param;
use crate::model::{Model, ModelConfig, ModelKind};
use crate::tensor::Tensor;
use crate::train::{TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"LSD2CKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub config: TrainConfig,
    pub epochs_done: usize,
    pub losses: Vec<f64>,
    pub adam_step: u64,
    pub adam_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Record {
    model: ModelConfig,
    train: Option<TrainRecord>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    /// Present in checkpoints written during training.
    pub train: Option<(TrainConfig, TrainState<f32>)>,
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    /// Fails unless the checkpoint holds a model of `kind`.
    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::ModelKind {
                expected: kind.name().into(),
                found: self.kind().name().into(),
            });
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>, bias: bool) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    let dims: Vec<usize> = if bias { vec![t.shape()[0]] } else { t.shape().to_vec() };
    put_u32(out, dims.len());
    for d in dims {
        put_u32(out, d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(model: &Model<f32>, train: Option<(&TrainConfig, &TrainState<f32>)>) -> Vec<u8> {
    let record = Record {
        model: model.config(),
        train: train.map(|(c, s)| TrainRecord {
            config: c.clone(),
            epochs_done: s.epochs_done,
            losses: s.losses.clone(),
            adam_step: s.adam.step,
            adam_lr: s.adam.lr,
            beta1: s.adam.beta1,
            beta2: s.adam.beta2,
            epsilon: s.adam.epsilon,
        }),
    };
    let json = serde_json::to_vec(&record).expect("record serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(model.kind().tag());
    put_u32(&mut out, json.len());
    out.extend_from_slice(&json);
    let params = model.params();
    let n = params.len() * if train.is_some() { 3 } else { 1 };
    put_u32(&mut out, n);
    let is_bias = |p: &Param<f32>| p.name.ends_with(".bias");
    for p in params {
        put_tensor(&mut out, &p.name, &p.value, is_bias(p));
    }
    if let Some((_, s)) = train {
        for (prefix, bufs) in [("adam.m/", &s.adam.m), ("adam.v/", &s.adam.v)] {
            for (p, t) in params.iter().zip(bufs) {
                put_tensor(&mut out, &format!("{prefix}{}", p.name), t, is_bias(p));
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Checkpoint {
            path: self.path.to_path_buf(),
            msg: msg.into(),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let len = self.u32()?;
        let name = match std::str::from_utf8(self.take(len)?) {
            Ok(s) => s.to_string(),
            Err(_) => return self.err("tensor name is not UTF-8"),
        };
        let rank = self.u32()?;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32()?);
        }
        let shape = match dims[..] {
            [n] => [n, 1, 1, 1],
            [a, b, c, d] => [a, b, c, d],
            _ => return self.err(format!("tensor {name} has unsupported rank {rank}")),
        };
        let count: usize = shape.iter().product();
        let raw = self.take(count.saturating_mul(4))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, Tensor::from_vec(shape, data)?))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return r.err("not a checkpoint file");
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return r.err(format!("unsupported checkpoint version {version}"));
    }
    let tag = r.take(1)?[0];
    let Some(kind) = ModelKind::from_tag(tag) else {
        return r.err(format!("unknown model kind tag {tag}"));
    };
    let len = r.u32()?;
    let record: Record = match serde_json::from_slice(r.take(len)?) {
        Ok(rec) => rec,
        Err(e) => return r.err(format!("bad config record: {e}")),
    };
    if record.model.kind() != kind {
        return r.err("model kind tag disagrees with the config record");
    }
    let n = r.u32()?;
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        tensors.push(r.tensor()?);
    }
    if r.pos != bytes.len() {
        return r.err("trailing bytes after the last tensor");
    }
    let n_params = 2 * match record.model {
        ModelConfig::Lsd2(c) => c.layers().len(),
        ModelConfig::Fusion(c) => c.layers().len(),
    };
    if tensors.len() < n_params {
        return r.err(format!("expected {n_params} parameter tensors, found {}", tensors.len()));
    }
    let mut rest = tensors.split_off(n_params);
    let params: Vec<Param<f32>> = tensors
        .into_iter()
        .map(|(name, value)| Param { name, value })
        .collect();
    let model = Model::from_params(record.model, params).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let train = match record.train {
        None if rest.is_empty() => None,
        None => return r.err("unexpected optimizer tensors"),
        Some(t) => {
            if rest.len() != 2 * n_params {
                return r.err("optimizer moments do not match the parameters");
            }
            let v_part = rest.split_off(n_params);
            let moments = |part: Vec<(String, Tensor<f32>)>, prefix: &str| -> Result<Vec<Tensor<f32>>> {
                let mut out = Vec::with_capacity(part.len());
                for ((name, t), p) in part.into_iter().zip(model.params()) {
                    if name != format!("{prefix}{}", p.name) || t.shape() != p.value.shape() {
                        return r.err(format!("optimizer tensor {name} does not match {}", p.name));
                    }
                    out.push(t);
                }
                Ok(out)
            };
            let m = moments(rest, "adam.m/")?;
            let v = moments(v_part, "adam.v/")?;
            let adam = AdamState {
                lr: t.adam_lr,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
                step: t.adam_step,
                m,
                v,
            };
            let state = TrainState {
                model: model.clone(),
                adam,
                epochs_done: t.epochs_done,
                losses: t.losses,
            };
            Some((t.config, state))
        }
    };
    Ok(Checkpoint { model, train })
}

pub fn save(path: &Path, model: &Model<f32>, train: Option<(&TrainConfig, &TrainState<f32>)>) -> Result<()> {
    lsd2_core::io::write_atomic(path, &encode(model, train))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionNetConfig;
    use crate::unet::UNetConfig;

    #[test]
    fn model_round_trip() {
        let cfg = ModelConfig::Lsd2(UNetConfig {
            depth: 2,
            base_features: 4,
            ..UNetConfig::default()
        });
        let m = Model::<f32>::new(cfg, 5).unwrap();
        let bytes = encode(&m, None);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes[12], 0);
        let back = decode(&bytes, Path::new("x")).unwrap();
        assert_eq!(back.model, m);
        assert!(back.train.is_none());
        assert!(back.expect_kind(ModelKind::Fusion).is_err());
    }

    #[test]
    fn train_state_round_trip() {
        let m = Model::<f32>::new(ModelConfig::Fusion(FusionNetConfig::default()), 1).unwrap();
        let cfg = TrainConfig::fusion();
        let mut st = TrainState::new(m.clone(), &cfg);
        st.adam.step = 7;
        st.adam.m[3].data_mut()[0] = 0.25;
        st.adam.v[13].data_mut()[0] = 1.5;
        st.losses = vec![0.1, 0.0123456789012345];
        st.epochs_done = 2;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        save(&p, &m, Some((&cfg, &st))).unwrap();
        let back = load(&p).unwrap();
        let (c2, s2) = back.train.unwrap();
        assert_eq!(c2, cfg);
        assert_eq!(s2, st);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = Model::<f32>::new(ModelConfig::Fusion(FusionNetConfig::default()), 1).unwrap();
        let bytes = encode(&m, None);
        let p = Path::new("c");
        assert!(decode(&bytes[..bytes.len() - 3], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, p).is_err());
        let mut bad = bytes.clone();
        bad[12] = 0;
        assert!(decode(&bad, p).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long, p).is_err());
    }
}

//! Versioned binary checkpoint container.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! 8 bytes   magic "AUFCKPT1"
//! u32       format version (1)
//! u32 n,    n bytes   model config, JSON
//! u64       optimizer step count
//! u64       epoch the parameters were taken from
//! 5 × f64   AdamW lr, beta1, beta2, eps, weight_decay
//! u8        1 if optimizer moments follow, else 0
//! u32       tensor count T
//! T tensor records for the parameters, then (if flagged) T for the first
//! moment and T for the second moment, each record being:
//!   u32 name length, name bytes (UTF-8), u32 rank, rank × u64 dims,
//!   prod(dims) × f64 values
//! ```

use std::io::{Cursor, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{init_model, ModelConfig, ModelParams};
use crate::nn::{AdamWConfig, OptimizerState, Params};

pub const MAGIC: &[u8; 8] = b"AUFCKPT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState<ModelParams>>,
    pub epoch: u64,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams) -> Self {
        Checkpoint {
            config,
            params,
            optimizer: None,
            epoch: 0,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let cfg = serde_json::to_vec(&self.config)?;
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        let (step, hyper) = match &self.optimizer {
            Some(o) => (o.step, o.config),
            None => (0, AdamWConfig::default()),
        };
        out.extend_from_slice(&step.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        for v in [hyper.lr, hyper.beta1, hyper.beta2, hyper.eps, hyper.weight_decay] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(u8::from(self.optimizer.is_some()));
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        write_group(&mut out, &self.params);
        if let Some(o) = &self.optimizer {
            write_group(&mut out, &o.m);
            write_group(&mut out, &o.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint {
            path: path.into(),
            message: m,
        };
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, path)?;
        if &magic != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = read_u32(&mut r, path)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let cfg_len = read_u32(&mut r, path)? as usize;
        let mut cfg = vec![0u8; cfg_len];
        read_exact(&mut r, &mut cfg, path)?;
        let config: ModelConfig = serde_json::from_slice(&cfg).map_err(|e| bad(format!("config: {e}")))?;
        let step = read_u64(&mut r, path)?;
        let epoch = read_u64(&mut r, path)?;
        let mut hyper = [0.0; 5];
        for h in &mut hyper {
            *h = read_f64(&mut r, path)?;
        }
        let mut flag = [0u8; 1];
        read_exact(&mut r, &mut flag, path)?;
        let count = read_u32(&mut r, path)? as usize;

        let template = init_model(&config).map_err(|e| bad(format!("config: {e}")))?;
        if count != template.tensors().len() {
            return Err(bad(format!(
                "{count} tensors stored, config implies {}",
                template.tensors().len()
            )));
        }
        let params = read_group(&mut r, &template, path)?;
        let optimizer = if flag[0] == 1 {
            let m = read_group(&mut r, &template, path)?;
            let v = read_group(&mut r, &template, path)?;
            Some(OptimizerState {
                config: AdamWConfig {
                    lr: hyper[0],
                    beta1: hyper[1],
                    beta2: hyper[2],
                    eps: hyper[3],
                    weight_decay: hyper[4],
                },
                step,
                m,
                v,
            })
        } else {
            None
        };
        if (r.position() as usize) != bytes.len() {
            return Err(bad("trailing bytes".into()));
        }
        Ok(Checkpoint {
            config,
            params,
            optimizer,
            epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn write_group(out: &mut Vec<u8>, p: &ModelParams) {
    for t in p.tensors() {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for d in &t.shape {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_group(r: &mut Cursor<&[u8]>, template: &ModelParams, path: &Path) -> Result<ModelParams> {
    let bad = |m: String| Error::Checkpoint {
        path: path.into(),
        message: m,
    };
    let mut flat = Vec::with_capacity(template.num_params());
    for t in template.tensors() {
        let name_len = read_u32(r, path)? as usize;
        if name_len > 4096 {
            return Err(bad("tensor name too long".into()));
        }
        let mut name = vec![0u8; name_len];
        read_exact(r, &mut name, path)?;
        if name != t.name.as_bytes() {
            return Err(bad(format!(
                "expected tensor {}, found {}",
                t.name,
                String::from_utf8_lossy(&name)
            )));
        }
        let rank = read_u32(r, path)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(r, path).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != t.shape {
            return Err(bad(format!("tensor {} has shape {shape:?}, expected {:?}", t.name, t.shape)));
        }
        for _ in 0..t.data.len() {
            flat.push(read_f64(r, path)?);
        }
    }
    let mut p = template.clone();
    p.assign_flat(&flat);
    Ok(p)
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Checkpoint {
        path: path.into(),
        message: "truncated".into(),
    })
}

fn read_u32(r: &mut Cursor<&[u8]>, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut Cursor<&[u8]>, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut Cursor<&[u8]>, path: &Path) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::au::NUM_AUS;
    use crate::nn::{Activation, OptimizerState};

    fn tiny() -> ModelConfig {
        ModelConfig {
            visual_dim: 3,
            ghfeat_dim: 2,
            audio_dim: 2,
            text_dim: 2,
            proj_dim: 2,
            gru_hidden: 2,
            mlp_hidden: 4,
            n_aus: NUM_AUS,
            activation: Activation::Relu,
            seed: 9,
        }
    }

    #[test]
    fn round_trip_with_and_without_optimizer() {
        let cfg = tiny();
        let params = init_model(&cfg).unwrap();
        let mut ck = Checkpoint::new(cfg, params.clone());
        ck.epoch = 4;
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap(), Path::new("x")).unwrap();
        assert_eq!(back, ck);

        let mut opt = OptimizerState::new(AdamWConfig::default(), &params);
        opt.step = 17;
        opt.m.fill(0.25);
        opt.v.fill(1e-3);
        ck.optimizer = Some(opt);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap(), Path::new("x")).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let ck = Checkpoint::new(tiny(), init_model(&tiny()).unwrap());
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, Path::new("x")).is_err());
        let mut magic = bytes;
        magic[0] = b'Z';
        assert!(Checkpoint::from_bytes(&magic, Path::new("x")).is_err());
    }
}

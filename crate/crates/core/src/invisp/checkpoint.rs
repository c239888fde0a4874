//! Checkpoint container.
//!
//! `"IISP"`, version byte, little-endian u32 header length, a UTF-8 header
//! of `key=value` lines (`q, K, h, d, alpha, lambda, seed, step`), then one
//! record per tensor: little-endian u16 name length, the name, and an
//! `FTEN` blob.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::conv::KERNEL;
use super::coupling::CouplingBlock;
use super::mix::MixMatrix;
use super::model::{InvIspModel, ModelConfig, Provenance};
use super::subnet::SubNet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"IISP";
const VERSION: u8 = 1;

pub fn write_checkpoint(model: &InvIspModel) -> Vec<u8> {
    let cfg = model.config();
    let p = &model.provenance;
    let header = format!(
        "q={}\nK={}\nh={}\nd={}\nalpha={}\nlambda={}\nseed={}\nstep={}\n",
        cfg.squeeze,
        cfg.blocks,
        cfg.hidden,
        cfg.split(),
        cfg.alpha,
        p.lambda,
        p.seed,
        p.step
    );
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());

    let mut record = |name: String, tensor: Tensor<f64>| {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&tensor.to_ften());
    };
    let d = cfg.channels();
    for (k, (mix, coupling)) in model.mixes().iter().zip(model.couplings()).enumerate() {
        record(format!("block{k}.W"), Tensor::new(vec![d, d], mix.weight().to_vec()).unwrap());
        for (net_name, net) in coupling.subnets() {
            let (i, hd, o) = (net.in_channels(), net.hidden(), net.out_channels());
            let shapes = [
                vec![hd, i, KERNEL, KERNEL],
                vec![hd],
                vec![o, hd, KERNEL, KERNEL],
                vec![o],
            ];
            for ((p_name, values), dims) in net.params().into_iter().zip(shapes) {
                record(
                    format!("block{k}.{net_name}.{p_name}"),
                    Tensor::new(dims, values.to_vec()).unwrap(),
                );
            }
        }
    }
    out
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &InvIspModel) -> Result<()> {
    fs::write(path, write_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<InvIspModel> {
    read_checkpoint(&fs::read(path)?)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<InvIspModel> {
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(Error::parse(0, "not an IISP checkpoint"));
    }
    if bytes[4] != VERSION {
        return Err(Error::parse(4, format!("unsupported checkpoint version {}", bytes[4])));
    }
    let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let header_end = 9 + header_len;
    if bytes.len() < header_end {
        return Err(Error::parse(bytes.len(), "truncated checkpoint header"));
    }
    let header = std::str::from_utf8(&bytes[9..header_end])
        .map_err(|e| Error::parse(9 + e.valid_up_to(), "header is not UTF-8"))?;
    let mut keys = BTreeMap::new();
    for line in header.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(9, format!("bad header line {line:?}")))?;
        keys.insert(k, v);
    }
    fn get<T: std::str::FromStr>(keys: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
        keys.get(key)
            .ok_or_else(|| Error::parse(9, format!("missing header key {key}")))?
            .parse()
            .map_err(|_| Error::parse(9, format!("bad value for header key {key}")))
    }
    let config = ModelConfig {
        squeeze: get(&keys, "q")?,
        blocks: get(&keys, "K")?,
        hidden: get(&keys, "h")?,
        split: Some(get(&keys, "d")?),
        alpha: get(&keys, "alpha")?,
    };
    let provenance = Provenance {
        seed: get(&keys, "seed")?,
        step: get(&keys, "step")?,
        lambda: get(&keys, "lambda")?,
    };

    let mut tensors = BTreeMap::new();
    let mut pos = header_end;
    while pos < bytes.len() {
        if bytes.len() < pos + 2 {
            return Err(Error::parse(pos, "truncated record name length"));
        }
        let n = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]) as usize;
        pos += 2;
        if bytes.len() < pos + n {
            return Err(Error::parse(pos, "truncated record name"));
        }
        let name = String::from_utf8(bytes[pos..pos + n].to_vec())
            .map_err(|_| Error::parse(pos, "record name is not UTF-8"))?;
        pos += n;
        let (t, used) = Tensor::<f64>::from_ften(&bytes[pos..]).map_err(|e| match e {
            Error::Parse { offset, message } => Error::parse(pos + offset, message),
            other => other,
        })?;
        pos += used;
        tensors.insert(name, t);
    }

    let mut take = |name: String, dims: &[usize]| -> Result<Vec<f64>> {
        let t = tensors
            .remove(&name)
            .ok_or_else(|| Error::parse(header_end, format!("missing tensor {name}")))?;
        if t.dims() != dims {
            return Err(Error::Dimension(format!("tensor {name} has dims {:?}, expected {dims:?}", t.dims())));
        }
        Ok(t.into_data())
    };
    let (d, split, hd) = (config.channels(), config.split(), config.hidden);
    let mut mixes = Vec::new();
    let mut couplings = Vec::new();
    for k in 0..config.blocks {
        mixes.push(MixMatrix::new(take(format!("block{k}.W"), &[d, d])?, d)?);
        let mut net = |name: &str, i: usize, o: usize| -> Result<SubNet> {
            Ok(SubNet {
                in_ch: i,
                hidden: hd,
                out_ch: o,
                w1: take(format!("block{k}.{name}.w1"), &[hd, i, KERNEL, KERNEL])?,
                b1: take(format!("block{k}.{name}.b1"), &[hd])?,
                w2: take(format!("block{k}.{name}.w2"), &[o, hd, KERNEL, KERNEL])?,
                b2: take(format!("block{k}.{name}.b2"), &[o])?,
            })
        };
        let r = net("r", d - split, split)?;
        let s = net("s", split, d - split)?;
        let t = net("t", split, d - split)?;
        couplings.push(CouplingBlock::from_parts(config.alpha, r, s, t)?);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::parse(header_end, format!("unexpected tensor {extra}")));
    }
    InvIspModel::from_parts(config, mixes, couplings, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> InvIspModel {
        let cfg = ModelConfig { blocks: 2, hidden: 3, alpha: 1.75, ..ModelConfig::default() };
        let mut m = InvIspModel::random(cfg, 11, 0.3).unwrap();
        m.provenance.step = 42;
        m.provenance.lambda = 0.5;
        m
    }

    #[test]
    fn round_trip() {
        let m = model();
        let bytes = write_checkpoint(&m);
        assert_eq!(&bytes[..5], b"IISP\x01");
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back.flatten_params(), m.flatten_params());
        assert_eq!(back.provenance, m.provenance);
        assert_eq!(back.config().split(), 6);
        assert_eq!(write_checkpoint(&back), bytes);
    }

    #[test]
    fn header_contents() {
        let bytes = write_checkpoint(&model());
        let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[9..9 + len]).unwrap();
        assert_eq!(header, "q=2\nK=2\nh=3\nd=6\nalpha=1.75\nlambda=0.5\nseed=11\nstep=42\n");
        let name_len = u16::from_le_bytes([bytes[9 + len], bytes[10 + len]]) as usize;
        assert_eq!(&bytes[11 + len..11 + len + name_len], b"block0.W");
        assert_eq!(&bytes[11 + len + name_len..][..4], b"FTEN");
    }

    #[test]
    fn corrupt_checkpoints() {
        let bytes = write_checkpoint(&model());
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(read_checkpoint(b"IISQ\x01\0\0\0\0").is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(read_checkpoint(&bad).is_err());
    }
}

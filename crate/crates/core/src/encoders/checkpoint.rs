// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes   "SNCPDCK\0"
//! version    u32       1
//! config     u32 length, then UTF-8 `key=value` lines
//! blobs      u32 count, then per blob:
//!              u32 name length, UTF-8 name,
//!              u32 rank, rank x u64 extents,
//!              product(extents) x f64 values
//! ```
//!
//! Blobs hold every parameter under its [`EncoderModel::param_names`] name
//! plus the power-iteration state of each block as `block{l}.sn_u`,
//! `block{l}.sn_v` and `block{l}.sn_sigma`.

use std::collections::HashMap;
use std::path::Path;

use super::{Activation, EncoderConfig, EncoderModel};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::specnorm::{SNConfig, SpectralNormState};

const MAGIC: &[u8; 8] = b"SNCPDCK\0";
const VERSION: u32 = 1;

fn config_text(c: &EncoderConfig) -> String {
    let sn = c.sn.unwrap_or_default();
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push('=');
        s.push_str(&v);
        s.push('\n');
    };
    kv("input_dim", c.input_dim.to_string());
    kv("hidden", c.hidden.to_string());
    kv("depth", c.depth.to_string());
    kv("kernel_width", c.kernel_width.to_string());
    kv("dilation_base", c.dilation_base.to_string());
    kv("output_dim", c.output_dim.unwrap_or(0).to_string());
    kv("activation", c.activation.name().to_string());
    kv("dropout", format!("{:?}", c.dropout));
    kv("sn", c.sn.is_some().to_string());
    kv("sn_c", format!("{:?}", sn.c));
    kv("sn_iterations_per_step", sn.iterations_per_step.to_string());
    kv("sn_certify_iterations", sn.certify_iterations.to_string());
    kv("sn_invert_max_iter", sn.invert_max_iter.to_string());
    kv("sn_invert_tol", format!("{:?}", sn.invert_tol));
    s
}

fn parse_config(text: &str) -> Result<EncoderConfig> {
    let map: HashMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let get = |k: &str| {
        map.get(k)
            .copied()
            .ok_or_else(|| Error::Validation(format!("checkpoint config lacks '{k}'")))
    };
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::Validation(format!("checkpoint config '{k}' has bad value '{v}'")))
    }
    let sn = if num::<bool>("sn", get("sn")?)? {
        Some(SNConfig {
            c: num("sn_c", get("sn_c")?)?,
            iterations_per_step: num("sn_iterations_per_step", get("sn_iterations_per_step")?)?,
            certify_iterations: num("sn_certify_iterations", get("sn_certify_iterations")?)?,
            invert_max_iter: num("sn_invert_max_iter", get("sn_invert_max_iter")?)?,
            invert_tol: num("sn_invert_tol", get("sn_invert_tol")?)?,
        })
    } else {
        None
    };
    let output_dim: usize = num("output_dim", get("output_dim")?)?;
    let config = EncoderConfig {
        input_dim: num("input_dim", get("input_dim")?)?,
        hidden: num("hidden", get("hidden")?)?,
        depth: num("depth", get("depth")?)?,
        kernel_width: num("kernel_width", get("kernel_width")?)?,
        dilation_base: num("dilation_base", get("dilation_base")?)?,
        output_dim: (output_dim > 0).then_some(output_dim),
        activation: Activation::parse(get("activation")?)?,
        dropout: num("dropout", get("dropout")?)?,
        sn,
    };
    config.validate()?;
    Ok(config)
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_blob(buf: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    put_u32(buf, name.len() as u32);
    buf.extend_from_slice(name.as_bytes());
    put_u32(buf, shape.len() as u32);
    for &d in shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes `model` into the checkpoint layout.
pub fn encode_checkpoint(model: &EncoderModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    let cfg = config_text(&model.config);
    put_u32(&mut buf, cfg.len() as u32);
    buf.extend_from_slice(cfg.as_bytes());
    let names = model.param_names();
    let params = model.params();
    put_u32(&mut buf, (names.len() + 3 * model.blocks.len()) as u32);
    for (name, p) in names.iter().zip(params) {
        put_blob(&mut buf, name, p.shape(), p.data());
    }
    for (l, b) in model.blocks.iter().enumerate() {
        let st = &b.sn_state;
        put_blob(&mut buf, &format!("block{l}.sn_u"), &[st.u().len()], st.u());
        put_blob(&mut buf, &format!("block{l}.sn_v"), &[st.v().len()], st.v());
        put_blob(
            &mut buf,
            &format!("block{l}.sn_sigma"),
            &[1],
            &[st.last_estimate()],
        );
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Validation("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Validation("checkpoint string is not UTF-8".into()))
    }
}

/// Parses a checkpoint produced by [`encode_checkpoint`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<EncoderModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Validation("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Validation(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config = parse_config(&r.string()?)?;
    let count = r.u32()? as usize;
    let mut blobs: HashMap<String, Tensor> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let raw = r.take(
            numel
                .checked_mul(8)
                .ok_or_else(|| Error::Validation("blob too large".into()))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blobs.insert(
            name,
            Tensor::new(shape, data).map_err(|e| Error::Validation(e.to_string()))?,
        );
    }
    let mut model = EncoderModel::new(config, 0)?;
    let names = model.param_names();
    for (name, slot) in names.iter().zip(model.params_mut()) {
        let t = blobs
            .remove(name)
            .ok_or_else(|| Error::Validation(format!("checkpoint lacks '{name}'")))?;
        if t.shape() != slot.shape() {
            return Err(Error::Validation(format!(
                "'{name}' has shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    for (l, b) in model.blocks.iter_mut().enumerate() {
        let mut take = |suffix: &str| {
            blobs
                .remove(&format!("block{l}.{suffix}"))
                .ok_or_else(|| Error::Validation(format!("checkpoint lacks block{l}.{suffix}")))
        };
        let u = take("sn_u")?.into_data();
        let v = take("sn_v")?.into_data();
        let sigma = take("sn_sigma")?.item();
        if u.len() != b.sn_state.u().len() || v.len() != b.sn_state.v().len() {
            return Err(Error::Validation(format!(
                "block{l} power-iteration state has wrong size"
            )));
        }
        b.sn_state = SpectralNormState::from_parts(u, v, sigma);
    }
    Ok(model)
}

pub fn save_checkpoint(model: &EncoderModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = EncoderConfig {
            input_dim: 2,
            hidden: 5,
            depth: 3,
            output_dim: Some(3),
            ..EncoderConfig::default()
        };
        let model = EncoderModel::new(cfg, 4).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&model)).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn headless_vanilla_round_trip() {
        let cfg = EncoderConfig {
            input_dim: 2,
            hidden: 2,
            depth: 1,
            output_dim: None,
            sn: None,
            ..EncoderConfig::default()
        };
        let model = EncoderModel::new(cfg, 4).unwrap();
        assert_eq!(
            decode_checkpoint(&encode_checkpoint(&model)).unwrap(),
            model
        );
    }

    #[test]
    fn truncation_is_detected() {
        let model = EncoderModel::new(
            EncoderConfig {
                hidden: 4,
                depth: 1,
                ..EncoderConfig::default()
            },
            1,
        )
        .unwrap();
        let bytes = encode_checkpoint(&model);
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            decode_checkpoint(b"nope"),
            Err(Error::Validation(_))
        ));
    }
}

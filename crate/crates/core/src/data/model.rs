//! `FUS1` model files.
//!
//! ```text
//! b"FUS1" | version u32 = 1
//! kind u32 | text_dim u32 | image_dim u32 | out_dim u32 | key_dim u32 (0 without attention)
//! tensor count u32
//! per tensor: name_len u32 | name bytes | rank u32 | dims u32 × rank | f32 values
//! CRC32 (u32) of every preceding byte
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::attention::AttentionParams;
use crate::error::{Error, Result};
use crate::fusion::{FusionModel, HeadDims, HeadKind, NUM_CLASSES};
use crate::tensor::Tensor;

use super::femb::{to_u32, u32_at};

pub const FUS1_MAGIC: [u8; 4] = *b"FUS1";
pub const FUS1_VERSION: u32 = 1;
const MIN_LEN: usize = 4 + 4 + 5 * 4 + 4 + 4;

pub fn encode_model(model: &FusionModel) -> Result<Vec<u8>> {
    let op = "save_model";
    let mut out = Vec::new();
    out.extend_from_slice(&FUS1_MAGIC);
    out.extend_from_slice(&FUS1_VERSION.to_le_bytes());
    let dims = model.dims();
    let key_dim = model.attention.as_ref().map_or(0, AttentionParams::d_k);
    for v in [
        model.kind().code(),
        to_u32(op, dims.text)?,
        to_u32(op, dims.image)?,
        NUM_CLASSES as u32,
        to_u32(op, key_dim)?,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let params = model.parameters();
    out.extend_from_slice(&to_u32(op, params.len())?.to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&to_u32(op, name.len())?.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&to_u32(op, t.rank())?.to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&to_u32(op, d)?.to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Bounds-checked little-endian cursor over the checksummed body.
struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.at..end];
                self.at = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                expected: (self.at as u64).saturating_add(n as u64),
                actual: self.bytes.len() as u64,
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn read_tensor(c: &mut Cursor<'_>) -> Result<(String, Tensor)> {
    let name_len = c.u32()? as usize;
    let name = std::str::from_utf8(c.take(name_len)?)
        .map_err(|_| Error::Parse("tensor name is not UTF-8".into()))?
        .to_string();
    let rank = c.u32()? as usize;
    if rank == 0 || rank > crate::tensor::MAX_RANK {
        return Err(Error::shape("load_model", format!("tensor `{name}` has rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(c.u32()? as usize);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::Overflow { op: "load_model" })?;
    let data = c
        .take(count)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((name, Tensor::new(&shape, data)?))
}

pub fn decode_model(bytes: &[u8]) -> Result<FusionModel> {
    let actual = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: MIN_LEN as u64,
            actual,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if found != FUS1_MAGIC {
        return Err(Error::BadMagic {
            expected: FUS1_MAGIC,
            found,
        });
    }
    if bytes.len() < MIN_LEN {
        return Err(Error::Truncated {
            expected: MIN_LEN as u64,
            actual,
        });
    }
    let version = u32_at(bytes, 4);
    if version != FUS1_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FUS1_VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32_at(tail, 0);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut c = Cursor { bytes: body, at: 8 };
    let kind = HeadKind::from_code(c.u32()?)?;
    let dims = HeadDims {
        text: c.u32()? as usize,
        image: c.u32()? as usize,
    };
    let out_dim = c.u32()? as usize;
    let key_dim = c.u32()? as usize;
    if out_dim != NUM_CLASSES {
        return Err(Error::shape(
            "load_model",
            format!("output width {out_dim}, expected {NUM_CLASSES}"),
        ));
    }
    let count = c.u32()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count.min(16) {
        tensors.push(read_tensor(&mut c)?);
    }
    if c.at != body.len() {
        return Err(Error::TrailingBytes {
            expected: c.at as u64 + 4,
            actual,
        });
    }

    let mut take = |name: &str| -> Result<Tensor> {
        let pos = tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::shape("load_model", format!("missing tensor `{name}`")))?;
        Ok(tensors.remove(pos).1)
    };
    let weight = take("fc.weight")?;
    let bias = take("fc.bias")?;
    let attention = if kind == HeadKind::CrossAttnFcnn {
        let p = AttentionParams::new(
            take("attn.wq")?,
            take("attn.wk")?,
            take("attn.wv")?,
            take("attn.ln_gain")?,
            take("attn.ln_bias")?,
        )?;
        if p.d_k() != key_dim {
            return Err(Error::shape(
                "load_model",
                format!("descriptor key dim {key_dim}, tensors use {}", p.d_k()),
            ));
        }
        Some(p)
    } else {
        if key_dim != 0 {
            return Err(Error::shape(
                "load_model",
                format!("{kind} cannot have key dim {key_dim}"),
            ));
        }
        None
    };
    if let Some((name, _)) = tensors.first() {
        return Err(Error::shape("load_model", format!("unexpected tensor `{name}`")));
    }
    FusionModel::from_parts(kind, dims, weight, bias, attention)
}

pub fn save_model(model: &FusionModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FusionModel> {
    decode_model(&fs::read(path)?)
}

/// Loads a model and checks that it is of the expected kind.
pub fn load_model_as(path: &Path, kind: HeadKind) -> Result<FusionModel> {
    let model = load_model(path)?;
    if model.kind() != kind {
        return Err(Error::KindMismatch {
            expected: kind.to_string(),
            found: model.kind().to_string(),
        });
    }
    Ok(model)
}

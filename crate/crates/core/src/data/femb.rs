//! `FEMB` embedding matrices: 16-byte header then row-major `f32` values.
//!
//! ```text
//! 0..4   b"FEMB"
//! 4..8   version (u32 LE) = 1
//! 8..12  N rows (u32 LE)
//! 12..16 D cols (u32 LE)
//! 16..   N·D f32 LE
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEMB_MAGIC: [u8; 4] = *b"FEMB";
pub const FEMB_VERSION: u32 = 1;
const HEADER: usize = 16;

pub(crate) fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub(crate) fn to_u32(op: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Overflow { op })
}

pub fn encode_embeddings(t: &Tensor) -> Result<Vec<u8>> {
    if t.rank() != 2 {
        return Err(Error::shape(
            "write_embeddings",
            format!("expected a matrix, got {:?}", t.shape()),
        ));
    }
    let mut out = Vec::with_capacity(HEADER + 4 * t.len());
    out.extend_from_slice(&FEMB_MAGIC);
    out.extend_from_slice(&FEMB_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32("write_embeddings", t.rows())?.to_le_bytes());
    out.extend_from_slice(&to_u32("write_embeddings", t.cols())?.to_le_bytes());
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Tensor> {
    let actual = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: HEADER as u64,
            actual,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if found != FEMB_MAGIC {
        return Err(Error::BadMagic {
            expected: FEMB_MAGIC,
            found,
        });
    }
    if bytes.len() < HEADER {
        return Err(Error::Truncated {
            expected: HEADER as u64,
            actual,
        });
    }
    let version = u32_at(bytes, 4);
    if version != FEMB_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FEMB_VERSION,
        });
    }
    let (n, d) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let expected = HEADER as u64 + 4 * n as u64 * d as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::TrailingBytes { expected, actual });
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Tensor::new(&[n, d], data)
}

pub fn write_embeddings(t: &Tensor, path: &Path) -> Result<()> {
    fs::write(path, encode_embeddings(t)?)?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<Tensor> {
    decode_embeddings(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_bytes() {
        let t = Tensor::new(&[2, 3], vec![1.0, -2.0, 0.5, 0.0, 3.25, -0.125]).unwrap();
        let bytes = encode_embeddings(&t).unwrap();
        assert_eq!(bytes.len(), 40);
        assert_eq!(&bytes[..16], b"FEMB\x01\0\0\0\x02\0\0\0\x03\0\0\0");
        // 1.0f32 and -2.0f32
        assert_eq!(&bytes[16..24], &[0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0]);
        assert_eq!(decode_embeddings(&bytes).unwrap(), t);
    }

    #[test]
    fn header_errors_are_distinct() {
        let t = Tensor::filled(&[2, 3], 1.0);
        let good = encode_embeddings(&t).unwrap();

        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode_embeddings(&b), Err(Error::BadMagic { .. })));

        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(
            decode_embeddings(&b),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));

        let b = &good[..good.len() - 1];
        assert!(matches!(
            decode_embeddings(b),
            Err(Error::Truncated { expected: 40, actual: 39 })
        ));

        let mut b = good.clone();
        b.push(0);
        assert!(matches!(decode_embeddings(&b), Err(Error::TrailingBytes { .. })));
        assert!(matches!(decode_embeddings(&good[..2]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn empty_matrix() {
        let t = Tensor::zeros(&[0, 18]);
        let b = encode_embeddings(&t).unwrap();
        assert_eq!(b.len(), 16);
        assert_eq!(decode_embeddings(&b).unwrap().shape(), &[0, 18]);
    }
}

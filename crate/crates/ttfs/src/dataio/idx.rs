//! IDX container parsing (the MNIST/Fashion-MNIST distribution format).
//!
//! Big-endian magic, then one u32 size per dimension, then row-major
//! unsigned bytes. Only the two magics used by the datasets are accepted:
//! `0x00000801` (label vector) and `0x00000803` (image tensor).

use crate::error::{Error, Result};

pub const MAGIC_LABELS: u32 = 0x0000_0801;
pub const MAGIC_IMAGES: u32 = 0x0000_0803;

/// A parsed IDX tensor of unsigned bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parse an IDX byte stream. Total over arbitrary input: returns either a
/// well-formed tensor or a classified error, never panics.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::Idx(format!(
            "stream too short for a magic number ({} bytes)",
            bytes.len()
        )));
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let ndims = match magic {
        MAGIC_LABELS => 1,
        MAGIC_IMAGES => 3,
        other => {
            return Err(Error::Idx(format!("bad magic 0x{other:08x}")));
        }
    };
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::Idx(format!(
            "truncated header: {} bytes, need {header_len}",
            bytes.len()
        )));
    }
    let mut dims = Vec::with_capacity(ndims);
    for d in 0..ndims {
        let off = 4 + 4 * d;
        dims.push(u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
    }
    let total: u128 = dims.iter().map(|&d| d as u128).product();
    if total > usize::MAX as u128 {
        return Err(Error::Idx(format!("dimension overflow: {dims:?}")));
    }
    let total = total as usize;
    let payload = &bytes[header_len..];
    if payload.len() < total {
        return Err(Error::Idx(format!(
            "truncated payload: dims {dims:?} imply {total} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > total {
        return Err(Error::Idx(format!(
            "trailing bytes: dims {dims:?} imply {total} bytes, found {}",
            payload.len()
        )));
    }
    Ok(IdxTensor {
        magic,
        dims,
        data: payload.to_vec(),
    })
}

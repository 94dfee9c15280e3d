//! Byte-level serialization of named tensors: length-prefixed UTF-8 name,
//! dtype tag, dimension list, then the little-endian float32 payload.
//! Checkpoint files are containers of these records.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{Tensor, TensorError};

/// The only dtype currently defined.
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub enum CodecError {
    Truncated,
    BadName,
    UnknownDtype(u8),
    BadTensor(TensorError),
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::Truncated => write!(f, "tensor record truncated"),
            CodecError::BadName => write!(f, "tensor name is not valid UTF-8"),
            CodecError::UnknownDtype(t) => write!(f, "unknown dtype tag {t}"),
            CodecError::BadTensor(e) => write!(f, "invalid tensor record: {e}"),
        }
    }
}

impl core::error::Error for CodecError {}

pub fn encode_tensor(name: &str, tensor: &Tensor, out: &mut Vec<u8>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(DTYPE_F32);
    out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn take<'a>(bytes: &'a [u8], offset: &mut usize, n: usize) -> Result<&'a [u8], CodecError> {
    let end = offset.checked_add(n).ok_or(CodecError::Truncated)?;
    if end > bytes.len() {
        return Err(CodecError::Truncated);
    }
    let s = &bytes[*offset..end];
    *offset = end;
    Ok(s)
}

fn take_u32(bytes: &[u8], offset: &mut usize) -> Result<u32, CodecError> {
    let s = take(bytes, offset, 4)?;
    Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

/// Decode one record starting at `*offset`, advancing it past the record.
pub fn decode_tensor(bytes: &[u8], offset: &mut usize) -> Result<(String, Tensor), CodecError> {
    let name_len = take_u32(bytes, offset)? as usize;
    let name = core::str::from_utf8(take(bytes, offset, name_len)?)
        .map_err(|_| CodecError::BadName)?
        .into();
    let dtype = take(bytes, offset, 1)?[0];
    if dtype != DTYPE_F32 {
        return Err(CodecError::UnknownDtype(dtype));
    }
    let ndim = take_u32(bytes, offset)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(take_u32(bytes, offset)? as usize);
    }
    let numel: usize = shape.iter().product();
    let payload = take(bytes, offset, numel.checked_mul(4).ok_or(CodecError::Truncated)?)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let tensor = Tensor::new(shape, data).map_err(CodecError::BadTensor)?;
    Ok((name, tensor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn round_trip() {
        let t = Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, 5.5, -6.0]).unwrap();
        let mut buf = Vec::new();
        encode_tensor("layer.weight", &t, &mut buf);
        let mut off = 0;
        let (name, back) = decode_tensor(&buf, &mut off).unwrap();
        assert_eq!(name, "layer.weight");
        assert_eq!(back, t);
        assert_eq!(off, buf.len());
    }

    #[test]
    fn truncated_record_fails() {
        let t = Tensor::scalar(1.0);
        let mut buf = Vec::new();
        encode_tensor("x", &t, &mut buf);
        buf.pop();
        let mut off = 0;
        assert_eq!(decode_tensor(&buf, &mut off), Err(CodecError::Truncated));
    }
}

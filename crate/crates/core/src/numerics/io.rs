//! Tensor block wire format: name (u32 length + UTF-8), dtype tag (u8),
//! rank (u32), dims (u64 each), raw values. All integers and values are
//! little-endian.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DTYPE_F64: u8 = 1;
pub const DTYPE_F32: u8 = 2;

const MAX_NAME: usize = 1 << 16;
const MAX_RANK: usize = 8;

pub fn write_tensor_block<W: Write>(w: &mut W, name: &str, t: &Tensor) -> Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&[DTYPE_F64])?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_bytes<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(Error::Format(format!("truncated while reading {what}")));
    }
    Ok(buf)
}

pub fn read_tensor_block<R: Read>(r: &mut R) -> Result<(String, Tensor)> {
    let n = read_u32(r, "tensor name length")? as usize;
    if n > MAX_NAME {
        return Err(Error::Format(format!("tensor name length {n} too large")));
    }
    let name = String::from_utf8(read_bytes(r, n, "tensor name")?)
        .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
    let mut tag = [0u8; 1];
    read_exact(r, &mut tag, "dtype tag")?;
    let rank = read_u32(r, "tensor rank")? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format(format!("tensor {name}: bad rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(read_u64(r, "tensor dims")? as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("tensor {name}: dims overflow")))?;
    let width = match tag[0] {
        DTYPE_F64 => 8,
        DTYPE_F32 => 4,
        t => return Err(Error::Format(format!("tensor {name}: unknown dtype tag {t}"))),
    };
    let raw = read_bytes(r, count * width, &format!("values of {name}"))?;
    let data = if width == 8 {
        raw.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    } else {
        raw.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    };
    let t = Tensor::from_vec(&dims, data).map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
    Ok((name, t))
}

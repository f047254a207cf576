//! Versioned binary container for parameter sets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "SLNNPARM"
//! version      u32
//! arch tag     u32 length + UTF-8 bytes
//! tensor count u32
//! per tensor   u32 name length + UTF-8 name, u32 rank, rank × u64 dims
//! payload      every tensor's values as f64, in header order
//! ```

use std::io::{Read, Write};

use crate::error::{NnError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CONTAINER_MAGIC: &[u8; 8] = b"SLNNPARM";
pub const CONTAINER_VERSION: u32 = 1;

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_params<W: Write>(mut w: W, arch_tag: &str, params: &ParamStore) -> Result<()> {
    w.write_all(CONTAINER_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    put_str(&mut w, arch_tag)?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        put_str(&mut w, name)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
    }
    for t in params.tensors() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(NnError::Format(format!("string length {n} too large")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| NnError::Format(e.to_string()))
}

/// Reads a container, returning its architecture tag and parameters.
pub fn read_params<R: Read>(mut r: R) -> Result<(String, ParamStore)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CONTAINER_MAGIC {
        return Err(NnError::Format("bad magic".into()));
    }
    let version = get_u32(&mut r)?;
    if version != CONTAINER_VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let tag = get_str(&mut r)?;
    let count = get_u32(&mut r)? as usize;
    let mut header = Vec::with_capacity(count);
    for _ in 0..count {
        let name = get_str(&mut r)?;
        let rank = get_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| get_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        header.push((name, shape));
    }
    let mut store = ParamStore::new();
    for (name, shape) in header {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        store.push_raw(name, Tensor::new(shape, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NnError::Format("trailing bytes".into()));
    }
    Ok((tag, store))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::row(vec![1.0, 2.0]));
        let mut buf = Vec::new();
        write_params(&mut buf, "dense", &store).unwrap();
        assert!(read_params(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_params(&bad[..]).is_err());
        let (tag, back) = read_params(&buf[..]).unwrap();
        assert_eq!(tag, "dense");
        assert_eq!(back, store);
    }
}

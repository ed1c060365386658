//! Little-endian binary container shared by model checkpoints and the encoded
//! dataset cache.
//!
//! Layout: 4-byte magic, `u32` version, `u32` block count, one `(u32 rows,
//! u32 cols)` pair per block, then every value as a raw `f64`. How many values
//! follow a given block list is decided by the caller (checkpoints carry a
//! bias vector per block, datasets do not).

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub dims: Vec<(u32, u32)>,
    pub values: Vec<f64>,
}

pub fn write_container<W: Write>(out: &mut W, magic: &[u8; 4], container: &Container) -> std::io::Result<()> {
    out.write_all(magic)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(container.dims.len() as u32).to_le_bytes())?;
    for &(r, c) in &container.dims {
        out.write_all(&r.to_le_bytes())?;
        out.write_all(&c.to_le_bytes())?;
    }
    for v in &container.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let end = *pos + 4;
    let slice = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    *pos = end;
    Ok(u32::from_le_bytes(slice.try_into().expect("4 bytes")))
}

/// Parse a container. `value_count` maps the block list to the number of
/// `f64` values that must follow.
pub fn read_container<R: Read>(
    input: &mut R,
    magic: &[u8; 4],
    value_count: impl Fn(&[(u32, u32)]) -> usize,
) -> Result<Container> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic, expected {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 4;
    let version = read_u32(&bytes, &mut pos)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let blocks = read_u32(&bytes, &mut pos)? as usize;
    let mut dims = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let r = read_u32(&bytes, &mut pos)?;
        let c = read_u32(&bytes, &mut pos)?;
        dims.push((r, c));
    }
    let n = value_count(&dims);
    let body = &bytes[pos..];
    if body.len() != n * 8 {
        return Err(Error::Format(format!(
            "expected {n} values ({} bytes), found {} bytes",
            n * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Container { dims, values })
}

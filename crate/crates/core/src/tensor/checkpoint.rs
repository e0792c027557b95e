//! Versioned binary container of named arrays.
//!
//! Layout (little endian): magic `LEAPCKPT`, `u32` version, `u64`-prefixed
//! UTF-8 header text, `u64` array count, then per array a `u64`-prefixed
//! name, `u32` rank, `u64` dims and raw `f64` values.

use std::io::{self, Read, Write};

use super::Array;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LEAPCKPT";
pub const VERSION: u32 = 1;
const MAX_NAME: u64 = 1 << 16;

pub fn write<W: Write>(mut out: W, header: &str, arrays: &[(&str, &Array)]) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    write_bytes(&mut out, header.as_bytes())?;
    out.write_all(&(arrays.len() as u64).to_le_bytes())?;
    for (name, array) in arrays {
        write_bytes(&mut out, name.as_bytes())?;
        out.write_all(&(array.shape().len() as u32).to_le_bytes())?;
        for &d in array.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in array.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_bytes<W: Write>(out: &mut W, bytes: &[u8]) -> io::Result<()> {
    out.write_all(&(bytes.len() as u64).to_le_bytes())?;
    out.write_all(bytes)
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, limit: u64) -> Result<String> {
    let len = read_u64(r)?;
    if len > limit {
        return Err(Error::Checkpoint(format!("string length {len} exceeds {limit}")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
}

pub fn read<R: Read>(mut input: R) -> Result<(String, Vec<(String, Array)>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: VERSION });
    }
    let header = read_string(&mut input, 1 << 24)?;
    let count = read_u64(&mut input)?;
    let mut arrays = Vec::new();
    for _ in 0..count {
        let name = read_string(&mut input, MAX_NAME)?;
        let rank = read_u32(&mut input)?;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("array {name:?} has rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_u64(&mut input).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let len = len.ok_or_else(|| Error::Checkpoint(format!("array {name:?} is too large")))?;
        let mut raw = vec![0u8; len.checked_mul(8).ok_or_else(|| Error::Checkpoint("overflow".into()))?];
        input.read_exact(&mut raw).map_err(truncated)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        arrays.push((name, Array::new(&shape, data)?));
    }
    Ok((header, arrays))
}

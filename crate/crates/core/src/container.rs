//! Binary model container shared by generator and network files.
//!
//! ```text
//! magic        8 bytes
//! version      u32 LE
//! meta_len     u64 LE
//! meta         meta_len bytes of UTF-8 JSON
//! blob_count   u32 LE
//! blob_count × { len: u64 LE, len × f64 LE }
//! ```

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;

pub fn write_container<W: Write, M: Serialize>(
    mut w: W,
    magic: &[u8; 8],
    meta: &M,
    blobs: &[&[f64]],
) -> Result<()> {
    let meta = serde_json::to_vec(meta)?;
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    w.write_all(&(blobs.len() as u32).to_le_bytes())?;
    for blob in blobs {
        w.write_all(&(blob.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(blob.len() * 8);
        for v in blob.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(b)
}

pub fn read_container<R: Read, M: DeserializeOwned>(
    mut r: R,
    magic: &[u8; 8],
) -> Result<(M, Vec<Vec<f64>>)> {
    let got: [u8; 8] = read_exact(&mut r)?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let meta_len = u64::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)
        .map_err(|e| Error::Format(format!("truncated metadata: {e}")))?;
    let meta: M = serde_json::from_slice(&meta)?;
    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut blobs = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u64::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("truncated blob: {e}")))?;
        blobs.push(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    Ok((meta, blobs))
}

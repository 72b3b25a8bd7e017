//! Parameter checkpoints: a little-endian `u32` header length, a JSON header
//! describing the architecture, then the parameters as little-endian `f64`.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header<A> {
    arch: A,
    n_params: usize,
}

pub fn write_checkpoint<W: Write, A: Serialize>(mut w: W, arch: &A, params: &[f64]) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        arch,
        n_params: params.len(),
    })?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read, A: DeserializeOwned>(mut r: R) -> Result<(A, Vec<f64>)> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: Header<A> = serde_json::from_slice(&header)?;
    let mut raw = vec![0u8; header.n_params * 8];
    r.read_exact(&mut raw)?;
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidData("checkpoint holds non-finite parameters".into()));
    }
    Ok((header.arch, params))
}

//! On-disk formats for embeddings and labels.
//!
//! Embedding files start with the 8-byte magic `SUBSELEM`, followed by a
//! little-endian `u32` header length, a UTF-8 JSON header
//! `{"n": .., "dim": .., "dtype": "f32"}` and finally `n * dim` row-major
//! little-endian `f32` values.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{EmbeddingMatrix, LabelVector};
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"SUBSELEM";

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingHeader {
    n: usize,
    dim: usize,
    dtype: String,
}

pub fn write_embeddings<W: Write>(mut w: W, emb: &EmbeddingMatrix) -> Result<()> {
    let header = serde_json::to_vec(&EmbeddingHeader {
        n: emb.n_points(),
        dim: emb.dim(),
        dtype: "f32".into(),
    })?;
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for &v in emb.as_slice() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::InvalidData("bad embedding file magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: EmbeddingHeader = serde_json::from_slice(&header)?;
    if header.dtype != "f32" {
        return Err(Error::InvalidData(format!("unsupported dtype {}", header.dtype)));
    }
    let count = header
        .n
        .checked_mul(header.dim)
        .ok_or_else(|| Error::InvalidData("embedding shape overflows".into()))?;
    let mut raw = vec![0u8; count * 4];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    EmbeddingMatrix::new(header.n, header.dim, data)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    read_embeddings(BufReader::new(fs::File::open(path)?))
}

pub fn save_embeddings(path: &Path, emb: &EmbeddingMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_embeddings(&mut f, emb)?;
    f.flush()?;
    Ok(())
}

/// Reads newline-separated decimal labels. Blank trailing lines are ignored.
pub fn read_labels<R: Read>(r: R) -> Result<LabelVector> {
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: usize = line
            .parse()
            .map_err(|_| Error::InvalidData(format!("label line {}: `{line}`", lineno + 1)))?;
        labels.push(v);
    }
    Ok(LabelVector::new(labels))
}

pub fn load_labels(path: &Path) -> Result<LabelVector> {
    read_labels(fs::File::open(path)?)
}

pub fn write_id_list<W: Write>(mut w: W, ids: &[usize]) -> Result<()> {
    for id in ids {
        writeln!(w, "{id}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_file_round_trip() {
        let emb = EmbeddingMatrix::new(2, 3, vec![0.5, 1.0, -2.0, 3.25, 0.0, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &emb).unwrap();
        assert_eq!(&buf[..8], b"SUBSELEM");
        let back = read_embeddings(&buf[..]).unwrap();
        assert_eq!(back.as_slice(), emb.as_slice());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = read_embeddings(&b"NOTMAGIC\0\0\0\0"[..]).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn labels_parse() {
        let l = read_labels(&b"0\n2\n1\n\n"[..]).unwrap();
        assert_eq!(l.as_slice(), &[0, 2, 1]);
        assert!(read_labels(&b"0\nx\n"[..]).is_err());
    }
}

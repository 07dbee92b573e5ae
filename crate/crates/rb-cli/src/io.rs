//! Artifact writers. Every file goes through [`Artifacts`] so the manifest
//! can list it with its hash.

use rb_kinetic::field::KineticField;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

/// Fixed 17-significant-digit formatting, so equal numbers give equal bytes.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

pub struct Artifacts {
    dir: PathBuf,
    pub entries: Vec<OutputEntry>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), entries: vec![] })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.entries.push(OutputEntry { file: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|&x| fmt17(x)))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.put(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn field(&mut self, name: &str, f: &KineticField) -> std::io::Result<()> {
        self.put(name, &encode_field(f))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

const MAGIC: &[u8; 8] = b"RBKFIELD";

/// Binary dump: magic, u32 version, u64 `nzp, nx, nv`, then the values as
/// little-endian f64 in row-major `(z, x, v)` order.
pub fn encode_field(f: &KineticField) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + 8 * f.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    for n in [f.nzp, f.nx, f.nv] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for x in &f.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Option<KineticField> {
    if bytes.len() < 36 || &bytes[..8] != MAGIC || bytes[8..12] != 1u32.to_le_bytes() {
        return None;
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().unwrap()) as usize;
    let (nzp, nx, nv) = (dim(0), dim(1), dim(2));
    let body = &bytes[36..];
    if body.len() != 8 * nzp * nx * nv {
        return None;
    }
    let mut f = KineticField::zeros(nzp, nx, nv);
    for (x, c) in f.data.iter_mut().zip(body.chunks_exact(8)) {
        *x = f64::from_le_bytes(c.try_into().unwrap());
    }
    Some(f)
}

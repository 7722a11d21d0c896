//! Index file: magic `Q2QI`, version (u32), row count and dimension (u64
//! each), row-major f32 embeddings, a length-prefixed (u64) JSON-lines
//! metadata block, then the LSH seed (u64), table and plane counts (u32
//! each) and the exact-scan threshold (u64). All little-endian. Hash tables
//! are rebuilt from the seed on load.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::note_artifact_read;
use crate::numerics::io_util::{read_bytes, read_u32, read_u64};
use crate::retrieval::{lsh_topk, Hit, LshConfig, LshIndex};

pub const INDEX_MAGIC: &[u8; 4] = b"Q2QI";
pub const INDEX_VERSION: u32 = 1;

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub post_id: u64,
    pub title: String,
    pub url: String,
}

/// `s × d` unit-norm rows with their question metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    d: usize,
    rows: Vec<f32>,
    meta: Vec<RowMeta>,
}

impl EmbeddingIndex {
    pub fn new(d: usize, rows: Vec<f32>, meta: Vec<RowMeta>) -> Result<Self> {
        if d == 0 || rows.len() != meta.len() * d {
            return Err(Error::shape(&[meta.len(), d], &[rows.len()]));
        }
        for (i, r) in rows.chunks_exact(d).enumerate() {
            let n = r.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            if (n - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::InvalidArgument(format!("row {i} has norm {n}")));
            }
        }
        Ok(EmbeddingIndex { d, rows, meta })
    }

    /// Unit-normalizes each row first.
    pub fn from_vectors(d: usize, vectors: &[Vec<f64>], meta: Vec<RowMeta>) -> Result<Self> {
        let mut rows = Vec::with_capacity(vectors.len() * d);
        for v in vectors {
            if v.len() != d {
                return Err(Error::shape(&[d], &[v.len()]));
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
            }
            rows.extend(v.iter().map(|x| (x / n) as f32));
        }
        EmbeddingIndex::new(d, rows, meta)
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> &[f32] {
        &self.rows
    }

    pub fn meta(&self, i: usize) -> &RowMeta {
        &self.meta[i]
    }
}

/// An embedding matrix with its LSH tables, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIndex {
    pub emb: EmbeddingIndex,
    pub lsh: LshIndex,
}

impl SearchIndex {
    pub fn len(&self) -> usize {
        self.emb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emb.is_empty()
    }

    pub fn search(&self, query: &[f32], k: usize) -> Vec<Hit> {
        lsh_topk(query, &self.emb, &self.lsh, k)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let e = &self.emb;
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_VERSION.to_le_bytes())?;
        w.write_all(&(e.len() as u64).to_le_bytes())?;
        w.write_all(&(e.d as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(e.rows.len() * 4);
        for v in &e.rows {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        let mut meta = Vec::new();
        for m in &e.meta {
            serde_json::to_writer(&mut meta, m)?;
            meta.push(b'\n');
        }
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        let c = self.lsh.config();
        w.write_all(&self.lsh.seed().to_le_bytes())?;
        w.write_all(&(c.n_tables as u32).to_le_bytes())?;
        w.write_all(&(c.n_planes as u32).to_le_bytes())?;
        w.write_all(&(c.exact_scan_below as u64).to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let magic = read_bytes(r, 4, "index magic")?;
        if magic != INDEX_MAGIC {
            return Err(Error::Format(format!("bad index magic {magic:?}")));
        }
        let version = read_u32(r, "index version")?;
        if version != INDEX_VERSION {
            return Err(Error::Format(format!(
                "index version {version}, expected {INDEX_VERSION}"
            )));
        }
        let s = read_u64(r, "row count")? as usize;
        let d = read_u64(r, "dimension")? as usize;
        let n = s
            .checked_mul(d)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("row count overflows".into()))?;
        let raw = read_bytes(r, n, "embeddings")?;
        let rows = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let meta_len = read_u64(r, "metadata length")? as usize;
        let meta_raw = read_bytes(r, meta_len, "metadata")?;
        let meta_text = String::from_utf8(meta_raw)
            .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        let meta = meta_text
            .lines()
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<RowMeta>, _>>()?;
        if meta.len() != s {
            return Err(Error::Format(format!("{} metadata rows for {s} embeddings", meta.len())));
        }
        let seed = read_u64(r, "lsh seed")?;
        let cfg = LshConfig {
            n_tables: read_u32(r, "lsh tables")? as usize,
            n_planes: read_u32(r, "lsh planes")? as usize,
            exact_scan_below: read_u64(r, "lsh threshold")? as usize,
        };
        let emb = EmbeddingIndex::new(d, rows, meta)?;
        let lsh = LshIndex::build(&emb, cfg, seed)?;
        Ok(SearchIndex { emb, lsh })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let idx = SearchIndex::read_from(&mut r)?;
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(idx)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::from(e).at(&tmp))?;
        fs::rename(&tmp, path).map_err(|e| Error::from(e).at(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        note_artifact_read();
        let bytes = fs::read(path).map_err(|e| Error::from(e).at(path))?;
        SearchIndex::from_bytes(&bytes).map_err(|e| e.at(path))
    }
}

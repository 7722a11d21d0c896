use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::retrieval::EmbeddingIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LshConfig {
    pub n_tables: usize,
    /// Hyperplanes per table, at most 64.
    pub n_planes: usize,
    /// Indexes with fewer rows are always scanned exhaustively.
    pub exact_scan_below: usize,
}

impl Default for LshConfig {
    fn default() -> Self {
        LshConfig {
            n_tables: 8,
            n_planes: 16,
            exact_scan_below: 50_000,
        }
    }
}

/// Random-hyperplane hash tables over the rows of an [`EmbeddingIndex`].
#[derive(Debug, Clone, PartialEq)]
pub struct LshIndex {
    cfg: LshConfig,
    seed: u64,
    d: usize,
    /// `n_tables × n_planes × d`, standard normal entries.
    planes: Vec<f32>,
    tables: Vec<HashMap<u64, Vec<u32>>>,
}

impl LshIndex {
    pub fn build(emb: &EmbeddingIndex, cfg: LshConfig, seed: u64) -> Result<Self> {
        if cfg.n_tables == 0 || cfg.n_planes == 0 || cfg.n_planes > 64 {
            return Err(Error::InvalidArgument(format!(
                "need n_tables >= 1 and 1 <= n_planes <= 64, got {} and {}",
                cfg.n_tables, cfg.n_planes
            )));
        }
        let d = emb.dim();
        let mut rng = Rng::new(seed);
        let planes = (0..cfg.n_tables * cfg.n_planes * d)
            .map(|_| rng.normal() as f32)
            .collect();
        let mut lsh = LshIndex {
            cfg,
            seed,
            d,
            planes,
            tables: vec![HashMap::new(); cfg.n_tables],
        };
        let sigs = crate::par::map_range(emb.len(), |i| lsh.signatures(emb.row(i)));
        for (i, s) in sigs.into_iter().enumerate() {
            for (t, sig) in s.into_iter().enumerate() {
                lsh.tables[t].entry(sig).or_default().push(i as u32);
            }
        }
        Ok(lsh)
    }

    pub fn config(&self) -> LshConfig {
        self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Signature of `v` in table `t`: bit `p` is set when plane `p` has a
    /// non-negative dot product with `v`.
    pub fn signature(&self, t: usize, v: &[f32]) -> u64 {
        let (np, d) = (self.cfg.n_planes, self.d);
        let mut sig = 0u64;
        for p in 0..np {
            let off = (t * np + p) * d;
            let plane = &self.planes[off..off + d];
            let dot: f64 = plane.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
            if dot >= 0.0 {
                sig |= 1 << p;
            }
        }
        sig
    }

    pub fn signatures(&self, v: &[f32]) -> Vec<u64> {
        (0..self.cfg.n_tables).map(|t| self.signature(t, v)).collect()
    }

    /// Rows sharing a bucket with `v` in any table, ascending and distinct.
    pub fn candidates(&self, v: &[f32]) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        for (t, table) in self.tables.iter().enumerate() {
            if let Some(rows) = table.get(&self.signature(t, v)) {
                out.extend_from_slice(rows);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Bucket sizes of table `t`.
    pub fn bucket_sizes(&self, t: usize) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.tables[t].values().map(Vec::len).collect();
        sizes.sort_unstable();
        sizes
    }
}

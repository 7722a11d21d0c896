use std::cmp::Ordering;

use crate::par;
use crate::retrieval::{EmbeddingIndex, LshIndex};

/// Rows per work unit of the exhaustive scan.
const SCAN_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub row: usize,
    pub cosine: f64,
}

/// Dot product accumulated in f64; equals cosine for unit vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// Higher cosine first, then lower row.
fn rank(a: &Hit, b: &Hit) -> Ordering {
    b.cosine
        .partial_cmp(&a.cosine)
        .unwrap_or(Ordering::Equal)
        .then(a.row.cmp(&b.row))
}

fn top(mut hits: Vec<Hit>, k: usize) -> Vec<Hit> {
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, rank);
        hits.truncate(k);
    }
    hits.sort_by(rank);
    hits
}

/// Exhaustive cosine scan returning the best `min(k, s)` rows.
pub fn exact_topk(query: &[f32], emb: &EmbeddingIndex, k: usize) -> Vec<Hit> {
    if k == 0 || emb.is_empty() {
        return Vec::new();
    }
    let d = emb.dim();
    let parts = par::map_chunks(emb.rows(), SCAN_CHUNK * d, |start, chunk| {
        let first = start / d;
        let hits = chunk
            .chunks_exact(d)
            .enumerate()
            .map(|(i, r)| Hit {
                row: first + i,
                cosine: cosine(query, r),
            })
            .collect();
        top(hits, k)
    });
    top(parts.into_iter().flatten().collect(), k)
}

/// Scores `rows` exactly and keeps the best `k`.
pub fn rerank(query: &[f32], emb: &EmbeddingIndex, rows: &[u32], k: usize) -> Vec<Hit> {
    if k == 0 {
        return Vec::new();
    }
    let hits = rows
        .iter()
        .map(|&r| Hit {
            row: r as usize,
            cosine: cosine(query, emb.row(r as usize)),
        })
        .collect();
    top(hits, k)
}

/// Candidates from the query's buckets, reranked exactly. Small indexes,
/// and queries with fewer than `k` candidates, use [`exact_topk`].
pub fn lsh_topk(query: &[f32], emb: &EmbeddingIndex, lsh: &LshIndex, k: usize) -> Vec<Hit> {
    if emb.len() < lsh.config().exact_scan_below {
        return exact_topk(query, emb, k);
    }
    let cands = lsh.candidates(query);
    if cands.len() < k {
        return exact_topk(query, emb, k);
    }
    rerank(query, emb, &cands, k)
}

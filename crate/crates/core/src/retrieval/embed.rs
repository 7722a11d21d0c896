use crate::corpus::{PairRecord, TokenSequence};
use crate::error::{Error, Result};
use crate::model::{encode, Checkpoint};
use crate::par;
use crate::retrieval::{EmbeddingIndex, LshConfig, LshIndex, RowMeta};

/// The encoder summary state of `code`, scaled to unit L2 norm.
pub fn embed_snippet(ck: &Checkpoint, code: &TokenSequence) -> Result<Vec<f64>> {
    if code.is_empty() {
        return Err(Error::EmptyInput("code snippet has no tokens".into()));
    }
    let ids: Vec<u32> = code.iter().map(|t| ck.code_vocab.id_or_unk(t)).collect();
    let enc = encode(&ids, &vec![true; ids.len()], &ck.params, &ck.config)?;
    let norm = enc.summary.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::NonFinite(format!("snippet embedding norm {norm}")));
    }
    Ok(enc.summary.iter().map(|v| v / norm).collect())
}

/// Embeds every pair (in parallel, order kept) and hashes the rows.
pub fn build_index(
    pairs: &[PairRecord],
    ck: &Checkpoint,
    lsh: LshConfig,
    seed: u64,
) -> Result<(EmbeddingIndex, LshIndex)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs to index".into()));
    }
    let d = ck.config.annotation_dim();
    let rows = par::map(pairs, |p| embed_snippet(ck, &p.code));
    let mut flat = Vec::with_capacity(pairs.len() * d);
    for (row, p) in rows.into_iter().zip(pairs) {
        let row = row.map_err(|e| Error::InvalidArgument(format!("post {}: {e}", p.post_id)))?;
        flat.extend(row.iter().map(|&v| v as f32));
    }
    let meta = pairs
        .iter()
        .map(|p| RowMeta {
            post_id: p.post_id,
            title: p.title.to_string(),
            url: p.url.clone(),
        })
        .collect();
    let emb = EmbeddingIndex::new(d, flat, meta)?;
    let lsh = LshIndex::build(&emb, lsh, seed)?;
    Ok((emb, lsh))
}

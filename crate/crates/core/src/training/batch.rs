use crate::corpus::PAD;
use crate::error::{Error, Result};
use crate::model::Example;
use crate::numerics::Rng;

/// Indices of the examples forming one optimizer step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

/// Padded id matrices of a batch. Padding uses `PAD`; masks mark real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub code_ids: Vec<Vec<u32>>,
    pub code_mask: Vec<Vec<bool>>,
    pub title_ids: Vec<Vec<u32>>,
    pub title_mask: Vec<Vec<bool>>,
    pub ext: Vec<crate::corpus::ExtendedVocab>,
}

fn pad(rows: Vec<&[u32]>) -> (Vec<Vec<u32>>, Vec<Vec<bool>>) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    rows.into_iter()
        .map(|r| {
            let mut ids = r.to_vec();
            let mut mask = vec![true; r.len()];
            ids.resize(width, PAD);
            mask.resize(width, false);
            (ids, mask)
        })
        .unzip()
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn padded(&self, examples: &[Example]) -> PaddedBatch {
        let exs: Vec<&Example> = self.indices.iter().map(|&i| &examples[i]).collect();
        let (code_ids, code_mask) = pad(exs.iter().map(|e| e.code_ids.as_slice()).collect());
        let (title_ids, title_mask) = pad(exs.iter().map(|e| e.target_ids.as_slice()).collect());
        PaddedBatch {
            code_ids,
            code_mask,
            title_ids,
            title_mask,
            ext: exs.iter().map(|e| e.ext.clone()).collect(),
        }
    }
}

/// Buckets examples by `code_len / 16`, shuffles within each bucket with
/// `seed`, concatenates the buckets in ascending order and cuts the result
/// into batches of `batch_size` (the last may be short).
pub fn make_batches(code_lens: &[usize], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if code_lens.is_empty() {
        return Err(Error::EmptyInput("no training pairs".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut rng = Rng::new(seed);
    let max_bucket = code_lens.iter().map(|l| l / 16).max().unwrap_or(0);
    let mut buckets = vec![Vec::new(); max_bucket + 1];
    for (i, &len) in code_lens.iter().enumerate() {
        buckets[len / 16].push(i);
    }
    let mut order = Vec::with_capacity(code_lens.len());
    for mut b in buckets {
        rng.shuffle(&mut b);
        order.extend(b);
    }
    Ok(order
        .chunks(batch_size)
        .map(|c| Batch {
            indices: c.to_vec(),
        })
        .collect())
}

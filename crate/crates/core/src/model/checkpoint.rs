//! Checkpoint file: magic `Q2Q1`, format version (u32), the model config as
//! a length-prefixed `key=value` block, a tensor count (u32) and the tensor
//! blocks, then the code and title vocabularies as length-prefixed
//! vocabulary-file text. Integers are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::{read_tensor_block, write_tensor_block};
use crate::numerics::io_util::{read_bytes, read_u32};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"Q2Q1";
pub const CHECKPOINT_VERSION: u32 = 1;

static ARTIFACT_READS: AtomicU64 = AtomicU64::new(0);

/// Number of model or index files read from disk by this process.
pub fn artifact_reads() -> u64 {
    ARTIFACT_READS.load(Ordering::Relaxed)
}

pub(crate) fn note_artifact_read() {
    ARTIFACT_READS.fetch_add(1, Ordering::Relaxed);
}

/// A trained model with the vocabularies it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub code_vocab: Vocabulary,
    pub title_vocab: Vocabulary,
}

fn write_block<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_text_block<R: Read>(r: &mut R, what: &str) -> Result<String> {
    let n = read_u32(r, what)? as usize;
    String::from_utf8(read_bytes(r, n, what)?)
        .map_err(|_| Error::Format(format!("{what} is not UTF-8")))
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        params: ModelParams,
        code_vocab: Vocabulary,
        title_vocab: Vocabulary,
    ) -> Result<Self> {
        config.validate()?;
        let ck = Checkpoint {
            config,
            params,
            code_vocab,
            title_vocab,
        };
        ck.check_consistency()?;
        Ok(ck)
    }

    fn check_consistency(&self) -> Result<()> {
        if self.code_vocab.len() != self.config.code_vocab_size {
            return Err(Error::Format(format!(
                "code vocabulary: expected {} entries, found {}",
                self.config.code_vocab_size,
                self.code_vocab.len()
            )));
        }
        if self.title_vocab.len() != self.config.title_vocab_size {
            return Err(Error::Format(format!(
                "title vocabulary: expected {} entries, found {}",
                self.config.title_vocab_size,
                self.title_vocab.len()
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        write_block(w, self.config.to_kv().as_bytes())?;
        let named = self.params.named(&self.config);
        w.write_all(&(named.len() as u32).to_le_bytes())?;
        for (name, t) in named {
            write_tensor_block(w, &name, t)?;
        }
        write_block(w, self.code_vocab.to_text().as_bytes())?;
        write_block(w, self.title_vocab.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated before magic".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(CHECKPOINT_MAGIC),
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = read_u32(r, "format version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "format version: expected {CHECKPOINT_VERSION}, found {version}"
            )));
        }
        let config = ModelConfig::from_kv(&read_text_block(r, "config block")?)?;
        let count = read_u32(r, "tensor count")? as usize;
        if count > 1024 {
            return Err(Error::Format(format!("implausible tensor count {count}")));
        }
        let mut named = Vec::with_capacity(count);
        for _ in 0..count {
            named.push(read_tensor_block(r)?);
        }
        let params = ModelParams::from_named(&config, named)?;
        let code_vocab = Vocabulary::read_from(read_text_block(r, "code vocabulary")?.as_bytes())?;
        let title_vocab = Vocabulary::read_from(read_text_block(r, "title vocabulary")?.as_bytes())?;
        let ck = Checkpoint {
            config,
            params,
            code_vocab,
            title_vocab,
        };
        ck.check_consistency()?;
        Ok(ck)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::from(e).at(&tmp))?;
        fs::rename(&tmp, path).map_err(|e| Error::from(e).at(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        note_artifact_read();
        let bytes = fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| e.at(path))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let ck = Checkpoint::read_from(&mut r)?;
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(ck)
    }
}

use serde::Deserialize;
use titlegen_core::model::ModelConfig;
use titlegen_core::training::TrainConfig;

/// `[model]` table. Vocabulary sizes come from the vocabularies, not here.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub emb_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub attn_dim: usize,
    pub coverage_weight: f64,
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSection {
            emb_dim: d.emb_dim,
            enc_hidden: d.enc_hidden,
            dec_hidden: d.dec_hidden,
            attn_dim: d.attn_dim,
            coverage_weight: d.coverage_weight,
            dropout_rate: d.dropout_rate,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self, code_vocab_size: usize, title_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            emb_dim: self.emb_dim,
            enc_hidden: self.enc_hidden,
            dec_hidden: self.dec_hidden,
            attn_dim: self.attn_dim,
            coverage_weight: self.coverage_weight,
            dropout_rate: self.dropout_rate,
            code_vocab_size,
            title_vocab_size,
            ..ModelConfig::default()
        }
    }
}

/// `[vocab]` table, used when `train` builds its own vocabularies.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub code_max_size: usize,
    pub code_min_count: u64,
    pub title_max_size: usize,
    /// Above 1 so that one-off identifiers stay out of the title vocabulary
    /// and are learned through copying.
    pub title_min_count: u64,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection {
            code_max_size: 50_000,
            code_min_count: 1,
            title_max_size: 50_000,
            title_min_count: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub vocab: VocabSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

use crate::error::{Error, Result};

/// Network hyperparameters. Encoder depth is fixed at two bidirectional
/// layers and the decoder at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub attn_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub code_vocab_size: usize,
    pub title_vocab_size: usize,
    pub coverage_weight: f64,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            emb_dim: 64,
            enc_hidden: 64,
            dec_hidden: 128,
            attn_dim: 64,
            enc_layers: 2,
            dec_layers: 1,
            code_vocab_size: 0,
            title_vocab_size: 0,
            coverage_weight: 1.0,
            dropout_rate: 0.2,
        }
    }
}

impl ModelConfig {
    /// Width of an encoder annotation and of the snippet embedding.
    pub fn annotation_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("emb_dim", self.emb_dim),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("attn_dim", self.attn_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.enc_layers != 2 || self.dec_layers != 1 {
            return Err(Error::InvalidArgument(
                "the encoder has exactly 2 layers and the decoder exactly 1".into(),
            ));
        }
        if self.code_vocab_size <= crate::corpus::NUM_SPECIALS
            || self.title_vocab_size <= crate::corpus::NUM_SPECIALS
        {
            return Err(Error::InvalidArgument(
                "vocabulary sizes must exceed the special-token count".into(),
            ));
        }
        if !(self.coverage_weight >= 0.0 && self.coverage_weight.is_finite()) {
            return Err(Error::InvalidArgument("coverage_weight must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// `key=value` lines, fixed key order.
    pub fn to_kv(&self) -> String {
        format!(
            "emb_dim={}\nenc_hidden={}\ndec_hidden={}\nattn_dim={}\nenc_layers={}\ndec_layers={}\n\
             code_vocab_size={}\ntitle_vocab_size={}\ncoverage_weight={:?}\ndropout_rate={:?}\n",
            self.emb_dim,
            self.enc_hidden,
            self.dec_hidden,
            self.attn_dim,
            self.enc_layers,
            self.dec_layers,
            self.code_vocab_size,
            self.title_vocab_size,
            self.coverage_weight,
            self.dropout_rate
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        let mut seen = 0usize;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line without '=': {line}")))?;
            let bad = || Error::Format(format!("bad value for {k}: {v}"));
            let int = || v.parse::<usize>().map_err(|_| bad());
            let real = || v.parse::<f64>().map_err(|_| bad());
            match k {
                "emb_dim" => cfg.emb_dim = int()?,
                "enc_hidden" => cfg.enc_hidden = int()?,
                "dec_hidden" => cfg.dec_hidden = int()?,
                "attn_dim" => cfg.attn_dim = int()?,
                "enc_layers" => cfg.enc_layers = int()?,
                "dec_layers" => cfg.dec_layers = int()?,
                "code_vocab_size" => cfg.code_vocab_size = int()?,
                "title_vocab_size" => cfg.title_vocab_size = int()?,
                "coverage_weight" => cfg.coverage_weight = real()?,
                "dropout_rate" => cfg.dropout_rate = real()?,
                _ => return Err(Error::Format(format!("unknown config key {k}"))),
            }
            seen += 1;
        }
        if seen != 10 {
            return Err(Error::Format(format!("config block has {seen} of 10 keys")));
        }
        cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(cfg)
    }
}

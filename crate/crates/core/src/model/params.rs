use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::{LstmWeights, Rng, Tensor};

const INIT_SCALE: f64 = 0.1;

/// Every trainable tensor of the network. The same layout doubles as the
/// gradient accumulator (see [`ModelParams::zeros_like`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub code_emb: Tensor,
    pub title_emb: Tensor,
    /// Layer 1 forward, layer 1 backward, layer 2 forward, layer 2 backward.
    pub enc: [LstmWeights; 4],
    pub bridge_h_w: Tensor,
    pub bridge_h_b: Tensor,
    pub bridge_c_w: Tensor,
    pub bridge_c_b: Tensor,
    /// Projection of encoder annotations into attention space.
    pub attn_key_w: Tensor,
    pub attn_b: Tensor,
    /// Projection of the decoder state into attention space.
    pub attn_query_w: Tensor,
    pub attn_cov_w: Tensor,
    pub attn_v: Tensor,
    pub dec: LstmWeights,
    pub out_w: Tensor,
    pub out_b: Tensor,
    pub gen_ctx_w: Tensor,
    pub gen_h_w: Tensor,
    pub gen_emb_w: Tensor,
    pub gen_b: Tensor,
}

pub const ENC_NAMES: [&str; 4] = ["enc.l1.fwd", "enc.l1.bwd", "enc.l2.fwd", "enc.l2.bwd"];

impl ModelParams {
    /// Uniform(-0.1, 0.1) weights, zero biases, forget-gate biases at +1.
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let (e, he, hd, a) = (cfg.emb_dim, cfg.enc_hidden, cfg.dec_hidden, cfg.attn_dim);
        let d = cfg.annotation_dim();
        let mut u = |shape: &[usize]| Tensor::uniform(shape, -INIT_SCALE, INIT_SCALE, rng);
        let code_emb = u(&[cfg.code_vocab_size, e]);
        let title_emb = u(&[cfg.title_vocab_size, e]);
        let bridge_h_w = u(&[hd, d]);
        let bridge_c_w = u(&[hd, d]);
        let attn_key_w = u(&[a, d]);
        let attn_query_w = u(&[a, hd]);
        let attn_cov_w = u(&[a]);
        let attn_v = u(&[a]);
        let out_w = u(&[cfg.title_vocab_size, hd + d]);
        let gen_ctx_w = u(&[d]);
        let gen_h_w = u(&[hd]);
        let gen_emb_w = u(&[e]);
        let enc = [
            LstmWeights::init(e, he, INIT_SCALE, rng),
            LstmWeights::init(e, he, INIT_SCALE, rng),
            LstmWeights::init(d, he, INIT_SCALE, rng),
            LstmWeights::init(d, he, INIT_SCALE, rng),
        ];
        let dec = LstmWeights::init(e + d, hd, INIT_SCALE, rng);
        ModelParams {
            code_emb,
            title_emb,
            enc,
            bridge_h_w,
            bridge_h_b: Tensor::zeros(&[hd]),
            bridge_c_w,
            bridge_c_b: Tensor::zeros(&[hd]),
            attn_key_w,
            attn_b: Tensor::zeros(&[a]),
            attn_query_w,
            attn_cov_w,
            attn_v,
            dec,
            out_w,
            out_b: Tensor::zeros(&[cfg.title_vocab_size]),
            gen_ctx_w,
            gen_h_w,
            gen_emb_w,
            gen_b: Tensor::zeros(&[1]),
        }
    }

    /// All-zero tensors with the layout of `self`.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.fill(0.0));
        z
    }

    /// Expected `(name, shape)` of every tensor for `cfg`, in storage order.
    pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let (e, he, hd, a) = (cfg.emb_dim, cfg.enc_hidden, cfg.dec_hidden, cfg.attn_dim);
        let d = cfg.annotation_dim();
        let mut v: Vec<(String, Vec<usize>)> = vec![
            ("code_emb".into(), vec![cfg.code_vocab_size, e]),
            ("title_emb".into(), vec![cfg.title_vocab_size, e]),
        ];
        for (i, name) in ENC_NAMES.iter().enumerate() {
            let input = if i < 2 { e } else { d };
            v.push((format!("{name}.w"), vec![4 * he, input + he]));
            v.push((format!("{name}.b"), vec![4 * he]));
        }
        v.extend([
            ("bridge.h.w".into(), vec![hd, d]),
            ("bridge.h.b".into(), vec![hd]),
            ("bridge.c.w".into(), vec![hd, d]),
            ("bridge.c.b".into(), vec![hd]),
            ("attn.key.w".into(), vec![a, d]),
            ("attn.b".into(), vec![a]),
            ("attn.query.w".into(), vec![a, hd]),
            ("attn.cov.w".into(), vec![a]),
            ("attn.v".into(), vec![a]),
            ("dec.w".into(), vec![4 * hd, e + d + hd]),
            ("dec.b".into(), vec![4 * hd]),
            ("out.w".into(), vec![cfg.title_vocab_size, hd + d]),
            ("out.b".into(), vec![cfg.title_vocab_size]),
            ("gen.ctx.w".into(), vec![d]),
            ("gen.h.w".into(), vec![hd]),
            ("gen.emb.w".into(), vec![e]),
            ("gen.b".into(), vec![1]),
        ]);
        v
    }

    /// Tensors in storage order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.code_emb, &self.title_emb];
        for l in &self.enc {
            v.push(&l.w);
            v.push(&l.b);
        }
        v.extend([
            &self.bridge_h_w,
            &self.bridge_h_b,
            &self.bridge_c_w,
            &self.bridge_c_b,
            &self.attn_key_w,
            &self.attn_b,
            &self.attn_query_w,
            &self.attn_cov_w,
            &self.attn_v,
            &self.dec.w,
            &self.dec.b,
            &self.out_w,
            &self.out_b,
            &self.gen_ctx_w,
            &self.gen_h_w,
            &self.gen_emb_w,
            &self.gen_b,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.code_emb, &mut self.title_emb];
        for l in &mut self.enc {
            v.push(&mut l.w);
            v.push(&mut l.b);
        }
        v.extend([
            &mut self.bridge_h_w,
            &mut self.bridge_h_b,
            &mut self.bridge_c_w,
            &mut self.bridge_c_b,
            &mut self.attn_key_w,
            &mut self.attn_b,
            &mut self.attn_query_w,
            &mut self.attn_cov_w,
            &mut self.attn_v,
            &mut self.dec.w,
            &mut self.dec.b,
            &mut self.out_w,
            &mut self.out_b,
            &mut self.gen_ctx_w,
            &mut self.gen_h_w,
            &mut self.gen_emb_w,
            &mut self.gen_b,
        ]);
        v
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(usize, &mut Tensor)) {
        for (i, t) in self.tensors_mut().into_iter().enumerate() {
            f(i, t);
        }
    }

    /// Builds parameters from named tensors, checking every name and shape
    /// against `cfg`.
    pub fn from_named(cfg: &ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        let expected = Self::expected_shapes(cfg);
        let mut problems = Vec::new();
        if named.len() != expected.len() {
            problems.push(format!(
                "expected {} tensors, found {}",
                expected.len(),
                named.len()
            ));
        }
        for ((en, es), (fname, ft)) in expected.iter().zip(&named) {
            if en != fname || es.as_slice() != ft.shape() {
                problems.push(format!(
                    "expected {en}{es:?}, found {fname}{:?}",
                    ft.shape()
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Format(problems.join("; ")));
        }
        let mut p = Self::init(cfg, &mut Rng::new(0));
        let mut src = named.into_iter().map(|(_, t)| t);
        p.for_each_mut(|_, t| *t = src.next().expect("count checked"));
        Ok(p)
    }

    pub fn named(&self, cfg: &ModelConfig) -> Vec<(String, &Tensor)> {
        Self::expected_shapes(cfg)
            .into_iter()
            .map(|(n, _)| n)
            .zip(self.tensors())
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_values());
        for t in self.tensors() {
            v.extend_from_slice(t.data());
        }
        v
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.for_each_mut(|_, t| {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        });
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.for_each_mut(|_, t| t.scale(k));
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum_squares()).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data().iter().all(|v| v.is_finite()))
    }
}

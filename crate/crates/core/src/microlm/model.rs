//! Pre-LayerNorm causal transformer over embedding sequences.
//!
//! Positions are learned absolute embeddings added inside [`forward`] starting at
//! `start_pos`, so callers assemble raw token / visual embeddings and choose where the
//! sequence sits in the layout.

use std::fs;
use std::path::Path;

use numkit::{Bound, ParamStore, SplitMix64, Tape, Tensor, Var};

use super::config::LmConfig;
use super::tokenizer::{Tokenizer, EOS};
use crate::error::{Error, Result};

pub const TOK: &str = "lm.tok";
pub const POS: &str = "lm.pos";
pub const LNF_G: &str = "lm.lnf.g";
pub const LNF_B: &str = "lm.lnf.b";
pub const HEAD: &str = "lm.head";
pub const CONFIG_FILE: &str = "config.json";

fn layer_param(layer: usize, name: &str) -> String {
    format!("lm.l{layer}.{name}")
}

/// Adds freshly initialized LM parameters to `store`.
pub fn init_lm(store: &mut ParamStore, cfg: &LmConfig) -> Result<()> {
    cfg.validate()?;
    let mut rng = SplitMix64::derive(cfg.seed, "microlm");
    let (c, f, v) = (cfg.model_dim, cfg.ffn_dim, cfg.vocab_size);
    let wc = (1.0 / c as f64).sqrt();
    let wf = (1.0 / f as f64).sqrt();
    store.insert(TOK, Tensor::randn(&[v, c], 0.1, &mut rng));
    store.insert(POS, Tensor::randn(&[cfg.max_positions, c], 0.02, &mut rng));
    for l in 0..cfg.layers {
        for ln in ["ln1", "ln2"] {
            store.insert(layer_param(l, &format!("{ln}.g")), Tensor::full(&[c], 1.0));
            store.insert(layer_param(l, &format!("{ln}.b")), Tensor::zeros(&[c]));
        }
        for w in ["attn.wq", "attn.wk", "attn.wv", "attn.wo"] {
            store.insert(layer_param(l, w), Tensor::randn(&[c, c], wc, &mut rng));
        }
        store.insert(layer_param(l, "ffn.w1"), Tensor::randn(&[c, f], wc, &mut rng));
        store.insert(layer_param(l, "ffn.b1"), Tensor::zeros(&[f]));
        store.insert(layer_param(l, "ffn.w2"), Tensor::randn(&[f, c], wf, &mut rng));
        store.insert(layer_param(l, "ffn.b2"), Tensor::zeros(&[c]));
    }
    store.insert(LNF_G, Tensor::full(&[c], 1.0));
    store.insert(LNF_B, Tensor::zeros(&[c]));
    store.insert(HEAD, Tensor::randn(&[c, v], wc, &mut rng));
    Ok(())
}

/// Token embedding rows for `ids` (no positional term).
pub fn embed_tokens(tape: &mut Tape<'_>, params: &Bound, ids: &[usize]) -> Result<Var> {
    Ok(tape.embedding(params.var(TOK)?, ids)?)
}

/// Final-layer states `L × C` for the embedding sequence `x` placed at `start_pos`.
pub fn forward(tape: &mut Tape<'_>, params: &Bound, cfg: &LmConfig, x: Var, start_pos: usize) -> Result<Var> {
    let len = tape.value(x).rows();
    if start_pos + len > cfg.max_positions {
        return Err(Error::ContextOverflow { needed: start_pos + len, max: cfg.max_positions });
    }
    let positions: Vec<usize> = (start_pos..start_pos + len).collect();
    let pos = tape.gather_rows(params.var(POS)?, &positions)?;
    let mut h = tape.add(x, pos)?;
    let d = cfg.head_dim();
    let scale = 1.0 / (d as f64).sqrt();
    let p = |l: usize, n: &str| params.var(&layer_param(l, n));
    for l in 0..cfg.layers {
        let a = tape.layer_norm(h, p(l, "ln1.g")?, p(l, "ln1.b")?)?;
        let q = tape.matmul(a, p(l, "attn.wq")?)?;
        let k = tape.matmul(a, p(l, "attn.wk")?)?;
        let v = tape.matmul(a, p(l, "attn.wv")?)?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for hd in 0..cfg.heads {
            let qh = tape.slice_cols(q, hd * d, d)?;
            let kh = tape.slice_cols(k, hd * d, d)?;
            let vh = tape.slice_cols(v, hd * d, d)?;
            let kt = tape.transpose(kh)?;
            let att = tape.matmul(qh, kt)?;
            let att = tape.softmax_rows(att, scale, true)?;
            heads.push(tape.matmul(att, vh)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        let o = tape.matmul(cat, p(l, "attn.wo")?)?;
        h = tape.add(h, o)?;

        let b = tape.layer_norm(h, p(l, "ln2.g")?, p(l, "ln2.b")?)?;
        let f = tape.matmul(b, p(l, "ffn.w1")?)?;
        let f = tape.add_row(f, p(l, "ffn.b1")?)?;
        let f = tape.gelu(f)?;
        let f = tape.matmul(f, p(l, "ffn.w2")?)?;
        let f = tape.add_row(f, p(l, "ffn.b2")?)?;
        h = tape.add(h, f)?;
    }
    Ok(tape.layer_norm(h, params.var(LNF_G)?, params.var(LNF_B)?)?)
}

/// Vocabulary logits for a block of final-layer states.
pub fn logits(tape: &mut Tape<'_>, params: &Bound, states: Var) -> Result<Var> {
    Ok(tape.matmul(states, params.var(HEAD)?)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutput {
    /// `L × vocab`
    pub logits: Tensor,
    /// `L × C`
    pub last_layer_states: Tensor,
}

/// A configured LM together with its parameter store. The store may also hold
/// non-LM parameters (projector, pointer) that share the checkpoint.
#[derive(Clone, Debug)]
pub struct MicroLm {
    pub config: LmConfig,
    pub params: ParamStore,
    tokenizer: Tokenizer,
}

impl MicroLm {
    pub fn new(config: LmConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        init_lm(&mut params, &config)?;
        params.round_to_f32();
        Ok(Self { config, params, tokenizer: Tokenizer })
    }

    pub fn from_parts(config: LmConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        params.get(TOK)?;
        Ok(Self { config, params, tokenizer: Tokenizer })
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// `T_q × C` token embeddings of non-empty text.
    pub fn embed_text(&self, text: &str) -> Result<Tensor> {
        let ids = self.tokenizer.encode_nonempty(text)?;
        self.embed_ids(&ids)
    }

    pub fn embed_ids(&self, ids: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let e = embed_tokens(&mut tape, &bound, ids)?;
        Ok(tape.value(e).clone())
    }

    pub fn forward(&self, input: &Tensor, start_pos: usize) -> Result<LmOutput> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let x = tape.constant(input.clone())?;
        let states = forward(&mut tape, &bound, &self.config, x, start_pos)?;
        let lg = logits(&mut tape, &bound, states)?;
        Ok(LmOutput { logits: tape.value(lg).clone(), last_layer_states: tape.value(states).clone() })
    }

    /// Greedy decoding after `prefix` (raw embeddings placed at `start_pos`); stops at
    /// EOS or after `max_new_tokens`.
    pub fn generate(&self, prefix: &Tensor, start_pos: usize, max_new_tokens: usize) -> Result<String> {
        let ids = self.generate_ids(prefix, start_pos, max_new_tokens)?;
        Ok(self.tokenizer.decode(&ids))
    }

    pub fn generate_ids(&self, prefix: &Tensor, start_pos: usize, max_new_tokens: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut seq = prefix.clone();
        for _ in 0..max_new_tokens {
            let o = self.forward(&seq, start_pos)?;
            let last = o.logits.row(o.logits.rows() - 1);
            let next = argmax(last);
            if next == EOS {
                break;
            }
            out.push(next);
            let e = self.embed_ids(&[next])?;
            seq = append_rows(&seq, &e)?;
        }
        Ok(out)
    }

    /// Sum of log-probabilities of `ids` following `prefix`.
    pub fn continuation_logprob(&self, prefix: &Tensor, start_pos: usize, ids: &[usize]) -> Result<f64> {
        if ids.is_empty() {
            return Ok(0.0);
        }
        let e = self.embed_ids(ids)?;
        let seq = append_rows(prefix, &e)?;
        let o = self.forward(&seq, start_pos)?;
        let base = prefix.rows();
        let mut total = 0.0;
        for (j, &t) in ids.iter().enumerate() {
            total += log_softmax_at(o.logits.row(base + j - 1), t);
        }
        Ok(total)
    }

    /// Writes `config.json`, the manifest and the parameter blob into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.config.save(&dir.join(CONFIG_FILE))?;
        self.params.save(dir)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config = LmConfig::load(&dir.join(CONFIG_FILE))?;
        let params = ParamStore::load(dir)?;
        Self::from_parts(config, params)
    }
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn log_softmax_at(row: &[f64], t: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row[t] - lse
}

/// Row-wise concatenation of two `· × C` tensors.
pub fn append_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(crate::error::invalid(format!("row width {} vs {}", a.cols(), b.cols())));
    }
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Ok(Tensor::new(vec![a.rows() + b.rows(), a.cols()], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MicroLm {
        MicroLm::new(LmConfig { layers: 1, heads: 2, model_dim: 8, ffn_dim: 16, max_positions: 32, seed: 4, ..LmConfig::default() })
            .unwrap()
    }

    #[test]
    fn embed_text_rules() {
        let m = tiny();
        assert_eq!(m.embed_text("abc").unwrap(), m.embed_text("abc").unwrap());
        assert_eq!(m.embed_text("héllo").unwrap().rows(), 6);
        assert!(m.embed_text("").is_err());
    }

    #[test]
    fn single_position_and_overflow() {
        let m = tiny();
        let x = m.embed_text("a").unwrap();
        let o = m.forward(&x, 0).unwrap();
        assert_eq!(o.logits.shape(), &[1, m.config.vocab_size]);
        assert_eq!(o.last_layer_states.shape(), &[1, 8]);
        assert!(matches!(m.forward(&x, 32), Err(Error::ContextOverflow { .. })));
    }

    #[test]
    fn suffix_does_not_touch_earlier_states() {
        let m = tiny();
        let short = m.embed_text("hello").unwrap();
        let long = m.embed_text("hello world").unwrap();
        let a = m.forward(&short, 0).unwrap();
        let b = m.forward(&long, 0).unwrap();
        assert_eq!(a.last_layer_states.data(), &b.last_layer_states.data()[..5 * 8]);
    }

    #[test]
    fn permuting_future_tokens_keeps_past_states() {
        let m = tiny();
        let a = m.forward(&m.embed_text("abcde").unwrap(), 0).unwrap();
        let b = m.forward(&m.embed_text("abced").unwrap(), 0).unwrap();
        let c = m.forward(&m.embed_text("abdce").unwrap(), 0).unwrap();
        assert_eq!(&a.last_layer_states.data()[..3 * 8], &b.last_layer_states.data()[..3 * 8]);
        assert_eq!(&a.last_layer_states.data()[..2 * 8], &c.last_layer_states.data()[..2 * 8]);
        assert_ne!(&a.last_layer_states.data()[3 * 8..], &b.last_layer_states.data()[3 * 8..]);
    }

    #[test]
    fn generation_is_deterministic_and_respects_budget() {
        let m = tiny();
        let p = m.embed_text("q?").unwrap();
        assert_eq!(m.generate(&p, 0, 0).unwrap(), "");
        assert_eq!(m.generate_ids(&p, 0, 5).unwrap(), m.generate_ids(&p, 0, 5).unwrap());
        assert!(m.generate_ids(&p, 0, 5).unwrap().len() <= 5);
    }

    #[test]
    fn checkpoint_reproduces_logits_bit_exactly() {
        let m = tiny();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = MicroLm::load(dir.path()).unwrap();
        let x = m.embed_text("round trip").unwrap();
        assert_eq!(m.forward(&x, 3).unwrap(), back.forward(&x, 3).unwrap());
    }
}

#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::microlm::grad_check_loss;
    use numkit::GradCheckConfig;

    #[test]
    fn lm_loss_matches_finite_differences() {
        let cfg = LmConfig { layers: 1, heads: 2, model_dim: 8, ffn_dim: 8, max_positions: 8, seed: 2, ..LmConfig::default() };
        let mut store = ParamStore::new();
        init_lm(&mut store, &cfg).unwrap();
        let ids = [104usize, 105, 33, 10];
        let r = grad_check_loss(&store, GradCheckConfig { max_elements: Some(40), ..GradCheckConfig::default() }, |tape, b| {
            let x = embed_tokens(tape, b, &ids[..3])?;
            let h = forward(tape, b, &cfg, x, 1)?;
            let lg = logits(tape, b, h)?;
            Ok(tape.cross_entropy(lg, &ids[1..], &[true, false, true])?)
        })
        .unwrap();
        assert!(r.max_relative_error < 1e-4, "{:?}", r.per_parameter_errors);
    }
}

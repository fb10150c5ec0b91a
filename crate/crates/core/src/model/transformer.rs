//! Pre-layer-norm transformer blocks shared by both architectures.

use super::mask::partial_causal_mask;
use super::params::{Architecture, AttentionIds, FeedForwardIds, LayerNormIds, ModelParams};
use super::tape::{AttnMask, Gradients, ParamId, Tape, Var};
use super::tensor::{self, Mat};
use crate::error::{Error, Result};
use crate::prompting::{SourceItem, SourceSeq, TargetSeq};
use crate::rng::SeededRng;
use crate::tokenizer::{TokenId, BOS};

/// Output of the source side: hidden rows for every source position. The
/// single-stack model re-reads its source embeddings while decoding, so
/// those are kept as well.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStates {
    pub hidden: Mat,
    pub(crate) source_embeds: Mat,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.hidden.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows() == 0
    }
}

/// Next-token distribution over the vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        Self(tensor::softmax(logits))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.0[id]
    }

    /// Highest-probability id; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Source and target of one training example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub source: SourceSeq,
    pub target: TargetSeq,
}

pub(crate) struct Dropout<'a> {
    pub p: f64,
    pub rng: Option<&'a mut SeededRng>,
}

impl Dropout<'_> {
    pub fn off() -> Dropout<'static> {
        Dropout { p: 0.0, rng: None }
    }

    fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) if self.p > 0.0 => tape.dropout(x, self.p, rng),
            _ => x,
        }
    }
}

pub(crate) enum Memory {
    /// Encoder output for cross-attention.
    Encoded(Var),
    /// Source embeddings to prepend (single stack).
    Prefix(Var, usize),
}

impl ModelParams {
    fn p(&self, tape: &mut Tape, id: ParamId) -> Var {
        tape.param(id)
    }

    fn linear(&self, tape: &mut Tape, x: Var, w: ParamId, b: ParamId) -> Var {
        let w = self.p(tape, w);
        let h = tape.matmul(x, w);
        let b = self.p(tape, b);
        tape.add_row(h, b)
    }

    fn norm(&self, tape: &mut Tape, x: Var, ids: LayerNormIds) -> Var {
        let g = self.p(tape, ids.gain);
        let b = self.p(tape, ids.bias);
        tape.layer_norm(x, g, b)
    }

    fn attention(&self, tape: &mut Tape, query: Var, keys: Var, ids: &AttentionIds, mask: &AttnMask) -> Var {
        let heads = self.config().heads;
        let dh = self.config().d / heads;
        let q = self.linear(tape, query, ids.wq, ids.bq);
        let k = self.linear(tape, keys, ids.wk, ids.bk);
        let v = self.linear(tape, keys, ids.wv, ids.bv);
        let scale = 1.0 / (dh as f64).sqrt();
        let outs: Vec<Var> = (0..heads)
            .map(|h| {
                let qh = tape.col_slice(q, h * dh, dh);
                let kh = tape.col_slice(k, h * dh, dh);
                let vh = tape.col_slice(v, h * dh, dh);
                let scores = tape.matmul_nt(qh, kh);
                let scores = tape.scale(scores, scale);
                let weights = tape.masked_softmax(scores, mask);
                tape.matmul(weights, vh)
            })
            .collect();
        let joined = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs) };
        self.linear(tape, joined, ids.wo, ids.bo)
    }

    fn feed_forward(&self, tape: &mut Tape, x: Var, ids: &FeedForwardIds) -> Var {
        let h = self.linear(tape, x, ids.w1, ids.b1);
        let h = tape.gelu(h);
        self.linear(tape, h, ids.w2, ids.b2)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let max = self.config().max_positions;
        if len > max {
            return Err(Error::SequenceTooLong { len, max });
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.vocab_size()) {
            Some(&id) => Err(Error::IdOutOfRange {
                id,
                size: self.vocab_size(),
            }),
            None => Ok(()),
        }
    }

    /// Token ids map through `tok_emb`, slot `i` through prompt row `h_i`;
    /// learned positions are added to both.
    pub(crate) fn tape_embed_source(&self, tape: &mut Tape, src: &SourceSeq) -> Result<Var> {
        self.check_len(src.len())?;
        let l = &self.layout;
        let mut rows = Vec::with_capacity(src.len());
        for item in &src.items {
            rows.push(match *item {
                SourceItem::Token(id) => {
                    self.check_ids(&[id])?;
                    (l.tok_emb, id)
                }
                SourceItem::Prompt(i) => {
                    if i >= self.num_prompts() {
                        return Err(Error::SlotOutOfRange {
                            index: i,
                            available: self.num_prompts(),
                        });
                    }
                    (l.prompt_emb, i)
                }
            });
        }
        let tok = tape.gather(rows);
        let pos = tape.gather((0..src.len()).map(|p| (l.pos_emb, p)).collect());
        Ok(tape.add(tok, pos))
    }

    fn embed_target(&self, tape: &mut Tape, prefix: &[TokenId], offset: usize) -> Result<Var> {
        self.check_ids(prefix)?;
        let l = &self.layout;
        let tok = tape.gather(prefix.iter().map(|&id| (l.tok_emb, id)).collect());
        let pos = tape.gather((0..prefix.len()).map(|p| (l.pos_emb, offset + p)).collect());
        Ok(tape.add(tok, pos))
    }

    fn run_encoder_stack(&self, tape: &mut Tape, x: Var, mask: &AttnMask, drop: &mut Dropout) -> Var {
        let mut x = drop.apply(tape, x);
        for layer in &self.layout.encoder {
            let h = self.norm(tape, x, layer.ln_attn);
            let a = self.attention(tape, h, h, &layer.attn, mask);
            let a = drop.apply(tape, a);
            x = tape.add(x, a);
            let h = self.norm(tape, x, layer.ln_ffn);
            let f = self.feed_forward(tape, h, &layer.ffn);
            let f = drop.apply(tape, f);
            x = tape.add(x, f);
        }
        self.norm(tape, x, self.layout.encoder_ln)
    }

    pub(crate) fn tape_encode(&self, tape: &mut Tape, embeds: Var, drop: &mut Dropout) -> Var {
        self.run_encoder_stack(tape, embeds, &AttnMask::Full, drop)
    }

    /// Final hidden rows for every decoder input position.
    pub(crate) fn tape_decode(
        &self,
        tape: &mut Tape,
        memory: &Memory,
        prefix: &[TokenId],
        drop: &mut Dropout,
    ) -> Result<Var> {
        match (self.config().architecture, memory) {
            (Architecture::EncDec, Memory::Encoded(enc)) => {
                self.check_len(prefix.len())?;
                let mut x = self.embed_target(tape, prefix, 0)?;
                x = drop.apply(tape, x);
                for layer in &self.layout.decoder {
                    let h = self.norm(tape, x, layer.ln_self);
                    let a = self.attention(tape, h, h, &layer.self_attn, &AttnMask::Causal);
                    let a = drop.apply(tape, a);
                    x = tape.add(x, a);
                    let h = self.norm(tape, x, layer.ln_cross);
                    let c = self.attention(tape, h, *enc, &layer.cross_attn, &AttnMask::Full);
                    let c = drop.apply(tape, c);
                    x = tape.add(x, c);
                    let h = self.norm(tape, x, layer.ln_ffn);
                    let f = self.feed_forward(tape, h, &layer.ffn);
                    let f = drop.apply(tape, f);
                    x = tape.add(x, f);
                }
                let ln = self.layout.decoder_ln.expect("encoder-decoder has a decoder norm");
                Ok(self.norm(tape, x, ln))
            }
            (Architecture::SingleStack, Memory::Prefix(src, s)) => {
                self.check_len(s + prefix.len())?;
                let tgt = self.embed_target(tape, prefix, *s)?;
                let joined = tape.concat_rows(&[*src, tgt]);
                let mask = partial_causal_mask(*s, prefix.len()).to_attn();
                let out = self.run_encoder_stack(tape, joined, &mask, drop);
                Ok(tape.row_slice(out, *s, prefix.len()))
            }
            _ => unreachable!("memory kind matches architecture"),
        }
    }

    pub(crate) fn tape_logits(&self, tape: &mut Tape, hidden: Var) -> Var {
        let emb = self.p(tape, self.layout.tok_emb);
        tape.matmul_nt(hidden, emb)
    }

    pub(crate) fn tape_memory(&self, tape: &mut Tape, src: &SourceSeq, drop: &mut Dropout) -> Result<Memory> {
        let embeds = self.tape_embed_source(tape, src)?;
        Ok(match self.config().architecture {
            Architecture::EncDec => Memory::Encoded(self.tape_encode(tape, embeds, drop)),
            Architecture::SingleStack => Memory::Prefix(embeds, src.len()),
        })
    }

    /// Summed target NLL of one example as a tape node.
    pub(crate) fn tape_example_nll(&self, tape: &mut Tape, ex: &Example, drop: &mut Dropout) -> Result<Var> {
        let target = &ex.target.ids;
        if target.is_empty() {
            return Err(Error::EmptyInput("target sequence"));
        }
        let memory = self.tape_memory(tape, &ex.source, drop)?;
        let mut input = Vec::with_capacity(target.len());
        input.push(BOS);
        input.extend_from_slice(&target[..target.len() - 1]);
        let hidden = self.tape_decode(tape, &memory, &input, drop)?;
        let logits = self.tape_logits(tape, hidden);
        Ok(tape.cross_entropy(logits, target))
    }

    fn memory_from_states(&self, tape: &mut Tape, enc: &EncoderStates) -> Memory {
        match self.config().architecture {
            Architecture::EncDec => Memory::Encoded(tape.input(enc.hidden.clone())),
            Architecture::SingleStack => {
                Memory::Prefix(tape.input(enc.source_embeds.clone()), enc.source_embeds.rows())
            }
        }
    }
}

pub fn embed_source(src: &SourceSeq, params: &ModelParams) -> Result<Mat> {
    let mut tape = Tape::new(params.values());
    let v = params.tape_embed_source(&mut tape, src)?;
    Ok(tape.value(v).clone())
}

/// Runs the source stack over precomputed source embeddings.
pub fn encode(embeds: &Mat, params: &ModelParams) -> Result<EncoderStates> {
    params.check_len(embeds.rows())?;
    if embeds.cols() != params.config().d {
        return Err(Error::ShapeMismatch(format!(
            "embeddings have width {}, model width is {}",
            embeds.cols(),
            params.config().d
        )));
    }
    let mut tape = Tape::new(params.values());
    let x = tape.input(embeds.clone());
    let h = params.tape_encode(&mut tape, x, &mut Dropout::off());
    Ok(EncoderStates {
        hidden: tape.value(h).clone(),
        source_embeds: embeds.clone(),
    })
}

pub fn encode_source(src: &SourceSeq, params: &ModelParams) -> Result<EncoderStates> {
    encode(&embed_source(src, params)?, params)
}

/// Logits (one row per prefix position) for the token following each
/// prefix position.
pub fn decoder_logits(prefix: &[TokenId], enc: &EncoderStates, params: &ModelParams) -> Result<Mat> {
    if prefix.is_empty() {
        return Err(Error::EmptyInput("decoder prefix"));
    }
    let mut tape = Tape::new(params.values());
    let memory = params.memory_from_states(&mut tape, enc);
    let hidden = params.tape_decode(&mut tape, &memory, prefix, &mut Dropout::off())?;
    let logits = params.tape_logits(&mut tape, hidden);
    Ok(tape.value(logits).clone())
}

/// Distribution of the token after `prefix`.
pub fn decode_step(prefix: &[TokenId], enc: &EncoderStates, params: &ModelParams) -> Result<Distribution> {
    if prefix.is_empty() {
        return Err(Error::EmptyInput("decoder prefix"));
    }
    let mut tape = Tape::new(params.values());
    let memory = params.memory_from_states(&mut tape, enc);
    let hidden = params.tape_decode(&mut tape, &memory, prefix, &mut Dropout::off())?;
    let last = tape.row_slice(hidden, prefix.len() - 1, 1);
    let logits = params.tape_logits(&mut tape, last);
    Ok(Distribution::from_logits(tape.value(logits).row(0)))
}

/// Mean over the batch of each example's summed target NLL.
pub fn loss(batch: &[Example], params: &ModelParams) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss batch"));
    }
    let mut total = 0.0;
    for ex in batch {
        let mut tape = Tape::new(params.values());
        let nll = params.tape_example_nll(&mut tape, ex, &mut Dropout::off())?;
        total += tape.value(nll).get(0, 0);
    }
    Ok(total / batch.len() as f64)
}

/// Mean batch loss and its exact gradient with respect to every tensor.
pub fn compute_grads(batch: &[Example], params: &ModelParams) -> Result<(f64, Gradients)> {
    compute_grads_with(batch, params, &mut Dropout::off())
}

pub(crate) fn compute_grads_with(
    batch: &[Example],
    params: &ModelParams,
    drop: &mut Dropout,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient batch"));
    }
    let mut grads = Gradients::zeros_like(params.values());
    let weight = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        let mut tape = Tape::new(params.values());
        let nll = params.tape_example_nll(&mut tape, ex, drop)?;
        total += tape.value(nll).get(0, 0);
        tape.backward(nll, weight, &mut grads);
    }
    Ok((total * weight, grads))
}

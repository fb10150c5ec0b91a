use serde::{Deserialize, Serialize};

use super::tape::ParamId;
use super::tensor::Mat;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Architecture {
    /// Separate encoder and decoder stacks with cross-attention.
    EncDec,
    /// One stack over `source ‖ target` with a partial causal mask.
    SingleStack,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_positions: usize,
    pub architecture: Architecture,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            max_positions: 512,
            architecture: Architecture::EncDec,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.layers == 0 || self.heads == 0 || self.ffn == 0 || self.max_positions == 0 {
            return Err(Error::Config("model dimensions must all be >= 1".into()));
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model.d ({}) must be divisible by model.heads ({})",
                self.d, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("model.dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Optimizer group a tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Model,
    Prompt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InitKind {
    Normal,
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub group: ParamGroup,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerNormIds {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AttentionIds {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FeedForwardIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncoderLayerIds {
    pub ln_attn: LayerNormIds,
    pub attn: AttentionIds,
    pub ln_ffn: LayerNormIds,
    pub ffn: FeedForwardIds,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecoderLayerIds {
    pub ln_self: LayerNormIds,
    pub self_attn: AttentionIds,
    pub ln_cross: LayerNormIds,
    pub cross_attn: AttentionIds,
    pub ln_ffn: LayerNormIds,
    pub ffn: FeedForwardIds,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub prompt_emb: ParamId,
    pub encoder: Vec<EncoderLayerIds>,
    pub encoder_ln: LayerNormIds,
    pub decoder: Vec<DecoderLayerIds>,
    pub decoder_ln: Option<LayerNormIds>,
}

struct Registry {
    infos: Vec<TensorInfo>,
    inits: Vec<InitKind>,
}

impl Registry {
    fn add(&mut self, name: String, group: ParamGroup, rows: usize, cols: usize, init: InitKind) -> ParamId {
        self.infos.push(TensorInfo {
            name,
            group,
            rows,
            cols,
        });
        self.inits.push(init);
        ParamId(self.infos.len() - 1)
    }

    fn layer_norm(&mut self, prefix: &str, d: usize) -> LayerNormIds {
        LayerNormIds {
            gain: self.add(format!("{prefix}.gain"), ParamGroup::Model, 1, d, InitKind::Ones),
            bias: self.add(format!("{prefix}.bias"), ParamGroup::Model, 1, d, InitKind::Zeros),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> AttentionIds {
        let mut pair = |w: &str| {
            (
                self.add(format!("{prefix}.w{w}"), ParamGroup::Model, d, d, InitKind::Normal),
                self.add(format!("{prefix}.b{w}"), ParamGroup::Model, 1, d, InitKind::Zeros),
            )
        };
        let (wq, bq) = pair("q");
        let (wk, bk) = pair("k");
        let (wv, bv) = pair("v");
        let (wo, bo) = pair("o");
        AttentionIds {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn feed_forward(&mut self, prefix: &str, d: usize, ffn: usize) -> FeedForwardIds {
        FeedForwardIds {
            w1: self.add(format!("{prefix}.w1"), ParamGroup::Model, d, ffn, InitKind::Normal),
            b1: self.add(format!("{prefix}.b1"), ParamGroup::Model, 1, ffn, InitKind::Zeros),
            w2: self.add(format!("{prefix}.w2"), ParamGroup::Model, ffn, d, InitKind::Normal),
            b2: self.add(format!("{prefix}.b2"), ParamGroup::Model, 1, d, InitKind::Zeros),
        }
    }
}

fn layout(cfg: &ModelConfig, n_prompt: usize, vocab_size: usize) -> (Layout, Registry) {
    let d = cfg.d;
    let mut reg = Registry {
        infos: Vec::new(),
        inits: Vec::new(),
    };
    let tok_emb = reg.add("tok_emb".into(), ParamGroup::Model, vocab_size, d, InitKind::Normal);
    let pos_emb = reg.add("pos_emb".into(), ParamGroup::Model, cfg.max_positions, d, InitKind::Normal);
    let prompt_emb = reg.add("prompt_emb".into(), ParamGroup::Prompt, n_prompt, d, InitKind::Normal);
    let encoder = (0..cfg.layers)
        .map(|l| EncoderLayerIds {
            ln_attn: reg.layer_norm(&format!("enc.{l}.ln_attn"), d),
            attn: reg.attention(&format!("enc.{l}.attn"), d),
            ln_ffn: reg.layer_norm(&format!("enc.{l}.ln_ffn"), d),
            ffn: reg.feed_forward(&format!("enc.{l}.ffn"), d, cfg.ffn),
        })
        .collect();
    let encoder_ln = reg.layer_norm("enc.ln_out", d);
    let (decoder, decoder_ln) = match cfg.architecture {
        Architecture::EncDec => {
            let layers = (0..cfg.layers)
                .map(|l| DecoderLayerIds {
                    ln_self: reg.layer_norm(&format!("dec.{l}.ln_self"), d),
                    self_attn: reg.attention(&format!("dec.{l}.self_attn"), d),
                    ln_cross: reg.layer_norm(&format!("dec.{l}.ln_cross"), d),
                    cross_attn: reg.attention(&format!("dec.{l}.cross_attn"), d),
                    ln_ffn: reg.layer_norm(&format!("dec.{l}.ln_ffn"), d),
                    ffn: reg.feed_forward(&format!("dec.{l}.ffn"), d, cfg.ffn),
                })
                .collect();
            (layers, Some(reg.layer_norm("dec.ln_out", d)))
        }
        Architecture::SingleStack => (Vec::new(), None),
    };
    (
        Layout {
            tok_emb,
            pos_emb,
            prompt_emb,
            encoder,
            encoder_ln,
            decoder,
            decoder_ln,
        },
        reg,
    )
}

pub(crate) fn expected_infos(cfg: &ModelConfig, n_prompt: usize, vocab_size: usize) -> Vec<TensorInfo> {
    layout(cfg, n_prompt, vocab_size).1.infos
}

pub const INIT_STD: f64 = 0.02;

/// All trainable tensors of the model. The output projection is tied to
/// `tok_emb`.
#[derive(Clone, Debug)]
pub struct ModelParams {
    config: ModelConfig,
    vocab_size: usize,
    n_prompt: usize,
    infos: Vec<TensorInfo>,
    values: Vec<Mat>,
    pub(crate) layout: Layout,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.vocab_size == other.vocab_size
            && self.n_prompt == other.n_prompt
            && self.infos == other.infos
            && self.values == other.values
    }
}

/// Weight matrices and embeddings ~ Normal(0, 0.02); biases 0; layer-norm
/// gains 1. Tensors are drawn in layout order from one seeded stream.
pub fn init_params(cfg: &ModelConfig, n_prompt: usize, vocab_size: usize, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    if vocab_size == 0 {
        return Err(Error::Config("vocabulary is empty".into()));
    }
    let (layout, reg) = layout(cfg, n_prompt, vocab_size);
    let mut rng = SeededRng::new(seed);
    let values = reg
        .infos
        .iter()
        .zip(&reg.inits)
        .map(|(info, init)| match init {
            InitKind::Zeros => Mat::zeros(info.rows, info.cols),
            InitKind::Ones => Mat::filled(info.rows, info.cols, 1.0),
            InitKind::Normal => Mat::from_vec(
                info.rows,
                info.cols,
                (0..info.rows * info.cols).map(|_| rng.normal(0.0, INIT_STD)).collect(),
            ),
        })
        .collect();
    Ok(ModelParams {
        config: cfg.clone(),
        vocab_size,
        n_prompt,
        infos: reg.infos,
        values,
        layout,
    })
}

impl ModelParams {
    /// Reassembles parameters from stored tensors, checking names and shapes
    /// against the layout implied by the config.
    pub fn from_tensors(
        cfg: &ModelConfig,
        n_prompt: usize,
        vocab_size: usize,
        tensors: Vec<(TensorInfo, Mat)>,
    ) -> Result<Self> {
        cfg.validate()?;
        let (layout, reg) = layout(cfg, n_prompt, vocab_size);
        if tensors.len() != reg.infos.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, found {}",
                reg.infos.len(),
                tensors.len()
            )));
        }
        let mut values = Vec::with_capacity(tensors.len());
        for (expected, (info, value)) in reg.infos.iter().zip(tensors) {
            if *expected != info || value.shape() != (info.rows, info.cols) {
                return Err(Error::ShapeMismatch(format!(
                    "tensor `{}` {}x{} does not match expected `{}` {}x{}",
                    info.name, value.rows(), value.cols(), expected.name, expected.rows, expected.cols
                )));
            }
            values.push(value);
        }
        let params = ModelParams {
            config: cfg.clone(),
            vocab_size,
            n_prompt,
            infos: reg.infos,
            values,
            layout,
        };
        params.check_finite()?;
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_prompts(&self) -> usize {
        self.n_prompt
    }

    pub fn infos(&self) -> &[TensorInfo] {
        &self.infos
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Mat] {
        &mut self.values
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.infos.iter().position(|i| i.name == name).map(ParamId)
    }

    pub fn tensor(&self, name: &str) -> Option<&Mat> {
        self.id(name).map(|id| &self.values[id.0])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.id(name).map(|id| &mut self.values[id.0])
    }

    pub fn token_embeddings(&self) -> &Mat {
        &self.values[self.layout.tok_emb.0]
    }

    pub fn prompt_embeddings(&self) -> &Mat {
        &self.values[self.layout.prompt_emb.0]
    }

    pub fn prompt_embeddings_mut(&mut self) -> &mut Mat {
        &mut self.values[self.layout.prompt_emb.0]
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.infos.iter().zip(&self.values).find(|(_, v)| !v.is_finite()) {
            Some((info, _)) => Err(Error::InvalidParams(format!("tensor `{}` has non-finite entries", info.name))),
            None => Ok(()),
        }
    }
}

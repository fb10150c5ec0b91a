//! Infilling sources, sentinel-delimited targets and decoder preambles.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::{type_tokens, Instance, RelationSchema};
use crate::error::{Error, Result};
use crate::tokenizer::{self, TokenId, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemplateVariant {
    /// `x . v[0..n) [X] e_h v[n..2n) [Y] e_t v[2n..3n) [Z] .`
    ContinuousInfill,
    /// `x . the relation between [X] e_h and [Y] e_t is [Z] .`
    ManualDiscrete,
    /// `x . v t_h e_h v t_t e_t v [Z] .`
    TypesInSource,
    /// `x . v e_h v e_t v [Z] .`
    EntitiesOnly,
    /// `x . v[0..3n) [Z] .`
    NoEntities,
    /// `x`, target is the bare verbalization.
    VanillaSeq2seq,
}

impl TemplateVariant {
    pub const ALL: [TemplateVariant; 6] = [
        Self::ContinuousInfill,
        Self::ManualDiscrete,
        Self::TypesInSource,
        Self::EntitiesOnly,
        Self::NoEntities,
        Self::VanillaSeq2seq,
    ];

    /// Whether the target spells out the entity types before the relation.
    pub fn predicts_types(self) -> bool {
        matches!(self, Self::ContinuousInfill | Self::ManualDiscrete)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ContinuousInfill => "CONTINUOUS_INFILL",
            Self::ManualDiscrete => "MANUAL_DISCRETE",
            Self::TypesInSource => "TYPES_IN_SOURCE",
            Self::EntitiesOnly => "ENTITIES_ONLY",
            Self::NoEntities => "NO_ENTITIES",
            Self::VanillaSeq2seq => "VANILLA_SEQ2SEQ",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SentinelStyle {
    /// `[X] [Y] [Z] [W]`
    Distinct,
    /// Every sentinel is `[MASK]`.
    UniformMask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerbalizerMode {
    Full,
    Handmade,
    RelId,
}

impl VerbalizerMode {
    pub const ALL: [VerbalizerMode; 3] = [Self::Full, Self::Handmade, Self::RelId];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "FULL",
            Self::Handmade => "HANDMADE",
            Self::RelId => "REL_ID",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemplateConfig {
    pub variant: TemplateVariant,
    pub n: usize,
    pub sentinel_style: SentinelStyle,
    pub verbalizer_mode: VerbalizerMode,
    pub max_source_len: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            variant: TemplateVariant::ContinuousInfill,
            n: 3,
            sentinel_style: SentinelStyle::Distinct,
            verbalizer_mode: VerbalizerMode::Full,
            max_source_len: 512,
        }
    }
}

impl TemplateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_source_len < 16 {
            return Err(Error::Config(format!(
                "template.max_source_len must be >= 16, got {}",
                self.max_source_len
            )));
        }
        Ok(())
    }

    /// Number of trainable prompt embeddings the template needs (`n2 = 3n`).
    pub fn num_prompts(&self) -> usize {
        3 * self.n
    }

    /// Sentinel ids for `[X] [Y] [Z] [W]` under the configured style.
    pub fn sentinels(&self) -> [TokenId; 4] {
        match self.sentinel_style {
            SentinelStyle::Distinct => [
                tokenizer::SENT_X,
                tokenizer::SENT_Y,
                tokenizer::SENT_Z,
                tokenizer::SENT_W,
            ],
            SentinelStyle::UniformMask => [tokenizer::MASK; 4],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceItem {
    Token(TokenId),
    /// Placeholder replaced by trainable prompt embedding `h_i`.
    Prompt(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceSeq {
    pub items: Vec<SourceItem>,
    pub sentinel_positions: Vec<usize>,
    /// Template copies of the entity mentions (not the spans inside `x`).
    pub head_mention: Option<Range<usize>>,
    pub tail_mention: Option<Range<usize>>,
}

impl SourceSeq {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn slot_indices(&self) -> Vec<usize> {
        self.items
            .iter()
            .filter_map(|item| match item {
                SourceItem::Prompt(i) => Some(*i),
                SourceItem::Token(_) => None,
            })
            .collect()
    }
}

struct SourceBuilder {
    items: Vec<SourceItem>,
    sentinels: Vec<usize>,
}

impl SourceBuilder {
    fn tokens(&mut self, ids: &[TokenId]) -> Range<usize> {
        let start = self.items.len();
        self.items.extend(ids.iter().map(|&t| SourceItem::Token(t)));
        start..self.items.len()
    }

    fn prompts(&mut self, range: Range<usize>) {
        self.items.extend(range.map(SourceItem::Prompt));
    }

    fn sentinel(&mut self, id: TokenId) {
        self.sentinels.push(self.items.len());
        self.items.push(SourceItem::Token(id));
    }
}

fn type_ids(entity_type: &str, vocab: &Vocab, record: &str) -> Result<Vec<TokenId>> {
    let words = type_tokens(entity_type);
    if words.is_empty() {
        return Err(Error::InvalidInstance {
            record: record.to_string(),
            message: format!("entity type `{entity_type}` has no tokens"),
        });
    }
    vocab.require_all(&words, &format!("entity type of {record}"))
}

pub fn build_source(inst: &Instance, cfg: &TemplateConfig, vocab: &Vocab) -> Result<SourceSeq> {
    let sentence = tokenizer::encode_tokens(&inst.tokens, vocab);
    let head = tokenizer::encode_tokens(inst.head_tokens(), vocab);
    let tail = tokenizer::encode_tokens(inst.tail_tokens(), vocab);
    let period = vocab.require(".", "template")?;
    let [s_x, s_y, s_z, _] = cfg.sentinels();
    let n = cfg.n;

    let mut b = SourceBuilder {
        items: Vec::new(),
        sentinels: Vec::new(),
    };
    let mut head_mention = None;
    let mut tail_mention = None;
    if cfg.variant != TemplateVariant::VanillaSeq2seq {
        b.tokens(&[period]);
    }
    match cfg.variant {
        TemplateVariant::ContinuousInfill => {
            b.prompts(0..n);
            b.sentinel(s_x);
            head_mention = Some(b.tokens(&head));
            b.prompts(n..2 * n);
            b.sentinel(s_y);
            tail_mention = Some(b.tokens(&tail));
            b.prompts(2 * n..3 * n);
            b.sentinel(s_z);
            b.tokens(&[period]);
        }
        TemplateVariant::ManualDiscrete => {
            let words = vocab.require_all(&["the", "relation", "between"], "template")?;
            b.tokens(&words);
            b.sentinel(s_x);
            head_mention = Some(b.tokens(&head));
            b.tokens(&[vocab.require("and", "template")?]);
            b.sentinel(s_y);
            tail_mention = Some(b.tokens(&tail));
            b.tokens(&[vocab.require("is", "template")?]);
            b.sentinel(s_z);
            b.tokens(&[period]);
        }
        TemplateVariant::TypesInSource => {
            b.prompts(0..n);
            b.tokens(&type_ids(&inst.head_type, vocab, &inst.id)?);
            head_mention = Some(b.tokens(&head));
            b.prompts(n..2 * n);
            b.tokens(&type_ids(&inst.tail_type, vocab, &inst.id)?);
            tail_mention = Some(b.tokens(&tail));
            b.prompts(2 * n..3 * n);
            b.sentinel(s_z);
            b.tokens(&[period]);
        }
        TemplateVariant::EntitiesOnly => {
            b.prompts(0..n);
            head_mention = Some(b.tokens(&head));
            b.prompts(n..2 * n);
            tail_mention = Some(b.tokens(&tail));
            b.prompts(2 * n..3 * n);
            b.sentinel(s_z);
            b.tokens(&[period]);
        }
        TemplateVariant::NoEntities => {
            b.prompts(0..3 * n);
            b.sentinel(s_z);
            b.tokens(&[period]);
        }
        TemplateVariant::VanillaSeq2seq => {}
    }

    // the template goes after x, so overflow is resolved by dropping the
    // rightmost sentence tokens
    let overhead = b.items.len();
    let mut keep = sentence.len();
    if keep + overhead > cfg.max_source_len {
        keep = cfg.max_source_len.saturating_sub(overhead);
        let last_entity_token = inst.head_span.1.max(inst.tail_span.1);
        if keep <= last_entity_token {
            return Err(Error::Truncation {
                record: inst.id.clone(),
                max_len: cfg.max_source_len,
            });
        }
    }
    let shift = |r: Range<usize>| r.start + keep..r.end + keep;
    let mut items: Vec<SourceItem> = sentence[..keep].iter().map(|&t| SourceItem::Token(t)).collect();
    items.extend(b.items);
    Ok(SourceSeq {
        items,
        sentinel_positions: b.sentinels.into_iter().map(|p| p + keep).collect(),
        head_mention: head_mention.map(shift),
        tail_mention: tail_mention.map(shift),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSeq {
    pub ids: Vec<TokenId>,
    pub head_type: Option<Range<usize>>,
    pub tail_type: Option<Range<usize>>,
    pub relation: Range<usize>,
}

impl TargetSeq {
    pub fn relation_ids(&self) -> &[TokenId] {
        &self.ids[self.relation.clone()]
    }
}

/// Token sequence standing for relation `index` under `mode`.
pub fn relation_tokens(
    schema: &RelationSchema,
    index: usize,
    mode: VerbalizerMode,
    vocab: &Vocab,
) -> Result<Vec<TokenId>> {
    let entry = &schema.entries()[index];
    let context = format!("verbalization of `{}`", entry.label);
    match mode {
        VerbalizerMode::Full => vocab.require_all(&entry.verbalization, &context),
        VerbalizerMode::Handmade => {
            let words = entry.handmade.as_ref().ok_or_else(|| {
                Error::Handmade(format!("HANDMADE mode but `{}` has no handmade words", entry.label))
            })?;
            vocab.require_all(words, &context)
        }
        VerbalizerMode::RelId => Ok(vec![vocab.require(&entry.rel_id_token, &context)?]),
    }
}

/// Candidate relation segments for every schema entry, in schema order.
pub fn relation_candidates(
    schema: &RelationSchema,
    mode: VerbalizerMode,
    vocab: &Vocab,
) -> Result<Vec<Vec<TokenId>>> {
    (0..schema.len())
        .map(|k| relation_tokens(schema, k, mode, vocab))
        .collect()
}

/// Target for the gold relation of `inst`.
pub fn build_target(
    inst: &Instance,
    cfg: &TemplateConfig,
    schema: &RelationSchema,
    vocab: &Vocab,
) -> Result<TargetSeq> {
    let index = schema.index_of(&inst.relation).ok_or_else(|| Error::UnknownRelation {
        record: inst.id.clone(),
        label: inst.relation.clone(),
    })?;
    let relation = relation_tokens(schema, index, cfg.verbalizer_mode, vocab)?;
    target_with_relation(inst, cfg, &relation, vocab)
}

/// Target with an arbitrary relation segment in place of the gold one.
pub fn target_with_relation(
    inst: &Instance,
    cfg: &TemplateConfig,
    relation: &[TokenId],
    vocab: &Vocab,
) -> Result<TargetSeq> {
    let [s_x, s_y, s_z, s_w] = cfg.sentinels();
    let mut ids = Vec::new();
    let mut head_type = None;
    let mut tail_type = None;
    match cfg.variant {
        v if v.predicts_types() => {
            ids.push(s_x);
            let h = type_ids(&inst.head_type, vocab, &inst.id)?;
            head_type = Some(ids.len()..ids.len() + h.len());
            ids.extend(h);
            ids.push(s_y);
            let t = type_ids(&inst.tail_type, vocab, &inst.id)?;
            tail_type = Some(ids.len()..ids.len() + t.len());
            ids.extend(t);
            ids.push(s_z);
        }
        TemplateVariant::VanillaSeq2seq => {}
        _ => ids.push(s_z),
    }
    let rel = ids.len()..ids.len() + relation.len();
    ids.extend_from_slice(relation);
    ids.push(if cfg.variant == TemplateVariant::VanillaSeq2seq {
        tokenizer::EOS
    } else {
        s_w
    });
    if ids.contains(&tokenizer::UNK) {
        return Err(Error::OutOfVocabulary {
            token: "<unk>".into(),
            context: format!("target of {}", inst.id),
        });
    }
    Ok(TargetSeq {
        ids,
        head_type,
        tail_type,
        relation: rel,
    })
}

/// Decoder input that precedes the relation segment at inference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preamble {
    pub ids: Vec<TokenId>,
    pub head_type: Option<Range<usize>>,
    pub tail_type: Option<Range<usize>>,
}

/// `<s> [X] t_h [Y] t_t [Z]` with distinct sentinels.
pub fn build_preamble(inst: &Instance, vocab: &Vocab) -> Result<Preamble> {
    decoder_seed(inst, &TemplateConfig::default(), vocab)
}

/// Variant-aware preamble: `<s>` followed by everything the target holds
/// before the relation segment (`<s>` alone for the vanilla variant).
pub fn decoder_seed(inst: &Instance, cfg: &TemplateConfig, vocab: &Vocab) -> Result<Preamble> {
    let target = target_with_relation(inst, cfg, &[], vocab)?;
    let mut ids = vec![tokenizer::BOS];
    ids.extend_from_slice(&target.ids[..target.relation.start]);
    let shift = |r: Range<usize>| r.start + 1..r.end + 1;
    Ok(Preamble {
        ids,
        head_type: target.head_type.map(shift),
        tail_type: target.tail_type.map(shift),
    })
}

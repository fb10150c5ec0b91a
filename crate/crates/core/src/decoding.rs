//! Relation scoring over a trained model: entity-guided decoding, type
//! filtering, argmax prediction and the sequence-likelihood baseline.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Instance, RelationSchema, TypeCompatMap};
use crate::error::{Error, Result};
use crate::model::{decode_step, decoder_logits, encode_source, tensor, EncoderStates, ModelParams};
use crate::prompting::{build_source, decoder_seed, relation_candidates, target_with_relation, TemplateConfig};
use crate::tokenizer::{TokenId, Vocab, BOS};

/// Cap on greedily generated type tokens when decoding without the preamble.
pub const MAX_UNGUIDED_STEPS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringMode {
    /// One greedy pass; step `j` supplies `p_{r_j}` for every candidate.
    SharedGreedy,
    /// One pass per candidate, conditioning step `j` on `r_{<j}`.
    TeacherForced,
    /// Summed log-probability of each candidate's full target.
    Likelihood,
}

impl ScoringMode {
    pub const ALL: [ScoringMode; 3] = [Self::SharedGreedy, Self::TeacherForced, Self::Likelihood];

    pub fn name(self) -> &'static str {
        match self {
            Self::SharedGreedy => "shared-greedy",
            Self::TeacherForced => "teacher-forced",
            Self::Likelihood => "likelihood",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub mode: ScoringMode,
    pub guided: bool,
    pub type_filter: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            mode: ScoringMode::SharedGreedy,
            guided: true,
            type_filter: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Mean of per-step probabilities, in `[0, 1]`.
    Probability,
    /// Summed token log-probabilities.
    LogLikelihood,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationScore {
    pub label: String,
    pub score: f64,
    /// `p_{r_j}` per verbalization token (probability mode), or per-token
    /// log-probabilities of the whole target (likelihood mode).
    pub steps: Vec<f64>,
    pub filtered: bool,
}

/// Scores for every relation, in schema order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub kind: ScoreKind,
    pub entries: Vec<RelationScore>,
}

impl ScoreTable {
    pub fn score(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.score)
    }

    pub fn filtered_labels(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| e.filtered).map(|e| e.label.as_str()).collect()
    }

    /// Highest-scoring unfiltered index, ties going to the lowest index.
    /// Falls back to the unfiltered argmax (second value `true`) when every
    /// entry is filtered out.
    pub fn argmax(&self) -> Option<(usize, bool)> {
        let pick = |allow: &dyn Fn(&RelationScore) -> bool| {
            let mut best: Option<usize> = None;
            for (i, e) in self.entries.iter().enumerate() {
                if allow(e) && best.is_none_or(|b| e.score > self.entries[b].score) {
                    best = Some(i);
                }
            }
            best
        };
        match pick(&|e| !e.filtered) {
            Some(i) => Some((i, false)),
            None => pick(&|_| true).map(|i| (i, true)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictOutcome {
    pub relation: String,
    pub index: usize,
    pub scores: ScoreTable,
    pub mode: ScoringMode,
    pub guided: bool,
    pub type_filter: bool,
    /// Every candidate was filtered, so the unfiltered argmax was used.
    pub filter_fallback: bool,
}

/// Call counts of the underlying model operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeCounters {
    pub encoder_calls: u64,
    /// Left-to-right decoding runs (one greedy run, or one scored sequence).
    pub decoder_passes: u64,
    /// Decoder forward computations.
    pub decoder_forwards: u64,
}

/// Scoring context for one trained model and schema; candidate token
/// sequences are resolved once up front.
pub struct Scorer<'a> {
    params: &'a ModelParams,
    schema: &'a RelationSchema,
    vocab: &'a Vocab,
    template: &'a TemplateConfig,
    candidates: Vec<Vec<TokenId>>,
    counters: Cell<DecodeCounters>,
}

impl<'a> Scorer<'a> {
    pub fn new(
        params: &'a ModelParams,
        schema: &'a RelationSchema,
        vocab: &'a Vocab,
        template: &'a TemplateConfig,
    ) -> Result<Self> {
        params.check_finite()?;
        if params.vocab_size() != vocab.len() {
            return Err(Error::InvalidParams(format!(
                "model vocabulary has {} rows, tokenizer has {} tokens",
                params.vocab_size(),
                vocab.len()
            )));
        }
        if params.num_prompts() != template.num_prompts() {
            return Err(Error::InvalidParams(format!(
                "model has {} prompt embeddings, template needs {}",
                params.num_prompts(),
                template.num_prompts()
            )));
        }
        if schema.is_empty() {
            return Err(Error::Schema("schema has no relations".into()));
        }
        let candidates = relation_candidates(schema, template.verbalizer_mode, vocab)?;
        if let Some(k) = candidates.iter().position(Vec::is_empty) {
            return Err(Error::Verbalize(format!("relation `{}` has an empty verbalization", schema.entries()[k].label)));
        }
        Ok(Self {
            params,
            schema,
            vocab,
            template,
            candidates,
            counters: Cell::new(DecodeCounters::default()),
        })
    }

    pub fn candidates(&self) -> &[Vec<TokenId>] {
        &self.candidates
    }

    pub fn counters(&self) -> DecodeCounters {
        self.counters.get()
    }

    pub fn reset_counters(&self) {
        self.counters.set(DecodeCounters::default());
    }

    fn bump(&self, f: impl FnOnce(&mut DecodeCounters)) {
        let mut c = self.counters.get();
        f(&mut c);
        self.counters.set(c);
    }

    fn encode(&self, inst: &Instance) -> Result<EncoderStates> {
        let src = build_source(inst, self.template, self.vocab)?;
        self.bump(|c| c.encoder_calls += 1);
        encode_source(&src, self.params)
    }

    fn step(&self, prefix: &[TokenId], enc: &EncoderStates) -> Result<Vec<f64>> {
        self.bump(|c| c.decoder_forwards += 1);
        Ok(decode_step(prefix, enc, self.params)?.probs().to_vec())
    }

    /// Log-softmax rows of one decoder forward over `input`.
    fn log_probs(&self, input: &[TokenId], enc: &EncoderStates) -> Result<Vec<Vec<f64>>> {
        self.bump(|c| {
            c.decoder_passes += 1;
            c.decoder_forwards += 1;
        });
        let logits = decoder_logits(input, enc, self.params)?;
        Ok((0..logits.rows()).map(|i| tensor::log_softmax(logits.row(i))).collect())
    }

    /// Decoder input preceding the relation segment. Guided decoding uses the
    /// gold-type preamble; otherwise the type segments are generated
    /// greedily from `<s>` until `[Z]`, which is forced after the step cap.
    fn seed(&self, inst: &Instance, enc: &EncoderStates, guided: bool) -> Result<Vec<TokenId>> {
        let seed = decoder_seed(inst, self.template, self.vocab)?.ids;
        if guided || !self.template.variant.predicts_types() {
            return Ok(seed);
        }
        let sentinels = self.template.sentinels();
        let s_z = sentinels[2];
        // With uniform sentinels `[Z]` is the third occurrence of the token.
        let needed = sentinels[..3].iter().filter(|&&t| t == s_z).count();
        let mut prefix = vec![BOS];
        let mut seen = 0;
        self.bump(|c| c.decoder_passes += 1);
        for _ in 0..MAX_UNGUIDED_STEPS {
            let next = argmax(&self.step(&prefix, enc)?);
            prefix.push(next);
            if next == s_z {
                seen += 1;
                if seen == needed {
                    return Ok(prefix);
                }
            }
        }
        prefix.push(s_z);
        Ok(prefix)
    }

    /// Length-normalized relation scores `s_r = mean_j p_{r_j}`.
    pub fn entity_guided_score(&self, inst: &Instance, mode: ScoringMode, guided: bool) -> Result<ScoreTable> {
        let enc = self.encode(inst)?;
        let seed = self.seed(inst, &enc, guided)?;
        let steps: Vec<Vec<f64>> = match mode {
            ScoringMode::SharedGreedy => {
                let len = self.candidates.iter().map(Vec::len).max().unwrap_or(0);
                let mut prefix = seed;
                let mut per_step = Vec::with_capacity(len);
                self.bump(|c| c.decoder_passes += 1);
                for j in 0..len {
                    let probs = self.step(&prefix, &enc)?;
                    if j + 1 < len {
                        prefix.push(argmax(&probs));
                    }
                    per_step.push(probs);
                }
                self.candidates
                    .iter()
                    .map(|r| r.iter().enumerate().map(|(j, &t)| per_step[j][t]).collect())
                    .collect()
            }
            ScoringMode::TeacherForced => {
                let mut out = Vec::with_capacity(self.candidates.len());
                for r in &self.candidates {
                    let mut input = seed.clone();
                    input.extend_from_slice(&r[..r.len() - 1]);
                    let rows = self.log_probs(&input, &enc)?;
                    let base = seed.len() - 1;
                    out.push(r.iter().enumerate().map(|(j, &t)| rows[base + j][t].exp()).collect());
                }
                out
            }
            ScoringMode::Likelihood => {
                return Err(Error::Config(
                    "likelihood scoring is not an entity-guided mode; use likelihood_scores".into(),
                ))
            }
        };
        Ok(self.table(ScoreKind::Probability, steps, |p| p.iter().sum::<f64>() / p.len() as f64))
    }

    /// `s_r = Σ_j log P(y_j | y_<j, T(x))` over the full target `y(r)`.
    pub fn likelihood_scores(&self, inst: &Instance) -> Result<ScoreTable> {
        let enc = self.encode(inst)?;
        let mut steps = Vec::with_capacity(self.candidates.len());
        for r in &self.candidates {
            let target = target_with_relation(inst, self.template, r, self.vocab)?.ids;
            let mut input = vec![BOS];
            input.extend_from_slice(&target[..target.len() - 1]);
            let rows = self.log_probs(&input, &enc)?;
            steps.push(target.iter().enumerate().map(|(j, &t)| rows[j][t]).collect::<Vec<f64>>());
        }
        Ok(self.table(ScoreKind::LogLikelihood, steps, |lp| lp.iter().sum()))
    }

    fn table(&self, kind: ScoreKind, steps: Vec<Vec<f64>>, reduce: impl Fn(&[f64]) -> f64) -> ScoreTable {
        ScoreTable {
            kind,
            entries: self
                .schema
                .entries()
                .iter()
                .zip(steps)
                .map(|(e, s)| RelationScore {
                    label: e.label.clone(),
                    score: reduce(&s),
                    steps: s,
                    filtered: false,
                })
                .collect(),
        }
    }

    pub fn scores(&self, inst: &Instance, cfg: &DecodeConfig) -> Result<ScoreTable> {
        match cfg.mode {
            ScoringMode::Likelihood => self.likelihood_scores(inst),
            mode => self.entity_guided_score(inst, mode, cfg.guided),
        }
    }

    /// Argmax relation after optional type filtering.
    pub fn predict(&self, inst: &Instance, compat: &TypeCompatMap, cfg: &DecodeConfig) -> Result<PredictOutcome> {
        let mut scores = self.scores(inst, cfg)?;
        if cfg.type_filter {
            scores = apply_type_filter(scores, compat, inst, self.schema);
        }
        let (index, filter_fallback) = scores.argmax().ok_or(Error::EmptyInput("score table"))?;
        Ok(PredictOutcome {
            relation: scores.entries[index].label.clone(),
            index,
            scores,
            mode: cfg.mode,
            guided: cfg.guided,
            type_filter: cfg.type_filter,
            filter_fallback,
        })
    }

    pub fn likelihood_predict(&self, inst: &Instance, compat: &TypeCompatMap, cfg: &DecodeConfig) -> Result<PredictOutcome> {
        self.predict(
            inst,
            compat,
            &DecodeConfig {
                mode: ScoringMode::Likelihood,
                ..cfg.clone()
            },
        )
    }

    pub fn predict_all(&self, data: &[Instance], compat: &TypeCompatMap, cfg: &DecodeConfig) -> Result<Vec<PredictOutcome>> {
        data.iter().map(|inst| self.predict(inst, compat, cfg)).collect()
    }
}

fn argmax(probs: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Marks relations whose admissible type pairs exclude the instance's pair.
/// The negative label is never filtered, and nothing is filtered when no
/// relation lists the instance's type pair.
pub fn apply_type_filter(
    mut scores: ScoreTable,
    compat: &TypeCompatMap,
    inst: &Instance,
    schema: &RelationSchema,
) -> ScoreTable {
    let (head, tail) = inst.type_pair();
    if !compat.covers(head, tail) {
        return scores;
    }
    for e in &mut scores.entries {
        if schema.negative_label() == Some(e.label.as_str()) {
            continue;
        }
        let listed = compat.pairs_for(&e.label).is_some_and(|set| !set.is_empty());
        if listed && !compat.allows(&e.label, head, tail) {
            e.filtered = true;
        }
    }
    scores
}

pub fn entity_guided_score(
    inst: &Instance,
    params: &ModelParams,
    schema: &RelationSchema,
    vocab: &Vocab,
    template: &TemplateConfig,
    mode: ScoringMode,
    guided: bool,
) -> Result<ScoreTable> {
    Scorer::new(params, schema, vocab, template)?.entity_guided_score(inst, mode, guided)
}

pub fn predict(
    inst: &Instance,
    params: &ModelParams,
    schema: &RelationSchema,
    vocab: &Vocab,
    template: &TemplateConfig,
    compat: &TypeCompatMap,
    cfg: &DecodeConfig,
) -> Result<PredictOutcome> {
    Scorer::new(params, schema, vocab, template)?.predict(inst, compat, cfg)
}

pub fn likelihood_predict(
    inst: &Instance,
    params: &ModelParams,
    schema: &RelationSchema,
    vocab: &Vocab,
    template: &TemplateConfig,
    compat: &TypeCompatMap,
    cfg: &DecodeConfig,
) -> Result<PredictOutcome> {
    Scorer::new(params, schema, vocab, template)?.likelihood_predict(inst, compat, cfg)
}

#[derive(Serialize)]
struct DumpRecord<'a> {
    id: &'a str,
    gold: &'a str,
    predicted: &'a str,
    scores: BTreeMap<&'a str, f64>,
    filtered: Vec<&'a str>,
    mode: ScoringMode,
    guided: bool,
    type_filter: bool,
    filter_fallback: bool,
}

/// JSON lines, one record per instance.
pub fn write_predictions(path: impl AsRef<Path>, data: &[Instance], outcomes: &[PredictOutcome]) -> Result<()> {
    if data.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: outcomes.len(),
        });
    }
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (inst, o) in data.iter().zip(outcomes) {
        let rec = DumpRecord {
            id: &inst.id,
            gold: &inst.relation,
            predicted: &o.relation,
            scores: o.scores.entries.iter().map(|e| (e.label.as_str(), e.score)).collect(),
            filtered: o.scores.filtered_labels(),
            mode: o.mode,
            guided: o.guided,
            type_filter: o.type_filter,
            filter_fallback: o.filter_fallback,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

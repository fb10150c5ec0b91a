//! Relation-classification corpora: records, relation inventories, label
//! verbalization, K-shot splits and frequency buckets.

mod synthetic;
pub mod tacred;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub use synthetic::{generate_synthetic, SynthConfig, SyntheticLexicon};

/// Inclusive token span `(start, end)`.
pub type Span = (usize, usize);

/// One labeled sentence with a marked head and tail entity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub tokens: Vec<String>,
    pub head_span: Span,
    pub tail_span: Span,
    pub head_type: String,
    pub tail_type: String,
    pub relation: String,
}

impl Instance {
    pub fn head_tokens(&self) -> &[String] {
        &self.tokens[self.head_span.0..=self.head_span.1]
    }

    pub fn tail_tokens(&self) -> &[String] {
        &self.tokens[self.tail_span.0..=self.tail_span.1]
    }

    pub fn type_pair(&self) -> (&str, &str) {
        (&self.head_type, &self.tail_type)
    }

    /// Checks every structural invariant; `load_dataset` only yields
    /// instances that pass.
    pub fn validate(&self, schema: &RelationSchema) -> Result<()> {
        let len = self.tokens.len();
        for (which, (start, end)) in [("subj", self.head_span), ("obj", self.tail_span)] {
            if start > end || end >= len {
                return Err(Error::SpanOutOfBounds {
                    record: self.id.clone(),
                    which,
                    start: start as i64,
                    end: end as i64,
                    len,
                });
            }
        }
        if self.head_type.trim().is_empty() || self.tail_type.trim().is_empty() {
            return Err(Error::InvalidInstance {
                record: self.id.clone(),
                message: "entity types must be non-empty".into(),
            });
        }
        if schema.index_of(&self.relation).is_none() {
            return Err(Error::UnknownRelation {
                record: self.id.clone(),
                label: self.relation.clone(),
            });
        }
        Ok(())
    }
}

/// Record layout of the public TACRED release. Unlisted fields are ignored.
#[derive(Debug, Serialize, Deserialize)]
pub struct TacredRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub token: Vec<String>,
    pub subj_start: i64,
    pub subj_end: i64,
    pub obj_start: i64,
    pub obj_end: i64,
    pub subj_type: String,
    pub obj_type: String,
    pub relation: String,
}

impl From<&Instance> for TacredRecord {
    fn from(inst: &Instance) -> Self {
        TacredRecord {
            id: Some(inst.id.clone()),
            token: inst.tokens.clone(),
            subj_start: inst.head_span.0 as i64,
            subj_end: inst.head_span.1 as i64,
            obj_start: inst.tail_span.0 as i64,
            obj_end: inst.tail_span.1 as i64,
            subj_type: inst.head_type.clone(),
            obj_type: inst.tail_type.clone(),
            relation: inst.relation.clone(),
        }
    }
}

impl TacredRecord {
    fn into_instance(self, fallback_id: String, schema: &RelationSchema) -> Result<Instance> {
        let record = self.id.unwrap_or(fallback_id);
        let len = self.token.len();
        let span = |which, start: i64, end: i64| -> Result<Span> {
            if start < 0 || start > end || end >= len as i64 {
                return Err(Error::SpanOutOfBounds {
                    record: record.clone(),
                    which,
                    start,
                    end,
                    len,
                });
            }
            Ok((start as usize, end as usize))
        };
        let head_span = span("subj", self.subj_start, self.subj_end)?;
        let tail_span = span("obj", self.obj_start, self.obj_end)?;
        let inst = Instance {
            id: record.clone(),
            tokens: self.token,
            head_span,
            tail_span,
            head_type: self.subj_type,
            tail_type: self.obj_type,
            relation: self.relation,
        };
        inst.validate(schema)?;
        Ok(inst)
    }
}

/// Reads a corpus file, either a JSON array of records or JSON lines.
pub fn load_dataset(path: impl AsRef<Path>, schema: &RelationSchema) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, schema)
}

pub fn parse_dataset(text: &str, schema: &RelationSchema) -> Result<Vec<Instance>> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('[') {
        let raws: Vec<&RawValue> = serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
            line: e.line(),
            message: e.to_string(),
        })?;
        raws.into_iter()
            .enumerate()
            .map(|(i, raw)| {
                let offset = raw.get().as_ptr() as usize - text.as_ptr() as usize;
                let line = text[..offset].matches('\n').count() + 1;
                let record: TacredRecord =
                    serde_json::from_str(raw.get()).map_err(|e| Error::MalformedRecord {
                        line,
                        message: e.to_string(),
                    })?;
                record.into_instance(i.to_string(), schema)
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TacredRecord =
                serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            out.push(record.into_instance(out.len().to_string(), schema)?);
        }
        Ok(out)
    }
}

/// Writes instances as a pretty-printed JSON array of TACRED records.
pub fn save_dataset(path: impl AsRef<Path>, data: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<TacredRecord> = data.iter().map(TacredRecord::from).collect();
    let mut text = serde_json::to_string_pretty(&records)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Turns a relation label into its natural-language token sequence.
///
/// `org:top_members/employees` becomes `top members or employees`: the
/// prefix up to the first `:` is dropped, `_` separates tokens and `/`
/// becomes the word `or`.
pub fn verbalize(label: &str) -> Result<Vec<String>> {
    if label.is_empty() {
        return Err(Error::Verbalize(label.to_string()));
    }
    let body = match label.split_once(':') {
        Some((_, rest)) => rest,
        None => label,
    };
    let rewritten = body.replace('_', " ").replace('/', " or ");
    let tokens: Vec<String> = rewritten.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Error::Verbalize(label.to_string()));
    }
    Ok(tokens)
}

/// Entity types enter prompts as lowercase words: `STATE_OR_PROVINCE`
/// becomes `state or province`.
pub fn type_tokens(entity_type: &str) -> Vec<String> {
    entity_type
        .to_lowercase()
        .replace('_', " ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub label: String,
    pub verbalization: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handmade: Option<Vec<String>>,
    pub rel_id_token: String,
}

pub const HANDMADE_LEN: usize = 5;

pub fn rel_id_token(index: usize) -> String {
    format!("<Rel_{index}>")
}

/// Ordered relation inventory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct RelationSchema {
    entries: Vec<RelationEntry>,
    negative_label: Option<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaRepr {
    entries: Vec<RelationEntry>,
    #[serde(default)]
    negative_label: Option<String>,
}

impl TryFrom<SchemaRepr> for RelationSchema {
    type Error = Error;

    fn try_from(repr: SchemaRepr) -> Result<Self> {
        RelationSchema::new(repr.entries, repr.negative_label)
    }
}

impl From<RelationSchema> for SchemaRepr {
    fn from(schema: RelationSchema) -> Self {
        SchemaRepr {
            entries: schema.entries,
            negative_label: schema.negative_label,
        }
    }
}

impl RelationSchema {
    pub fn new(entries: Vec<RelationEntry>, negative_label: Option<String>) -> Result<Self> {
        let mut index = HashMap::new();
        let mut rel_ids = BTreeSet::new();
        for (i, entry) in entries.iter().enumerate() {
            if entry.verbalization.is_empty() {
                return Err(Error::Schema(format!("`{}` has an empty verbalization", entry.label)));
            }
            if let Some(h) = &entry.handmade {
                if h.len() != HANDMADE_LEN {
                    return Err(Error::Schema(format!(
                        "`{}` handmade verbalization has {} tokens, expected {HANDMADE_LEN}",
                        entry.label,
                        h.len()
                    )));
                }
            }
            if index.insert(entry.label.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate label `{}`", entry.label)));
            }
            if !rel_ids.insert(entry.rel_id_token.as_str()) {
                return Err(Error::Schema(format!("duplicate id token `{}`", entry.rel_id_token)));
            }
        }
        if let Some(neg) = &negative_label {
            if !index.contains_key(neg) {
                return Err(Error::Schema(format!("negative label `{neg}` is not an entry")));
            }
        }
        Ok(Self {
            entries,
            negative_label,
            index,
        })
    }

    /// Builds entries by verbalizing each label; `<Rel_k>` follows list order.
    pub fn from_labels<S: AsRef<str>>(labels: &[S], negative_label: Option<&str>) -> Result<Self> {
        let entries = labels
            .iter()
            .enumerate()
            .map(|(k, label)| {
                Ok(RelationEntry {
                    label: label.as_ref().to_string(),
                    verbalization: verbalize(label.as_ref())?,
                    handmade: None,
                    rel_id_token: rel_id_token(k),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries, negative_label.map(str::to_string))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &[RelationEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn negative_label(&self) -> Option<&str> {
        self.negative_label.as_deref()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn entry(&self, label: &str) -> Option<&RelationEntry> {
        self.index_of(label).map(|i| &self.entries[i])
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }

    pub fn has_handmade(&self) -> bool {
        self.entries.iter().all(|e| e.handmade.is_some())
    }

    pub fn with_handmade(mut self, table: &HashMap<String, Vec<String>>) -> Result<Self> {
        for entry in &mut self.entries {
            let words = table
                .get(&entry.label)
                .ok_or_else(|| Error::Handmade(format!("missing relation `{}`", entry.label)))?;
            entry.handmade = Some(words.clone());
        }
        Self::new(self.entries, self.negative_label)
    }
}

/// Reads a `label<TAB>tok1 tok2 tok3 tok4 tok5` table.
pub fn load_handmade(
    path: impl AsRef<Path>,
    schema: &RelationSchema,
) -> Result<HashMap<String, Vec<String>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_handmade(&text, schema)
}

/// Rows for labels outside the schema are ignored.
pub fn parse_handmade(text: &str, schema: &RelationSchema) -> Result<HashMap<String, Vec<String>>> {
    let mut table = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, words) = line
            .split_once('\t')
            .ok_or_else(|| Error::Handmade(format!("line {}: expected `label<TAB>tokens`", i + 1)))?;
        let words: Vec<String> = words.split_whitespace().map(str::to_string).collect();
        if words.len() != HANDMADE_LEN {
            return Err(Error::Handmade(format!(
                "line {}: `{label}` has {} tokens, expected {HANDMADE_LEN}",
                i + 1,
                words.len()
            )));
        }
        if schema.index_of(label).is_some() {
            table.insert(label.to_string(), words);
        }
    }
    if let Some(missing) = schema.labels().find(|l| !table.contains_key(*l)) {
        return Err(Error::Handmade(format!("missing relation `{missing}`")));
    }
    Ok(table)
}

pub const DEFAULT_SEEDS: [u64; 5] = [13, 21, 42, 87, 100];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KShotConfig {
    pub k: usize,
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

impl Default for KShotConfig {
    fn default() -> Self {
        Self {
            k: 8,
            seeds: default_seeds(),
        }
    }
}

impl KShotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("kshot.k must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("kshot.seeds must be non-empty".into()));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("kshot.seeds must be distinct".into()));
        }
        Ok(())
    }
}

/// Index sets of a K-shot split. `rest` holds the instances sampled into
/// neither train nor dev.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KShotSplit {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub rest: Vec<usize>,
}

/// Per relation (visited in label order), shuffles that relation's indices
/// and takes K for train and the next K for dev. Relations with fewer than
/// 2K instances are split as evenly as possible, train taking the odd one.
pub fn kshot_partition(data: &[Instance], k: usize, seed: u64) -> Result<KShotSplit> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("kshot_sample needs instances"));
    }
    let mut by_relation: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in data.iter().enumerate() {
        by_relation.entry(&inst.relation).or_default().push(i);
    }
    let mut rng = SeededRng::new(seed);
    let mut split = KShotSplit {
        train: Vec::new(),
        dev: Vec::new(),
        rest: Vec::new(),
    };
    for indices in by_relation.values_mut() {
        rng.shuffle(indices);
        let n = indices.len();
        let (n_train, n_dev) = if n >= 2 * k { (k, k) } else { (n.div_ceil(2), n / 2) };
        split.train.extend_from_slice(&indices[..n_train]);
        split.dev.extend_from_slice(&indices[n_train..n_train + n_dev]);
        split.rest.extend_from_slice(&indices[n_train + n_dev..]);
    }
    split.train.sort_unstable();
    split.dev.sort_unstable();
    split.rest.sort_unstable();
    Ok(split)
}

pub fn kshot_sample(
    data: &[Instance],
    cfg: &KShotConfig,
    seed: u64,
) -> Result<(Vec<Instance>, Vec<Instance>)> {
    let split = kshot_partition(data, cfg.k, seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| data[i].clone()).collect();
    Ok((pick(&split.train), pick(&split.dev)))
}

/// Admissible `(head_type, tail_type)` pairs per relation, as observed in
/// training data.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCompatMap {
    pairs: BTreeMap<String, BTreeSet<(String, String)>>,
}

impl TypeCompatMap {
    pub fn pairs_for(&self, relation: &str) -> Option<&BTreeSet<(String, String)>> {
        self.pairs.get(relation)
    }

    pub fn allows(&self, relation: &str, head_type: &str, tail_type: &str) -> bool {
        self.pairs
            .get(relation)
            .is_some_and(|set| set.contains(&(head_type.to_string(), tail_type.to_string())))
    }

    /// True when some relation lists this type pair.
    pub fn covers(&self, head_type: &str, tail_type: &str) -> bool {
        let pair = (head_type.to_string(), tail_type.to_string());
        self.pairs.values().any(|set| set.contains(&pair))
    }

    pub fn insert(&mut self, relation: &str, head_type: &str, tail_type: &str) {
        self.pairs
            .entry(relation.to_string())
            .or_default()
            .insert((head_type.to_string(), tail_type.to_string()));
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<(String, String)>)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v))
    }
}

pub fn build_type_compat(train: &[Instance]) -> TypeCompatMap {
    let mut pairs: BTreeMap<String, BTreeSet<(String, String)>> = BTreeMap::new();
    for inst in train {
        pairs
            .entry(inst.relation.clone())
            .or_default()
            .insert((inst.head_type.clone(), inst.tail_type.clone()));
    }
    TypeCompatMap { pairs }
}

pub fn label_counts(data: &[Instance]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for inst in data {
        *counts.entry(inst.relation.clone()).or_insert(0) += 1;
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyBucket {
    High,
    Mid,
    Low,
}

impl FrequencyBucket {
    pub const ALL: [FrequencyBucket; 3] = [Self::High, Self::Mid, Self::Low];

    pub fn name(self) -> &'static str {
        match self {
            Self::High => "high",
            Self::Mid => "mid",
            Self::Low => "low",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketThresholds {
    pub hi: usize,
    pub lo: usize,
}

impl Default for BucketThresholds {
    fn default() -> Self {
        Self { hi: 300, lo: 50 }
    }
}

impl BucketThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo && self.lo > 0) {
            return Err(Error::Config(format!(
                "bucket thresholds need hi > lo > 0, got hi={} lo={}",
                self.hi, self.lo
            )));
        }
        Ok(())
    }

    pub fn classify(&self, train_count: usize) -> FrequencyBucket {
        if train_count > self.hi {
            FrequencyBucket::High
        } else if train_count >= self.lo {
            FrequencyBucket::Mid
        } else {
            FrequencyBucket::Low
        }
    }
}

/// Test-instance indices per frequency bucket. Negative-label instances are
/// never bucketed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FrequencyBuckets {
    pub high: Vec<usize>,
    pub mid: Vec<usize>,
    pub low: Vec<usize>,
}

impl FrequencyBuckets {
    pub fn get(&self, bucket: FrequencyBucket) -> &[usize] {
        match bucket {
            FrequencyBucket::High => &self.high,
            FrequencyBucket::Mid => &self.mid,
            FrequencyBucket::Low => &self.low,
        }
    }

    fn get_mut(&mut self, bucket: FrequencyBucket) -> &mut Vec<usize> {
        match bucket {
            FrequencyBucket::High => &mut self.high,
            FrequencyBucket::Mid => &mut self.mid,
            FrequencyBucket::Low => &mut self.low,
        }
    }
}

pub fn bucket_by_frequency(
    train_counts: &BTreeMap<String, usize>,
    test: &[Instance],
    thresholds: BucketThresholds,
    negative: Option<&str>,
) -> Result<FrequencyBuckets> {
    thresholds.validate()?;
    let mut buckets = FrequencyBuckets::default();
    for (i, inst) in test.iter().enumerate() {
        if Some(inst.relation.as_str()) == negative {
            continue;
        }
        let count = train_counts.get(&inst.relation).copied().unwrap_or(0);
        buckets.get_mut(thresholds.classify(count)).push(i);
    }
    Ok(buckets)
}

/// Relations per bucket, classified by their training count.
pub fn relation_buckets(
    train_counts: &BTreeMap<String, usize>,
    thresholds: BucketThresholds,
    negative: Option<&str>,
) -> BTreeMap<FrequencyBucket, Vec<String>> {
    let mut out: BTreeMap<FrequencyBucket, Vec<String>> = BTreeMap::new();
    for (label, &count) in train_counts {
        if Some(label.as_str()) == negative {
            continue;
        }
        out.entry(thresholds.classify(count)).or_default().push(label.clone());
    }
    out
}

//! Closed word-level vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::dataset::{type_tokens, Instance, RelationSchema};
use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const SENT_X: TokenId = 4;
pub const SENT_Y: TokenId = 5;
pub const SENT_Z: TokenId = 6;
pub const SENT_W: TokenId = 7;
pub const MASK: TokenId = 8;

pub const SPECIAL_TOKENS: [&str; 9] = [
    "<pad>", "<s>", "</s>", "<unk>", "[X]", "[Y]", "[Z]", "[W]", "[MASK]",
];

/// Words used by the discrete template and the terminal period.
pub const TEMPLATE_WORDS: [&str; 6] = [".", "the", "relation", "between", "and", "is"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    num_relations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct VocabOptions {
    pub min_count: usize,
}

impl Default for VocabOptions {
    fn default() -> Self {
        Self { min_count: 1 }
    }
}

/// Ids are assigned in order: special symbols, one `<Rel_k>` per relation,
/// schema-derived words (verbalizations, handmade words, template words,
/// entity-type words, `extra`), then corpus tokens by descending count with
/// ties broken lexicographically.
pub fn build_vocab(
    corpus: &[Instance],
    schema: &RelationSchema,
    extra: &[Vec<String>],
    opts: VocabOptions,
) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("build_vocab needs a corpus"));
    }
    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(schema.entries().iter().map(|e| e.rel_id_token.clone()));
    let mut seen: BTreeSet<String> = tokens.iter().cloned().collect();
    let mut push = |tok: &str, tokens: &mut Vec<String>| {
        if seen.insert(tok.to_string()) {
            tokens.push(tok.to_string());
        }
    };

    for entry in schema.entries() {
        for w in &entry.verbalization {
            push(w, &mut tokens);
        }
    }
    for entry in schema.entries() {
        for w in entry.handmade.iter().flatten() {
            push(w, &mut tokens);
        }
    }
    for w in TEMPLATE_WORDS {
        push(w, &mut tokens);
    }
    let type_words: BTreeSet<String> = corpus
        .iter()
        .flat_map(|x| type_tokens(&x.head_type).into_iter().chain(type_tokens(&x.tail_type)))
        .collect();
    for w in &type_words {
        push(w, &mut tokens);
    }
    for w in extra.iter().flatten() {
        push(w, &mut tokens);
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for inst in corpus {
        for t in &inst.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut by_count: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= opts.min_count)
        .collect();
    by_count.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    for (w, _) in by_count {
        push(w, &mut tokens);
    }
    Vocab::from_tokens(tokens, schema.len())
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>, num_relations: usize) -> Result<Self> {
        for (id, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(id).map(String::as_str) != Some(*special) {
                return Err(Error::Config(format!("vocabulary id {id} must be `{special}`")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.contains('\n') {
                return Err(Error::Config(format!("unusable vocabulary token at id {id}")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{tok}`")));
            }
        }
        Ok(Self {
            tokens,
            index,
            num_relations,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    /// Strict lookup for tokens that must be in-vocabulary.
    pub fn require(&self, token: &str, context: &str) -> Result<TokenId> {
        self.id(token).ok_or_else(|| Error::OutOfVocabulary {
            token: token.to_string(),
            context: context.to_string(),
        })
    }

    pub fn require_all<S: AsRef<str>>(&self, tokens: &[S], context: &str) -> Result<Vec<TokenId>> {
        tokens.iter().map(|t| self.require(t.as_ref(), context)).collect()
    }

    /// One token per line; line number is the id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_list(text.lines().map(str::to_string).collect())
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_list(tokens: Vec<String>) -> Result<Self> {
        let num_relations = tokens[SPECIAL_TOKENS.len().min(tokens.len())..]
            .iter()
            .take_while(|t| t.starts_with("<Rel_") && t.ends_with('>'))
            .count();
        Self::from_tokens(tokens, num_relations)
    }
}

pub fn encode_tokens<S: AsRef<str>>(tokens: &[S], vocab: &Vocab) -> Vec<TokenId> {
    tokens
        .iter()
        .map(|t| vocab.id(t.as_ref()).unwrap_or(UNK))
        .collect()
}

pub fn decode_ids(ids: &[TokenId], vocab: &Vocab) -> Result<Vec<String>> {
    ids.iter()
        .map(|&id| {
            vocab
                .token(id)
                .map(str::to_string)
                .ok_or(Error::IdOutOfRange { id, size: vocab.len() })
        })
        .collect()
}

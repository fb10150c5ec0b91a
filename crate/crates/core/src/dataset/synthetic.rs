//! Synthetic relation corpora for desk-scale experiments.
//!
//! Every relation owns a distinct (head type, tail type) pair and a
//! distinct two-token cue that sits right before the second entity
//! mention. Entity names come from per-type pools, so mentions reveal
//! their type. A bystander mention of a random type appears in half of the
//! sentences. With probability `noise_rate` the cue is swapped for a
//! distractor bigram owned by no relation.

use serde::{Deserialize, Serialize};

use super::{rel_id_token, verbalize, Instance, RelationEntry, RelationSchema};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_relations: usize,
    pub num_types: usize,
    pub instances_per_relation: usize,
    pub noise_rate: f64,
    pub vocab_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_relations: 8,
            num_types: 4,
            instances_per_relation: 32,
            noise_rate: 0.0,
            vocab_size: 40,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synth: {m}")));
        if self.num_relations < 2 {
            return fail(format!("num_relations must be >= 2, got {}", self.num_relations));
        }
        if self.num_types < 2 {
            return fail(format!("num_types must be >= 2, got {}", self.num_types));
        }
        if self.num_types * self.num_types < self.num_relations {
            return fail(format!(
                "{} types give only {} type pairs for {} relations",
                self.num_types,
                self.num_types * self.num_types,
                self.num_relations
            ));
        }
        if self.instances_per_relation == 0 {
            return fail("instances_per_relation must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return fail(format!("noise_rate must lie in [0, 1], got {}", self.noise_rate));
        }
        if self.vocab_size < 4 {
            return fail(format!("vocab_size must be >= 4, got {}", self.vocab_size));
        }
        Ok(())
    }
}

const TYPE_NAMES: [&str; 8] = [
    "PERSON",
    "ORGANIZATION",
    "LOCATION",
    "DATE",
    "GOVERNMENT_AGENCY",
    "NUMBER",
    "TITLE",
    "RELIGION",
];

const LABEL_WORDS: [&str; 12] = [
    "member", "founder", "city", "origin", "leader", "employee", "parent", "child", "birth",
    "school", "home", "rival",
];

const NAMES_PER_TYPE: usize = 6;

/// Everything about a synthetic corpus that depends only on the config:
/// labels, type names, cue bigrams and word pools.
#[derive(Clone, Debug)]
pub struct SyntheticLexicon {
    pub labels: Vec<String>,
    pub type_names: Vec<String>,
    /// `(head type index, tail type index)` per relation.
    pub type_pairs: Vec<(usize, usize)>,
    pub patterns: Vec<[String; 2]>,
    pub distractors: Vec<[String; 2]>,
    pub entity_names: Vec<Vec<String>>,
    pub fillers: Vec<String>,
}

impl SyntheticLexicon {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let t = cfg.num_types;
        let type_names: Vec<String> = (0..t)
            .map(|i| match TYPE_NAMES.get(i) {
                Some(name) => name.to_string(),
                None => format!("KIND_{i}"),
            })
            .collect();
        // k = q*t + a  ->  (a, (q + a) mod t), injective for k < t*t
        let type_pairs: Vec<(usize, usize)> = (0..cfg.num_relations)
            .map(|k| (k % t, (k / t + k % t) % t))
            .collect();

        let w = LABEL_WORDS.len();
        let mut labels: Vec<String> = Vec::with_capacity(cfg.num_relations);
        for (k, &(h, _)) in type_pairs.iter().enumerate() {
            let domain: String = type_names[h].to_lowercase().chars().take(3).collect();
            let first = LABEL_WORDS[k % w];
            let second = LABEL_WORDS[(k / w + 3 * k + 1) % w];
            let mut label = if k % 3 == 0 {
                format!("{domain}:{first}_of_{second}/{}", LABEL_WORDS[(k + 5) % w])
            } else {
                format!("{domain}:{first}_of_{second}")
            };
            let mut bump = 1;
            while labels.contains(&label) {
                label = format!("{domain}:{first}_{bump}_of_{second}");
                bump += 1;
            }
            labels.push(label);
        }

        let entity_names = (0..t)
            .map(|ty| (0..NAMES_PER_TYPE).map(|i| format!("ent{ty}_{i}")).collect())
            .collect();
        Ok(Self {
            labels,
            type_names,
            type_pairs,
            patterns: (0..cfg.num_relations)
                .map(|k| [format!("cue{k}a"), format!("cue{k}b")])
                .collect(),
            distractors: (0..cfg.num_relations)
                .map(|k| [format!("noise{k}a"), format!("noise{k}b")])
                .collect(),
            entity_names,
            fillers: (0..cfg.vocab_size).map(|i| format!("w{i}")).collect(),
        })
    }

    pub fn schema(&self) -> Result<RelationSchema> {
        let entries = self
            .labels
            .iter()
            .enumerate()
            .map(|(k, label)| {
                let (h, tl) = self.type_pairs[k];
                let head_word = super::type_tokens(&self.type_names[h]).remove(0);
                let tail_word = super::type_tokens(&self.type_names[tl]).remove(0);
                let key = verbalize(label)?.remove(0);
                Ok(RelationEntry {
                    label: label.clone(),
                    verbalization: verbalize(label)?,
                    handmade: Some(vec![head_word, "is".into(), key, "of".into(), tail_word]),
                    rel_id_token: rel_id_token(k),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RelationSchema::new(entries, None)
    }

    /// Index of the relation whose cue bigram occurs in `tokens`, if any.
    pub fn lookup(&self, tokens: &[String]) -> Option<usize> {
        tokens.windows(2).find_map(|pair| {
            self.patterns
                .iter()
                .position(|p| p[0] == pair[0] && p[1] == pair[1])
        })
    }

    fn mention(&self, ty: usize, rng: &mut SeededRng) -> Vec<String> {
        let pool = &self.entity_names[ty];
        let len = 1 + rng.below(2);
        (0..len).map(|_| rng.pick(pool).clone()).collect()
    }

    fn fillers(&self, max: usize, rng: &mut SeededRng) -> Vec<String> {
        let n = rng.below(max + 1);
        (0..n).map(|_| rng.pick(&self.fillers).clone()).collect()
    }
}

pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<(Vec<Instance>, RelationSchema)> {
    let lex = SyntheticLexicon::new(cfg)?;
    let schema = lex.schema()?;
    let mut rng = SeededRng::new(seed);
    let mut data = Vec::with_capacity(cfg.num_relations * cfg.instances_per_relation);
    for k in 0..cfg.num_relations {
        let (h, t) = lex.type_pairs[k];
        for i in 0..cfg.instances_per_relation {
            let head = lex.mention(h, &mut rng);
            let tail = lex.mention(t, &mut rng);
            let cue = if rng.chance(cfg.noise_rate) {
                rng.pick(&lex.distractors).clone()
            } else {
                lex.patterns[k].clone()
            };
            let head_first = rng.chance(0.5);
            let bystander = if rng.chance(0.5) {
                let ty = rng.below(cfg.num_types);
                Some((lex.mention(ty, &mut rng), rng.chance(0.5)))
            } else {
                None
            };

            let mut tokens = lex.fillers(3, &mut rng);
            if let Some((m, true)) = &bystander {
                tokens.extend(m.iter().cloned());
                tokens.extend(lex.fillers(1, &mut rng));
            }
            let put = |tokens: &mut Vec<String>, m: &[String]| {
                let start = tokens.len();
                tokens.extend(m.iter().cloned());
                (start, tokens.len() - 1)
            };
            let (first, second) = if head_first { (&head, &tail) } else { (&tail, &head) };
            let first_span = put(&mut tokens, first);
            tokens.extend(lex.fillers(1, &mut rng));
            tokens.extend(cue.iter().cloned());
            let second_span = put(&mut tokens, second);
            tokens.extend(lex.fillers(3, &mut rng));
            if let Some((m, false)) = &bystander {
                tokens.extend(m.iter().cloned());
            }
            let (head_span, tail_span) = if head_first {
                (first_span, second_span)
            } else {
                (second_span, first_span)
            };
            data.push(Instance {
                id: format!("syn-{k}-{i}"),
                tokens,
                head_span,
                tail_span,
                head_type: lex.type_names[h].clone(),
                tail_type: lex.type_names[t].clone(),
                relation: lex.labels[k].clone(),
            });
        }
    }
    Ok((data, schema))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn counts_match_config() {
        let cfg = SynthConfig {
            num_relations: 4,
            instances_per_relation: 10,
            ..SynthConfig::default()
        };
        let (data, schema) = generate_synthetic(&cfg, 13).unwrap();
        assert_eq!(data.len(), 40);
        assert_eq!(schema.len(), 4);
        for inst in &data {
            inst.validate(&schema).unwrap();
        }
    }

    #[test]
    fn noiseless_cues_identify_relations() {
        let cfg = SynthConfig::default();
        let lex = SyntheticLexicon::new(&cfg).unwrap();
        let (data, schema) = generate_synthetic(&cfg, 21).unwrap();
        let correct = data
            .iter()
            .filter(|x| lex.lookup(&x.tokens).map(|k| schema.entries()[k].label.as_str()) == Some(x.relation.as_str()))
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn full_noise_removes_every_cue() {
        let cfg = SynthConfig {
            noise_rate: 1.0,
            ..SynthConfig::default()
        };
        let lex = SyntheticLexicon::new(&cfg).unwrap();
        let (data, _) = generate_synthetic(&cfg, 21).unwrap();
        assert!(data.iter().all(|x| lex.lookup(&x.tokens).is_none()));
    }

    #[test]
    fn type_pairs_and_labels_are_distinct() {
        let cfg = SynthConfig {
            num_relations: 40,
            num_types: 7,
            ..SynthConfig::default()
        };
        let lex = SyntheticLexicon::new(&cfg).unwrap();
        let pairs: BTreeSet<_> = lex.type_pairs.iter().collect();
        let labels: BTreeSet<_> = lex.labels.iter().collect();
        assert_eq!(pairs.len(), 40);
        assert_eq!(labels.len(), 40);
        assert!(lex.schema().unwrap().has_handmade());
    }

    #[test]
    fn labels_have_domain_and_parts() {
        let lex = SyntheticLexicon::new(&SynthConfig::default()).unwrap();
        assert!(lex.labels.iter().all(|l| l.contains(':') && l.contains('_')));
        assert!(lex.labels.iter().any(|l| l.contains('/')));
    }

    #[test]
    fn rejects_bad_settings() {
        let bad = [
            SynthConfig { num_relations: 1, ..SynthConfig::default() },
            SynthConfig { noise_rate: 1.5, ..SynthConfig::default() },
            SynthConfig { num_types: 2, num_relations: 5, ..SynthConfig::default() },
            SynthConfig { instances_per_relation: 0, ..SynthConfig::default() },
        ];
        for cfg in bad {
            assert!(generate_synthetic(&cfg, 1).is_err(), "{cfg:?}");
        }
    }
}

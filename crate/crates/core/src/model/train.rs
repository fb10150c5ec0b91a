use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::optim::{adamw_step, AdamState, OptimConfig};
use super::params::{init_params, ModelConfig, ModelParams};
use super::transformer::{compute_grads_with, Dropout, Example};
use crate::dataset::{Instance, RelationSchema, TypeCompatMap};
use crate::decoding::{DecodeConfig, Scorer};
use crate::error::{Error, Result};
use crate::evaluation::micro_f1;
use crate::prompting::{build_source, build_target, TemplateConfig};
use crate::rng::SeededRng;
use crate::tokenizer::Vocab;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without a dev improvement.
    pub patience: Option<usize>,
    /// Score the dev split after every epoch (otherwise keep the final params).
    pub eval_dev: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            patience: None,
            eval_dev: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything training needs besides the data and the seed.
pub struct TrainSetup<'a> {
    pub template: &'a TemplateConfig,
    pub model: &'a ModelConfig,
    pub optim: &'a OptimConfig,
    pub train: &'a TrainConfig,
    pub decode: &'a DecodeConfig,
    pub schema: &'a RelationSchema,
    pub vocab: &'a Vocab,
    pub compat: &'a TypeCompatMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean over batches of the batch-mean summed NLL.
    pub loss: f64,
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
    pub wall_secs: f64,
    pub dev_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub best_dev_f1: Option<f64>,
}

impl TrainStats {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

pub fn build_examples(data: &[Instance], template: &TemplateConfig, schema: &RelationSchema, vocab: &Vocab) -> Result<Vec<Example>> {
    data.iter()
        .map(|inst| {
            Ok(Example {
                source: build_source(inst, template, vocab)?,
                target: build_target(inst, template, schema, vocab)?,
            })
        })
        .collect()
}

fn dev_f1(params: &ModelParams, dev: &[Instance], setup: &TrainSetup) -> Result<f64> {
    let scorer = Scorer::new(params, setup.schema, setup.vocab, setup.template)?;
    let preds: Vec<String> = scorer
        .predict_all(dev, setup.compat, setup.decode)?
        .into_iter()
        .map(|o| o.relation)
        .collect();
    let golds: Vec<String> = dev.iter().map(|i| i.relation.clone()).collect();
    Ok(micro_f1(&preds, &golds, setup.schema.negative_label())?.f1)
}

/// Minibatch AdamW over shuffled epochs. With a non-empty dev split and
/// `eval_dev`, the parameters with the best dev micro-F1 are returned (the
/// latest among equals); otherwise the final parameters.
pub fn train(train: &[Instance], dev: &[Instance], setup: &TrainSetup, seed: u64) -> Result<(ModelParams, TrainStats)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    setup.template.validate()?;
    setup.optim.validate()?;
    setup.train.validate()?;
    let examples = build_examples(train, setup.template, setup.schema, setup.vocab)?;
    let mut params = init_params(
        setup.model,
        setup.template.num_prompts(),
        setup.vocab.len(),
        SeededRng::derived(seed, STREAM_INIT).next_u64(),
    )?;
    let mut state = AdamState::new(&params);
    let mut order_rng = SeededRng::derived(seed, STREAM_SHUFFLE);
    let mut drop_rng = SeededRng::derived(seed, STREAM_DROPOUT);
    let use_dev = setup.train.eval_dev && !dev.is_empty();

    let mut stats = TrainStats::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;
    for epoch in 0..setup.train.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order_rng.shuffle(&mut order);
        let (mut loss_sum, mut norm_sum, mut norm_max, mut batches) = (0.0, 0.0, 0.0f64, 0usize);
        for chunk in order.chunks(setup.train.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let mut drop = Dropout {
                p: setup.model.dropout,
                rng: Some(&mut drop_rng),
            };
            let (loss, grads) = compute_grads_with(&batch, &params, &mut drop)?;
            let norm = grads.norm();
            adamw_step(&mut params, &grads, &mut state, setup.optim)?;
            loss_sum += loss;
            norm_sum += norm;
            norm_max = norm_max.max(norm);
            batches += 1;
        }
        params.check_finite()?;
        let dev_score = if use_dev { Some(dev_f1(&params, dev, setup)?) } else { None };
        stats.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / batches as f64,
            grad_norm_mean: norm_sum / batches as f64,
            grad_norm_max: norm_max,
            wall_secs: start.elapsed().as_secs_f64(),
            dev_f1: dev_score,
        });
        if let Some(f1) = dev_score {
            if best.as_ref().is_none_or(|(b, _)| f1 >= *b) {
                let improved = best.as_ref().is_none_or(|(b, _)| f1 > *b);
                best = Some((f1, params.clone()));
                stats.best_epoch = Some(epoch);
                stats.best_dev_f1 = Some(f1);
                if improved {
                    since_best = 0;
                } else {
                    since_best += 1;
                }
            } else {
                since_best += 1;
            }
            if setup.train.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    Ok(match best {
        Some((_, p)) => (p, stats),
        None => (params, stats),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_type_compat, generate_synthetic, SynthConfig};
    use crate::model::loss;
    use crate::tokenizer::{build_vocab, VocabOptions};

    struct World {
        data: Vec<Instance>,
        schema: RelationSchema,
        vocab: Vocab,
        compat: TypeCompatMap,
    }

    fn world() -> World {
        let synth = SynthConfig {
            num_relations: 4,
            instances_per_relation: 4,
            ..SynthConfig::default()
        };
        let (data, schema) = generate_synthetic(&synth, 2).unwrap();
        let vocab = build_vocab(&data, &schema, &[], VocabOptions::default()).unwrap();
        let compat = build_type_compat(&data);
        World {
            data,
            schema,
            vocab,
            compat,
        }
    }

    fn tiny() -> ModelConfig {
        ModelConfig {
            d: 16,
            layers: 1,
            heads: 2,
            ffn: 32,
            max_positions: 64,
            ..ModelConfig::default()
        }
    }

    fn run(w: &World, train_cfg: &TrainConfig, seed: u64) -> (ModelParams, TrainStats) {
        let template = TemplateConfig::default();
        let model = tiny();
        let optim = OptimConfig::desk_defaults();
        let decode = DecodeConfig::default();
        let setup = TrainSetup {
            template: &template,
            model: &model,
            optim: &optim,
            train: train_cfg,
            decode: &decode,
            schema: &w.schema,
            vocab: &w.vocab,
            compat: &w.compat,
        };
        train(&w.data, &w.data[..4], &setup, seed).unwrap()
    }

    #[test]
    fn zero_epochs_returns_init() {
        let w = world();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (p, stats) = run(&w, &cfg, 9);
        let init = init_params(&tiny(), 9, w.vocab.len(), SeededRng::derived(9, STREAM_INIT).next_u64()).unwrap();
        assert_eq!(p, init);
        assert!(stats.epochs.is_empty());
    }

    #[test]
    fn one_step_reduces_batch_loss() {
        let w = world();
        let template = TemplateConfig::default();
        let batch = build_examples(&w.data, &template, &w.schema, &w.vocab).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: w.data.len(),
            eval_dev: false,
            ..TrainConfig::default()
        };
        let (p, stats) = run(&w, &cfg, 3);
        let init = init_params(&tiny(), 9, w.vocab.len(), SeededRng::derived(3, STREAM_INIT).next_u64()).unwrap();
        let before = loss(&batch, &init).unwrap();
        assert!((stats.epochs[0].loss - before).abs() < 1e-9);
        assert!(loss(&batch, &p).unwrap() < before);
    }

    #[test]
    fn runs_are_bit_identical() {
        let w = world();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (p1, s1) = run(&w, &cfg, 5);
        let (p2, s2) = run(&w, &cfg, 5);
        assert_eq!(p1, p2);
        assert_eq!(s1.losses(), s2.losses());
        assert!(s1.epochs.iter().all(|e| e.loss >= 0.0));
    }
}

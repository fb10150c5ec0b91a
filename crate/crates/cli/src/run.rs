use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use relinfill::dataset::{
    bucket_by_frequency, build_type_compat, generate_synthetic, kshot_partition, label_counts, load_dataset,
    load_handmade, save_dataset, tacred, verbalize, Instance, RelationSchema, TypeCompatMap,
};
use relinfill::decoding::{write_predictions, DecodeConfig, ScoringMode, Scorer};
use relinfill::evaluation::{confusion, frequency_report, write_csv, EvalReport, SeedResult};
use relinfill::model::{train, Checkpoint, TrainSetup};
use relinfill::prompting::{TemplateConfig, TemplateVariant, VerbalizerMode};
use relinfill::tokenizer::{build_vocab, Vocab, VocabOptions};

use crate::config::RunConfig;
use crate::{manifest, Command, Common, ModeArg};

pub fn run(command: Command, common: &Common) -> Result<()> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = |name: &str| common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
    match command {
        Command::Synth {
            noise,
            relations,
            per_relation,
        } => {
            if let Some(v) = noise {
                cfg.synth.noise_rate = v;
            }
            if let Some(v) = relations {
                cfg.synth.num_relations = v;
            }
            if let Some(v) = per_relation {
                cfg.synth.instances_per_relation = v;
            }
            cfg.validate()?;
            synth(&cfg, &out("synth"))
        }
        Command::Sample { corpus, schema, k } => {
            if corpus.is_some() {
                cfg.paths.corpus = corpus;
            }
            if schema.is_some() {
                cfg.paths.schema = schema;
            }
            if let Some(k) = k {
                cfg.kshot.k = k;
            }
            cfg.validate()?;
            sample(&cfg, &out("sample"))
        }
        Command::Train { data, epochs } => {
            if data.is_some() {
                cfg.paths.data = data;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.validate()?;
            train_cmd(&cfg, &out("train"))
        }
        Command::Eval {
            data,
            model,
            split,
            mode,
            no_guide,
            no_type_filter,
        } => {
            if data.is_some() {
                cfg.paths.data = data;
            }
            if model.is_some() {
                cfg.paths.model = model;
            }
            if let Some(m) = mode {
                cfg.decode.mode = match m {
                    ModeArg::SharedGreedy => ScoringMode::SharedGreedy,
                    ModeArg::TeacherForced => ScoringMode::TeacherForced,
                    ModeArg::Likelihood => ScoringMode::Likelihood,
                };
            }
            if no_guide {
                cfg.decode.guided = false;
            }
            if no_type_filter {
                cfg.decode.type_filter = false;
            }
            cfg.validate()?;
            eval_cmd(&cfg, &split, &out("eval"))
        }
        Command::Ablate { epochs, only } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.validate()?;
            ablate(&cfg, &only, &out("ablate"))
        }
        Command::Verbalize { label, all } => verbalize_cmd(label.as_deref(), all),
        Command::Report { inputs } => report(&cfg, &inputs, &out("report")),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    let p = path
        .as_ref()
        .ok_or_else(|| anyhow!("paths.{what} is not set (pass --{what} or set it in the config)"))?;
    if !p.exists() {
        bail!("paths.{what}: {} does not exist", p.display());
    }
    Ok(p)
}

/// Schema resolution: explicit path, then `schema.json` next to the data,
/// then the built-in TACRED schema. A handmade table is attached when given.
fn resolve_schema(cfg: &RunConfig, near: Option<&Path>) -> Result<RelationSchema> {
    let mut schema = match (&cfg.paths.schema, near.map(|d| d.join("schema.json"))) {
        (Some(p), _) => RelationSchema::load(p)?,
        (None, Some(p)) if p.exists() => RelationSchema::load(&p)?,
        _ => tacred::schema()?,
    };
    if let Some(path) = &cfg.paths.handmade {
        let table = load_handmade(path, &schema)?;
        schema = schema.with_handmade(&table)?;
    }
    Ok(schema)
}

fn write_splits(dir: &Path, data: &[Instance], k: usize, seed: u64) -> Result<Vec<String>> {
    let split = kshot_partition(data, k, seed)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    save_dataset(dir.join("train.json"), &pick(&split.train))?;
    save_dataset(dir.join("dev.json"), &pick(&split.dev))?;
    save_dataset(dir.join("test.json"), &pick(&split.rest))?;
    Ok(vec!["train.json".into(), "dev.json".into(), "test.json".into()])
}

fn synth(cfg: &RunConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let (data, schema) = generate_synthetic(&cfg.synth, cfg.seed)?;
    save_dataset(dir.join("corpus.json"), &data)?;
    schema.save(dir.join("schema.json"))?;
    let mut outputs = vec!["corpus.json".to_string(), "schema.json".to_string()];
    outputs.extend(write_splits(dir, &data, cfg.kshot.k, cfg.seed)?);
    manifest::write(dir, "synth", cfg, &outputs)?;
    println!("{} instances, {} relations -> {}", data.len(), schema.len(), dir.display());
    Ok(())
}

fn sample(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let corpus = require(&cfg.paths.corpus, "corpus")?;
    let schema = resolve_schema(cfg, corpus.parent())?;
    let data = load_dataset(corpus, &schema)?;
    create_dir(dir)?;
    let mut outputs = write_splits(dir, &data, cfg.kshot.k, cfg.seed)?;
    schema.save(dir.join("schema.json"))?;
    outputs.push("schema.json".into());
    manifest::write(dir, "sample", cfg, &outputs)?;
    println!("k={} seed={} -> {}", cfg.kshot.k, cfg.seed, dir.display());
    Ok(())
}

struct Splits {
    schema: RelationSchema,
    train: Vec<Instance>,
    dev: Vec<Instance>,
    test: Vec<Instance>,
}

fn load_splits(cfg: &RunConfig) -> Result<(PathBuf, Splits)> {
    let dir = require(&cfg.paths.data, "data")?.clone();
    let schema = resolve_schema(cfg, Some(&dir))?;
    let load = |name: &str| -> Result<Vec<Instance>> {
        let p = dir.join(name);
        if p.exists() {
            Ok(load_dataset(&p, &schema)?)
        } else {
            Ok(Vec::new())
        }
    };
    let (train, dev, test) = (load("train.json")?, load("dev.json")?, load("test.json")?);
    if train.is_empty() {
        bail!("{} has no training instances", dir.join("train.json").display());
    }
    Ok((dir, Splits { schema, train, dev, test }))
}

/// The vocabulary covers every split: token identities only, no labels.
fn vocab_for(s: &Splits) -> Result<Vocab> {
    let all: Vec<Instance> = s.train.iter().chain(&s.dev).chain(&s.test).cloned().collect();
    Ok(build_vocab(&all, &s.schema, &[], VocabOptions::default())?)
}

struct Trained {
    checkpoint: Checkpoint,
    compat: TypeCompatMap,
    stats: relinfill::model::TrainStats,
}

fn fit(cfg: &RunConfig, template: &TemplateConfig, s: &Splits, seed: u64) -> Result<Trained> {
    let vocab = vocab_for(s)?;
    let compat = build_type_compat(&s.train);
    let setup = TrainSetup {
        template,
        model: &cfg.model,
        optim: &cfg.optim,
        train: &cfg.train,
        decode: &cfg.decode,
        schema: &s.schema,
        vocab: &vocab,
        compat: &compat,
    };
    let (params, stats) = train(&s.train, &s.dev, &setup, seed)?;
    Ok(Trained {
        checkpoint: Checkpoint {
            params,
            vocab,
            template: template.clone(),
        },
        compat,
        stats,
    })
}

fn train_cmd(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (_, splits) = load_splits(cfg)?;
    create_dir(dir)?;
    let t = fit(cfg, &cfg.template, &splits, cfg.seed)?;
    t.checkpoint.save(dir.join("checkpoint.json"))?;
    t.checkpoint.vocab.save(dir.join("vocab.txt"))?;
    splits.schema.save(dir.join("schema.json"))?;
    write_json(&dir.join("compat.json"), &t.compat)?;
    write_json(&dir.join("train_stats.json"), &t.stats)?;
    let outputs = ["checkpoint.json", "vocab.txt", "schema.json", "compat.json", "train_stats.json"].map(String::from);
    manifest::write(dir, "train", cfg, &outputs)?;
    let last = t.stats.epochs.last();
    println!(
        "epochs={} final_loss={} best_dev_f1={} -> {}",
        t.stats.epochs.len(),
        last.map_or("n/a".into(), |e| format!("{:.4}", e.loss)),
        t.stats.best_dev_f1.map_or("n/a".into(), |f| format!("{f:.4}")),
        dir.display()
    );
    Ok(())
}

/// Scores `data` and returns the per-seed result; predictions go to `dump`.
#[allow(clippy::too_many_arguments)]
fn score(
    cfg: &RunConfig,
    ck: &Checkpoint,
    schema: &RelationSchema,
    compat: &TypeCompatMap,
    decode: &DecodeConfig,
    train: &[Instance],
    data: &[Instance],
    seed: u64,
    dump: Option<&Path>,
) -> Result<SeedResult> {
    if data.is_empty() {
        bail!("evaluation split is empty");
    }
    let scorer = Scorer::new(&ck.params, schema, &ck.vocab, &ck.template)?;
    let outcomes = scorer.predict_all(data, compat, decode)?;
    if let Some(path) = dump {
        write_predictions(path, data, &outcomes)?;
    }
    let preds: Vec<&str> = outcomes.iter().map(|o| o.relation.as_str()).collect();
    let golds: Vec<&str> = data.iter().map(|i| i.relation.as_str()).collect();
    let negative = if cfg.eval.exclude_negative { schema.negative_label() } else { None };
    let c = confusion(&preds, &golds, negative)?;
    let buckets = if cfg.eval.frequency_buckets && !train.is_empty() {
        let b = bucket_by_frequency(&label_counts(train), data, cfg.eval.buckets, schema.negative_label())?;
        Some(frequency_report(&preds, &golds, &b, negative)?)
    } else {
        None
    };
    Ok(SeedResult {
        seed,
        confusion: c,
        scores: c.scores(),
        buckets,
    })
}

fn eval_cmd(cfg: &RunConfig, split: &str, dir: &Path) -> Result<()> {
    let model_dir = require(&cfg.paths.model, "model")?;
    let ck = Checkpoint::load(model_dir.join("checkpoint.json"))?;
    let compat_path = model_dir.join("compat.json");
    let compat: TypeCompatMap = serde_json::from_str(
        &fs::read_to_string(&compat_path).with_context(|| format!("reading {}", compat_path.display()))?,
    )?;
    let (_, splits) = load_splits(cfg)?;
    let data = match split {
        "train" => &splits.train,
        "dev" => &splits.dev,
        "test" => &splits.test,
        other => bail!("--split must be train, dev or test, got `{other}`"),
    };
    create_dir(dir)?;
    let result = score(
        cfg,
        &ck,
        &splits.schema,
        &compat,
        &cfg.decode,
        &splits.train,
        data,
        cfg.seed,
        Some(&dir.join("predictions.jsonl")),
    )?;
    let name = format!("{}/{}", ck.template.variant.name(), cfg.decode.mode.name());
    let report = EvalReport::from_seeds(name, vec![result])?;
    report.save_json(dir.join("metrics.json"))?;
    report.save_csv(dir.join("metrics.csv"))?;
    let outputs = ["predictions.jsonl", "metrics.json", "metrics.csv"].map(String::from);
    manifest::write(dir, "eval", cfg, &outputs)?;
    println!(
        "{split}: P={:.4} R={:.4} F1={:.4} -> {}",
        report.mean.precision,
        report.mean.recall,
        report.mean.f1,
        dir.display()
    );
    Ok(())
}

fn ablation_grid(only: &[String]) -> Result<Vec<TemplateConfig>> {
    let mut grid: Vec<TemplateConfig> = TemplateVariant::ALL
        .into_iter()
        .map(|variant| TemplateConfig {
            variant,
            ..TemplateConfig::default()
        })
        .collect();
    for mode in [VerbalizerMode::Handmade, VerbalizerMode::RelId] {
        grid.push(TemplateConfig {
            verbalizer_mode: mode,
            ..TemplateConfig::default()
        });
    }
    if only.is_empty() {
        return Ok(grid);
    }
    for name in only {
        if !TemplateVariant::ALL.iter().any(|v| v.name() == name) {
            bail!("--only: unknown variant `{name}`");
        }
    }
    Ok(grid
        .into_iter()
        .filter(|t| only.iter().any(|n| n == t.variant.name()))
        .collect())
}

fn ablate(cfg: &RunConfig, only: &[String], dir: &Path) -> Result<()> {
    let grid = ablation_grid(only)?;
    create_dir(dir)?;
    let mut per_config: Vec<Vec<SeedResult>> = vec![Vec::new(); grid.len()];
    for &seed in &cfg.kshot.seeds {
        let (data, schema) = match &cfg.paths.corpus {
            Some(path) => {
                let schema = resolve_schema(cfg, path.parent())?;
                (load_dataset(path, &schema)?, schema)
            }
            None => generate_synthetic(&cfg.synth, seed)?,
        };
        let split = kshot_partition(&data, cfg.kshot.k, seed)?;
        let pick = |ix: &[usize]| ix.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
        let splits = Splits {
            schema,
            train: pick(&split.train),
            dev: pick(&split.dev),
            test: pick(&split.rest),
        };
        for (slot, template) in grid.iter().enumerate() {
            let t = fit(cfg, template, &splits, seed)?;
            let r = score(
                cfg,
                &t.checkpoint,
                &splits.schema,
                &t.compat,
                &cfg.decode,
                &splits.train,
                &splits.test,
                seed,
                None,
            )?;
            println!("seed={seed} {} F1={:.4}", run_name(template), r.scores.f1);
            per_config[slot].push(r);
        }
    }
    let reports = grid
        .iter()
        .zip(per_config)
        .map(|(t, seeds)| EvalReport::from_seeds(run_name(t), seeds))
        .collect::<relinfill::Result<Vec<_>>>()?;
    write_csv(dir.join("ablation.csv"), &reports)?;
    write_json(&dir.join("ablation.json"), &reports)?;
    manifest::write(dir, "ablate", cfg, &["ablation.csv".into(), "ablation.json".into()])?;
    for r in &reports {
        println!("{}: F1 {:.4} (±{:.4})", r.name, r.mean.f1, r.std.f1);
    }
    Ok(())
}

fn run_name(t: &TemplateConfig) -> String {
    format!("{}/{}", t.variant.name(), t.verbalizer_mode.name())
}

fn verbalize_cmd(label: Option<&str>, all: bool) -> Result<()> {
    if let Some(label) = label {
        println!("{}", verbalize(label)?.join(" "));
    }
    if all {
        let schema = tacred::schema()?;
        for e in schema.entries() {
            let handmade = e.handmade.as_ref().map_or(String::new(), |h| h.join(" "));
            println!("{}\t{}\t{}\t{}", e.label, e.verbalization.join(" "), handmade, e.rel_id_token);
        }
    }
    Ok(())
}

fn report(cfg: &RunConfig, inputs: &[PathBuf], dir: &Path) -> Result<()> {
    let mut reports = Vec::new();
    for path in inputs {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        match serde_json::from_str::<Vec<EvalReport>>(&text) {
            Ok(many) => reports.extend(many),
            Err(_) => reports.push(
                serde_json::from_str::<EvalReport>(&text).with_context(|| format!("parsing {}", path.display()))?,
            ),
        }
    }
    create_dir(dir)?;
    let csv = relinfill::evaluation::csv_string(&reports)?;
    fs::write(dir.join("report.csv"), &csv).with_context(|| format!("writing {}", dir.display()))?;
    manifest::write(dir, "report", cfg, &["report.csv".into()])?;
    print!("{csv}");
    Ok(())
}

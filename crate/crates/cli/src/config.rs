use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use relinfill::dataset::{BucketThresholds, KShotConfig, SynthConfig};
use relinfill::decoding::DecodeConfig;
use relinfill::model::{ModelConfig, OptimConfig, TrainConfig};
use relinfill::prompting::TemplateConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Full corpus for `sample`.
    pub corpus: Option<PathBuf>,
    /// Directory with train/dev/test splits and schema.json.
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Handmade verbalization table (TSV) attached to the schema.
    pub handmade: Option<PathBuf>,
    /// Training output directory used by `eval`.
    pub model: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalFlags {
    /// Exclude the schema's negative label from true positives.
    pub exclude_negative: bool,
    pub frequency_buckets: bool,
    pub buckets: BucketThresholds,
}

impl Default for EvalFlags {
    fn default() -> Self {
        Self {
            exclude_negative: true,
            frequency_buckets: true,
            buckets: BucketThresholds::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub kshot: KShotConfig,
    pub template: TemplateConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub eval: EvalFlags,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 13,
            paths: Paths::default(),
            synth: SynthConfig::default(),
            kshot: KShotConfig::default(),
            template: TemplateConfig::default(),
            model: ModelConfig::default(),
            optim: OptimConfig::desk_defaults(),
            train: TrainConfig {
                epochs: 60,
                ..TrainConfig::default()
            },
            decode: DecodeConfig::default(),
            eval: EvalFlags::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("invalid config {}: {}: {}", path.display(), e.path(), e.inner()))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.kshot.validate()?;
        self.template.validate()?;
        self.model.validate()?;
        self.optim.validate()?;
        self.train.validate()?;
        self.eval.buckets.validate()?;
        if self.template.max_source_len > self.model.max_positions {
            anyhow::bail!(
                "template.max_source_len ({}) exceeds model.max_positions ({})",
                self.template.max_source_len,
                self.model.max_positions
            );
        }
        Ok(())
    }
}

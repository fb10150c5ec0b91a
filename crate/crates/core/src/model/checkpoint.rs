//! JSON checkpoint container.
//!
//! ```text
//! {
//!   "format": "relinfill-checkpoint", "version": 1,
//!   "model": ModelConfig, "template": TemplateConfig,
//!   "vocab": [token, ...],            // id order
//!   "n_prompt": usize,
//!   "tensors": [{"name", "rows", "cols", "data": [row-major f64]}, ...]
//! }
//! ```
//! Tensors appear in layout order; loading checks names and shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use super::tensor::Mat;
use crate::error::{Error, Result};
use crate::prompting::TemplateConfig;
use crate::tokenizer::Vocab;

pub const CHECKPOINT_FORMAT: &str = "relinfill-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocab,
    pub template: TemplateConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: ModelConfig,
    template: TemplateConfig,
    vocab: Vec<String>,
    n_prompt: usize,
    tensors: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.params.config().clone(),
            template: self.template.clone(),
            vocab: self.vocab.tokens().to_vec(),
            n_prompt: self.params.num_prompts(),
            tensors: self
                .params
                .infos()
                .iter()
                .zip(self.params.values())
                .map(|(info, m)| StoredTensor {
                    name: info.name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.data().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", file.version)));
        }
        let vocab = Vocab::from_list(file.vocab)?;
        let mut tensors = Vec::with_capacity(file.tensors.len());
        let mut infos = super::params::expected_infos(&file.model, file.n_prompt, vocab.len()).into_iter();
        for t in file.tensors {
            if t.data.len() != t.rows * t.cols {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` holds {} values for shape {}x{}",
                    t.name,
                    t.data.len(),
                    t.rows,
                    t.cols
                )));
            }
            let mut info = infos.next().ok_or_else(|| Error::Checkpoint("too many tensors".into()))?;
            if info.name != t.name {
                return Err(Error::Checkpoint(format!("expected tensor `{}`, found `{}`", info.name, t.name)));
            }
            info.rows = t.rows;
            info.cols = t.cols;
            tensors.push((info, Mat::from_vec(t.rows, t.cols, t.data)));
        }
        let params = ModelParams::from_tensors(&file.model, file.n_prompt, vocab.len(), tensors)?;
        Ok(Self {
            params,
            vocab,
            template: file.template,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

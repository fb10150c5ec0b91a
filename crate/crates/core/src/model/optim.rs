use serde::{Deserialize, Serialize};

use super::params::{ModelParams, ParamGroup};
use super::tape::Gradients;
use super::tensor::Mat;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr_model: f64,
    /// Learning rate of the continuous prompt embeddings.
    pub lr_prompt: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self::fine_tune_defaults()
    }
}

impl OptimConfig {
    /// Settings used for fine-tuning large pre-trained models.
    pub fn fine_tune_defaults() -> Self {
        Self {
            lr_model: 3e-5,
            lr_prompt: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }

    /// Settings for the small from-scratch desk model.
    pub fn desk_defaults() -> Self {
        Self {
            lr_model: 1e-3,
            lr_prompt: 1e-3,
            ..Self::fine_tune_defaults()
        }
    }

    pub fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Model => self.lr_model,
            ParamGroup::Prompt => self.lr_prompt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, v: f64| Error::Config(format!("optim.{field} is out of range: {v}"));
        if !(self.lr_model >= 0.0 && self.lr_model.is_finite()) {
            return Err(bad("lr_model", self.lr_model));
        }
        if !(self.lr_prompt >= 0.0 && self.lr_prompt.is_finite()) {
            return Err(bad("lr_prompt", self.lr_prompt));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(bad("beta1", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(bad("beta2", self.beta2));
        }
        if !(self.eps > 0.0) {
            return Err(bad("eps", self.eps));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(bad("weight_decay", self.weight_decay));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Mat> = params.values().iter().map(|t| Mat::zeros(t.rows(), t.cols())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One AdamW update with decoupled weight decay:
/// `θ ← θ(1 − lr·λ)` then `θ ← θ − lr·m̂/(√v̂ + ε)`.
pub fn adamw_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, opt: &OptimConfig) -> Result<()> {
    let n = params.values().len();
    if grads.len() != n || state.m.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors, {} gradients, {} optimizer slots",
            n,
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.values().iter().zip(grads.tensors()).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{}` is {:?} but its gradient is {:?}",
                params.infos()[i].name,
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - opt.beta1.powi(t);
    let bc2 = 1.0 - opt.beta2.powi(t);
    let groups: Vec<ParamGroup> = params.infos().iter().map(|i| i.group).collect();
    for (i, p) in params.values_mut().iter_mut().enumerate() {
        let lr = opt.lr(groups[i]);
        let decay = 1.0 - lr * opt.weight_decay;
        let g = grads.tensors()[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, w) in p.data_mut().iter_mut().enumerate() {
            *w *= decay;
            m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g[k];
            v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + opt.eps);
        }
    }
    Ok(())
}

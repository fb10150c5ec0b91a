//! Compact encoder-decoder with substitutable prompt embeddings.

mod checkpoint;
mod mask;
mod optim;
mod params;
pub mod tape;
pub mod tensor;
mod train;
mod transformer;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mask::{partial_causal_mask, AttentionMask};
pub use optim::{adamw_step, AdamState, OptimConfig};
pub use params::{
    init_params, Architecture, ModelConfig, ModelParams, ParamGroup, TensorInfo, INIT_STD,
};
pub use tape::{Gradients, ParamId};
pub use tensor::Mat;
pub use train::{build_examples, train, EpochStats, TrainConfig, TrainSetup, TrainStats};
pub use transformer::{
    compute_grads, decode_step, decoder_logits, embed_source, encode, encode_source, loss,
    Distribution, EncoderStates, Example,
};

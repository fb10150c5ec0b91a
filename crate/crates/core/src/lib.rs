//! Relation classification as text infilling over a small from-scratch
//! sequence-to-sequence model with continuous prompt embeddings.

pub mod dataset;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod prompting;
pub mod rng;
pub mod tokenizer;

pub use error::{Error, Result};

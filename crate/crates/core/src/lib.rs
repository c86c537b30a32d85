//! Relation embeddings for word pairs from a prompt-driven, fine-tuned
//! masked language model, plus the analogy and relation-classification
//! evaluations that consume them.

pub mod cli;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod lm_backend;
pub mod prompting;
pub mod scalar;
pub mod synthetic;
pub mod tape;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ReferenceEncoder32 = lm_backend::ReferenceEncoder<f32>;
pub type ReferenceEncoder64 = lm_backend::ReferenceEncoder<f64>;
pub type ClassifierHead32 = training::ClassifierHead<f32>;
pub type ClassifierHead64 = training::ClassifierHead<f64>;
pub type EmbeddingStore32 = embedding::EmbeddingStore<f32>;
pub type EmbeddingStore64 = embedding::EmbeddingStore<f64>;
pub type Prompt32 = prompting::Prompt<f32>;
pub type Prompt64 = prompting::Prompt<f64>;
pub type Mlp32 = evaluation::Mlp<f32>;
pub type Mlp64 = evaluation::Mlp<f64>;

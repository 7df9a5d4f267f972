//! Chest X-ray style image captioning built from scratch: a vision-transformer
//! encoder, a GPT-style decoder with cross-attention over image patches,
//! Adam training on a small reverse-mode autodiff engine, and the usual
//! caption metrics (BLEU-1..4, ROUGE-L, METEOR, CIDEr).

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod image;
pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod tensor;
pub mod tokenizer;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use decoder::{DecoderConfig, ModelConfig};
pub use encoder::EncoderConfig;
pub use error::{Error, Result};
pub use image::ImageTensor;
pub use params::{finite_diff_check, ModelParams};
pub use tensor::{Tape, Tensor, Var};
pub use tokenizer::{TokenSequence, Vocabulary};
pub use trainer::TrainConfig;

pub const LAYER_NORM_EPS: f64 = 1e-5;

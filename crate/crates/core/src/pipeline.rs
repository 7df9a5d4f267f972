//! Glue between manifests, vocabularies, training and captioning.

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::DatasetManifest;
use crate::decoder::{generate_greedy, ModelConfig};
use crate::error::Result;
use crate::image::{load_image, ImageTensor};
use crate::tokenizer::{self, tokenize, Vocabulary};
use crate::trainer::{train, LossLog, TrainingSample};

/// Loads every manifest image and encodes its caption.
pub fn load_samples(manifest: &DatasetManifest, config: &ModelConfig, vocab: &Vocabulary) -> Result<Vec<TrainingSample>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let image = load_image(&e.image, config.encoder.image_size, config.encoder.channels)?;
            let caption = tokenizer::encode(&tokenize(&e.caption), vocab, config.decoder.max_len)?;
            Ok(TrainingSample { image, caption })
        })
        .collect()
}

/// Builds the vocabulary, trains, and packs the result as a checkpoint.
pub fn train_on_manifest(manifest: &DatasetManifest, run: &RunConfig, min_count: usize) -> Result<(Checkpoint, LossLog)> {
    let captions: Vec<&str> = manifest.entries.iter().map(|e| e.caption.as_str()).collect();
    let vocab = Vocabulary::build(&captions, min_count)?;
    let config = run.model_config(vocab.len())?;
    let samples = load_samples(manifest, &config, &vocab)?;
    let outcome = train(&samples, &config, &run.train)?;
    Ok((
        Checkpoint {
            config,
            vocab,
            params: outcome.params,
        },
        outcome.log,
    ))
}

/// Greedy caption for one image, as plain text.
pub fn caption_image(checkpoint: &Checkpoint, image: &ImageTensor) -> Result<String> {
    let enc = &checkpoint.config.encoder;
    let image = image.center_crop_resize(enc.image_size)?.with_channels(enc.channels)?;
    let seq = generate_greedy(&image, &checkpoint.config, &checkpoint.params, &checkpoint.vocab)?;
    tokenizer::decode(&seq, &checkpoint.vocab)
}

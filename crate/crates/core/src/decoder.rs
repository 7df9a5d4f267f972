//! Autoregressive caption decoder: causal self-attention, cross-attention
//! over encoder features, feed-forward blocks and a linear vocabulary head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{self, AttentionOutput};
use crate::encoder::{self, EncoderConfig};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::params::{Bindings, ModelParams};
use crate::tensor::{softmax_into, Tape, Tensor, Var};
use crate::tokenizer::{TokenSequence, Vocabulary, BOS, EOS, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub model_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ff_dim: usize,
    /// Filled in from the vocabulary when training starts.
    pub vocab_size: usize,
    /// Generation cap, counting BOS and EOS.
    pub max_len: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            model_dim: 32,
            num_heads: 2,
            num_layers: 2,
            ff_dim: 64,
            vocab_size: 0,
            max_len: 24,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        attention::head_dim(self.model_dim, self.num_heads)?;
        if !self.model_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("model_dim {} must be even", self.model_dim)));
        }
        if self.vocab_size <= EOS {
            return Err(Error::Config(format!("vocab_size {} too small", self.vocab_size)));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max_len must be at least 2".into()));
        }
        if self.ff_dim == 0 {
            return Err(Error::Config("ff_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder and decoder geometry of one captioning model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.model_dim != self.decoder.model_dim {
            return Err(Error::Config(format!(
                "encoder model_dim {} differs from decoder model_dim {}",
                self.encoder.model_dim, self.decoder.model_dim
            )));
        }
        Ok(())
    }
}

pub fn init_decoder_params(config: &DecoderConfig, params: &mut ModelParams, rng: &mut impl Rng) -> Result<()> {
    config.validate()?;
    let d = config.model_dim;
    params.insert_glorot("decoder.token_embedding", config.vocab_size, d, rng)?;
    for l in 0..config.num_layers {
        let p = format!("decoder.layers.{l}");
        attention::init_layer_norm(params, &format!("{p}.ln1"), d)?;
        attention::init_attention(params, &format!("{p}.self_attn"), d, config.num_heads, rng)?;
        attention::init_layer_norm(params, &format!("{p}.ln2"), d)?;
        attention::init_attention(params, &format!("{p}.cross_attn"), d, config.num_heads, rng)?;
        attention::init_layer_norm(params, &format!("{p}.ln3"), d)?;
        attention::init_feed_forward(params, &format!("{p}.ff"), d, config.ff_dim, rng)?;
    }
    params.insert_glorot("decoder.head.weight", d, config.vocab_size, rng)?;
    params.insert_filled("decoder.head.bias", &[1, config.vocab_size], 0.0)
}

/// Fresh seeded parameters for the whole model.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    encoder::init_encoder_params(&config.encoder, &mut params, &mut rng)?;
    init_decoder_params(&config.decoder, &mut params, &mut rng)?;
    Ok(params)
}

/// Single-block causal self-attention with parameters under `prefix`.
/// Returns the output and the per-head attention maps.
pub fn causal_self_attention(
    x: &Tensor,
    params: &ModelParams,
    prefix: &str,
    num_heads: usize,
) -> Result<(Tensor, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let out = attention::multi_head_attention(&mut tape, &b, prefix, num_heads, xv, xv, true)?;
    Ok(collect(&tape, out))
}

/// Text queries attending over every image feature row (no mask).
pub fn cross_modal_attention(
    text: &Tensor,
    image_features: &Tensor,
    params: &ModelParams,
    prefix: &str,
    num_heads: usize,
) -> Result<(Tensor, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let t = tape.constant(text.clone());
    let i = tape.constant(image_features.clone());
    let out = attention::multi_head_attention(&mut tape, &b, prefix, num_heads, t, i, false)?;
    Ok(collect(&tape, out))
}

fn collect(tape: &Tape, out: AttentionOutput) -> (Tensor, Vec<Tensor>) {
    (
        tape.value(out.output).clone(),
        out.maps.iter().map(|m| tape.value(*m).clone()).collect(),
    )
}

#[derive(Debug, Clone)]
pub struct DecodedVars {
    /// `T x vocab_size`.
    pub logits: Var,
    /// `[layer][head]`, each `T x T`.
    pub self_maps: Vec<Vec<Var>>,
    /// `[layer][head]`, each `T x N`.
    pub cross_maps: Vec<Vec<Var>>,
}

/// Records the decoder forward pass for token ids `ids` on `tape`.
pub fn decoder_forward_on(
    tape: &mut Tape,
    bindings: &Bindings,
    ids: &[usize],
    encoder_features: Var,
    config: &DecoderConfig,
) -> Result<DecodedVars> {
    if let Some(&bad) = ids.iter().find(|&&id| id >= config.vocab_size) {
        return Err(Error::Index(format!(
            "token id {bad} out of range for vocab_size {}",
            config.vocab_size
        )));
    }
    let emb = tape.gather_rows(bindings.get("decoder.token_embedding")?, ids)?;
    let pe = tape.constant(encoder::positional_encoding(ids.len(), config.model_dim)?);
    let mut x = tape.add(emb, pe)?;
    let mut self_maps = Vec::with_capacity(config.num_layers);
    let mut cross_maps = Vec::with_capacity(config.num_layers);
    for l in 0..config.num_layers {
        let p = format!("decoder.layers.{l}");
        let h = attention::layer_norm(tape, bindings, &format!("{p}.ln1"), x)?;
        let sa = attention::multi_head_attention(tape, bindings, &format!("{p}.self_attn"), config.num_heads, h, h, true)?;
        x = tape.add(x, sa.output)?;
        let h = attention::layer_norm(tape, bindings, &format!("{p}.ln2"), x)?;
        let ca = attention::multi_head_attention(
            tape,
            bindings,
            &format!("{p}.cross_attn"),
            config.num_heads,
            h,
            encoder_features,
            false,
        )?;
        x = tape.add(x, ca.output)?;
        let h = attention::layer_norm(tape, bindings, &format!("{p}.ln3"), x)?;
        let f = attention::feed_forward(tape, bindings, &format!("{p}.ff"), h)?;
        x = tape.add(x, f)?;
        self_maps.push(sa.maps);
        cross_maps.push(ca.maps);
    }
    let logits = tape.matmul(x, bindings.get("decoder.head.weight")?)?;
    let logits = tape.add(logits, bindings.get("decoder.head.bias")?)?;
    Ok(DecodedVars {
        logits,
        self_maps,
        cross_maps,
    })
}

/// Logits (`T x vocab_size`) for a token sequence given encoder features.
pub fn decoder_forward(
    tokens: &TokenSequence,
    encoder_features: &Tensor,
    config: &DecoderConfig,
    params: &ModelParams,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let f = tape.constant(encoder_features.clone());
    let out = decoder_forward_on(&mut tape, &b, &tokens.ids, f, config)?;
    Ok(tape.value(out.logits).clone())
}

pub fn next_token_distribution(logits_row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits_row.len()];
    softmax_into(logits_row, &mut out);
    out
}

/// Index of the largest probability, skipping PAD and BOS; ties go to the lowest id.
pub fn greedy_pick(probs: &[f64]) -> usize {
    let mut best = EOS;
    for (id, &p) in probs.iter().enumerate().skip(EOS + 1) {
        if p > probs[best] {
            best = id;
        }
    }
    best
}

/// Greedy decoding from `[BOS]` until EOS or `max_len` ids.
pub fn generate_greedy(
    image: &ImageTensor,
    config: &ModelConfig,
    params: &ModelParams,
    vocab: &Vocabulary,
) -> Result<TokenSequence> {
    config.validate()?;
    if vocab.len() != config.decoder.vocab_size {
        return Err(Error::Config(format!(
            "vocabulary has {} tokens but the decoder expects {}",
            vocab.len(),
            config.decoder.vocab_size
        )));
    }
    let features = encoder::encode(image, &config.encoder, params)?.features;
    let max_len = config.decoder.max_len;
    let mut ids = vec![BOS];
    while ids.len() < max_len {
        let mut tape = Tape::new();
        let b = params.bind(&mut tape);
        let f = tape.constant(features.clone());
        let out = decoder_forward_on(&mut tape, &b, &ids, f, &config.decoder)?;
        let logits = tape.value(out.logits);
        let next = greedy_pick(&next_token_distribution(logits.row(ids.len() - 1)));
        debug_assert!(next != PAD && next != BOS);
        ids.push(next);
        if next == EOS {
            break;
        }
    }
    Ok(TokenSequence { ids, max_len })
}

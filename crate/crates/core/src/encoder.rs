//! Vision-transformer encoder: patch partitioning, linear patch embedding with
//! sinusoidal positions, and pre-norm self-attention blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{self, AttentionOutput};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::params::{Bindings, ModelParams};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Side of the square input images, in pixels.
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ff_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            channels: 1,
            patch_size: 8,
            model_dim: 32,
            num_heads: 2,
            num_layers: 2,
            ff_dim: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if !(self.channels == 1 || self.channels == 3) {
            return Err(Error::Config(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if !self.model_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("model_dim {} must be even", self.model_dim)));
        }
        if self.ff_dim == 0 {
            return Err(Error::Config("ff_dim must be positive".into()));
        }
        attention::head_dim(self.model_dim, self.num_heads).map(|_| ())
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid_side() * self.grid_side()
    }
}

/// Embedded patches ready for the encoder stack.
#[derive(Debug, Clone)]
pub struct PatchSequence {
    pub num_patches: usize,
    pub patch_dim: usize,
    pub embeddings: Tensor,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub features: Tensor,
    /// `attention_maps[layer][head]` is `num_patches x num_patches`.
    pub attention_maps: Vec<Vec<Tensor>>,
    pub grid_height: usize,
    pub grid_width: usize,
}

/// Tape-level encoder result used during training.
#[derive(Debug, Clone)]
pub struct EncodedVars {
    pub features: Var,
    pub attention_maps: Vec<Vec<Var>>,
    pub grid_height: usize,
    pub grid_width: usize,
}

/// Splits an image into non-overlapping square patches, row-major over the
/// patch grid. Each output row is one patch flattened in (row, column,
/// channel) order.
pub fn patchify(image: &ImageTensor, patch_size: usize) -> Result<Tensor> {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::Config(format!(
            "image {h}x{w} is not divisible by patch size {patch_size}"
        )));
    }
    let (gh, gw) = (h / patch_size, w / patch_size);
    let patch_dim = patch_size * patch_size * c;
    let mut data = Vec::with_capacity(gh * gw * patch_dim);
    for py in 0..gh {
        for px in 0..gw {
            for y in 0..patch_size {
                let start = ((py * patch_size + y) * w + px * patch_size) * c;
                data.extend_from_slice(&image.pixels()[start..start + patch_size * c]);
            }
        }
    }
    Tensor::new(vec![gh * gw, patch_dim], data)
}

/// `PE(pos, 2i) = sin(pos / 10000^(2i/dim))`, `PE(pos, 2i+1) = cos(pos / 10000^(2i/dim))`.
pub fn positional_encoding(num_positions: usize, dim: usize) -> Result<Tensor> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::Config(format!("positional encoding width must be even, got {dim}")));
    }
    if num_positions == 0 {
        return Err(Error::Config("positional encoding needs at least one position".into()));
    }
    let mut data = vec![0.0; num_positions * dim];
    for pos in 0..num_positions {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf((2 * i) as f64 / dim as f64);
            data[pos * dim + 2 * i] = angle.sin();
            data[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(vec![num_positions, dim], data)
}

/// `patches x projection + pe`.
pub fn embed_patches(patches: &Tensor, projection: &Tensor, pe: &Tensor) -> Result<PatchSequence> {
    let mut tape = Tape::new();
    let p = tape.constant(patches.clone());
    let w = tape.constant(projection.clone());
    let e = tape.constant(pe.clone());
    let out = embed_on(&mut tape, p, w, e)?;
    Ok(PatchSequence {
        num_patches: patches.rows(),
        patch_dim: patches.cols(),
        embeddings: tape.value(out).clone(),
    })
}

fn embed_on(tape: &mut Tape, patches: Var, projection: Var, pe: Var) -> Result<Var> {
    let proj = tape.matmul(patches, projection)?;
    if tape.value(proj).shape() != tape.value(pe).shape() {
        return Err(Error::shape("embed_patches", tape.value(proj).shape(), tape.value(pe).shape()));
    }
    tape.add(proj, pe)
}

/// Multi-head self-attention over `x` with explicit per-head parameters.
/// Returns the projected output and one attention map per head.
pub fn multi_head_self_attention(
    x: &Tensor,
    params: &ModelParams,
    prefix: &str,
    num_heads: usize,
) -> Result<(Tensor, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let AttentionOutput { output, maps } =
        attention::multi_head_attention(&mut tape, &b, prefix, num_heads, xv, xv, false)?;
    Ok((
        tape.value(output).clone(),
        maps.iter().map(|m| tape.value(*m).clone()).collect(),
    ))
}

pub fn init_encoder_params(config: &EncoderConfig, params: &mut ModelParams, rng: &mut impl Rng) -> Result<()> {
    config.validate()?;
    let d = config.model_dim;
    params.insert_glorot("encoder.patch_proj", config.patch_dim(), d, rng)?;
    for l in 0..config.num_layers {
        let p = format!("encoder.layers.{l}");
        attention::init_layer_norm(params, &format!("{p}.ln1"), d)?;
        attention::init_attention(params, &format!("{p}.attn"), d, config.num_heads, rng)?;
        attention::init_layer_norm(params, &format!("{p}.ln2"), d)?;
        attention::init_feed_forward(params, &format!("{p}.ff"), d, config.ff_dim, rng)?;
    }
    Ok(())
}

/// Records the encoder forward pass on `tape`.
pub fn encode_on(
    tape: &mut Tape,
    bindings: &Bindings,
    image: &ImageTensor,
    config: &EncoderConfig,
) -> Result<EncodedVars> {
    config.validate()?;
    let patches = patchify(image, config.patch_size)?;
    let n = patches.rows();
    let patches = tape.constant(patches);
    let pe = tape.constant(positional_encoding(n, config.model_dim)?);
    let mut x = embed_on(tape, patches, bindings.get("encoder.patch_proj")?, pe)?;
    let mut attention_maps = Vec::with_capacity(config.num_layers);
    for l in 0..config.num_layers {
        let p = format!("encoder.layers.{l}");
        let h = attention::layer_norm(tape, bindings, &format!("{p}.ln1"), x)?;
        let att = attention::multi_head_attention(tape, bindings, &format!("{p}.attn"), config.num_heads, h, h, false)?;
        x = tape.add(x, att.output)?;
        let h = attention::layer_norm(tape, bindings, &format!("{p}.ln2"), x)?;
        let f = attention::feed_forward(tape, bindings, &format!("{p}.ff"), h)?;
        x = tape.add(x, f)?;
        attention_maps.push(att.maps);
    }
    Ok(EncodedVars {
        features: x,
        attention_maps,
        grid_height: image.height() / config.patch_size,
        grid_width: image.width() / config.patch_size,
    })
}

pub fn encode(image: &ImageTensor, config: &EncoderConfig, params: &ModelParams) -> Result<EncoderOutput> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let enc = encode_on(&mut tape, &b, image, config)?;
    Ok(EncoderOutput {
        features: tape.value(enc.features).clone(),
        attention_maps: enc
            .attention_maps
            .iter()
            .map(|heads| heads.iter().map(|m| tape.value(*m).clone()).collect())
            .collect(),
        grid_height: enc.grid_height,
        grid_width: enc.grid_width,
    })
}

/// The attention row of `query_patch` in (`layer`, `head`), reshaped to the patch grid.
pub fn attention_heatmap(output: &EncoderOutput, layer: usize, head: usize, query_patch: usize) -> Result<Vec<Vec<f64>>> {
    let heads = output
        .attention_maps
        .get(layer)
        .ok_or_else(|| Error::Index(format!("layer {layer} out of range ({} layers)", output.attention_maps.len())))?;
    let map = heads
        .get(head)
        .ok_or_else(|| Error::Index(format!("head {head} out of range ({} heads)", heads.len())))?;
    if query_patch >= map.rows() {
        return Err(Error::Index(format!(
            "patch {query_patch} out of range ({} patches)",
            map.rows()
        )));
    }
    Ok(map
        .row(query_patch)
        .chunks(output.grid_width)
        .map(<[f64]>::to_vec)
        .collect())
}

//! Scaled dot-product attention shared by the encoder and decoder.
//!
//! Each head owns its own projection matrices, registered as
//! `{prefix}.q.{h}`, `{prefix}.k.{h}`, `{prefix}.v.{h}` (each `model_dim x d_k`),
//! plus one output projection `{prefix}.out` (`model_dim x model_dim`).

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{Bindings, ModelParams};
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub output: Var,
    /// One `queries x keys` probability matrix per head.
    pub maps: Vec<Var>,
}

pub fn head_dim(model_dim: usize, num_heads: usize) -> Result<usize> {
    if num_heads == 0 || !model_dim.is_multiple_of(num_heads) {
        return Err(Error::Config(format!(
            "model_dim {model_dim} is not divisible by num_heads {num_heads}"
        )));
    }
    Ok(model_dim / num_heads)
}

pub fn init_attention(
    params: &mut ModelParams,
    prefix: &str,
    model_dim: usize,
    num_heads: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let dk = head_dim(model_dim, num_heads)?;
    for kind in ["q", "k", "v"] {
        for h in 0..num_heads {
            params.insert_glorot(&format!("{prefix}.{kind}.{h}"), model_dim, dk, rng)?;
        }
    }
    params.insert_glorot(&format!("{prefix}.out"), model_dim, model_dim, rng)
}

/// `Concat(head_1..head_h) W^O` where
/// `head_i = Softmax((X_q W_i^Q)(X_kv W_i^K)^T / sqrt(d_k)) (X_kv W_i^V)`.
///
/// With `causal`, query row `t` only attends to key rows `<= t`.
pub fn multi_head_attention(
    tape: &mut Tape,
    bindings: &Bindings,
    prefix: &str,
    num_heads: usize,
    queries: Var,
    keys_values: Var,
    causal: bool,
) -> Result<AttentionOutput> {
    let qd = tape.value(queries).shape().to_vec();
    let kd = tape.value(keys_values).shape().to_vec();
    if qd.len() != 2 || kd.len() != 2 || qd[1] != kd[1] {
        return Err(Error::shape("attention", &qd, &kd));
    }
    let dk = head_dim(qd[1], num_heads)?;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(num_heads);
    let mut maps = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let q = tape.matmul(queries, bindings.get(&format!("{prefix}.q.{h}"))?)?;
        let k = tape.matmul(keys_values, bindings.get(&format!("{prefix}.k.{h}"))?)?;
        let v = tape.matmul(keys_values, bindings.get(&format!("{prefix}.v.{h}"))?)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, scale);
        let probs = if causal {
            tape.causal_softmax_rows(scores)?
        } else {
            tape.softmax_rows(scores)?
        };
        heads.push(tape.matmul(probs, v)?);
        maps.push(probs);
    }
    let cat = tape.concat_cols(&heads)?;
    let output = tape.matmul(cat, bindings.get(&format!("{prefix}.out"))?)?;
    Ok(AttentionOutput { output, maps })
}

/// Layer norm with parameters `{prefix}.gamma` / `{prefix}.beta`.
pub(crate) fn layer_norm(tape: &mut Tape, bindings: &Bindings, prefix: &str, x: Var) -> Result<Var> {
    let g = bindings.get(&format!("{prefix}.gamma"))?;
    let b = bindings.get(&format!("{prefix}.beta"))?;
    tape.layer_norm(x, g, b, crate::LAYER_NORM_EPS)
}

pub(crate) fn init_layer_norm(params: &mut ModelParams, prefix: &str, dim: usize) -> Result<()> {
    params.insert_filled(&format!("{prefix}.gamma"), &[1, dim], 1.0)?;
    params.insert_filled(&format!("{prefix}.beta"), &[1, dim], 0.0)
}

/// `GELU(x W1 + b1) W2 + b2`.
pub(crate) fn feed_forward(tape: &mut Tape, bindings: &Bindings, prefix: &str, x: Var) -> Result<Var> {
    let h = tape.matmul(x, bindings.get(&format!("{prefix}.w1"))?)?;
    let h = tape.add(h, bindings.get(&format!("{prefix}.b1"))?)?;
    let h = tape.gelu(h);
    let o = tape.matmul(h, bindings.get(&format!("{prefix}.w2"))?)?;
    tape.add(o, bindings.get(&format!("{prefix}.b2"))?)
}

pub(crate) fn init_feed_forward(
    params: &mut ModelParams,
    prefix: &str,
    dim: usize,
    hidden: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    params.insert_glorot(&format!("{prefix}.w1"), dim, hidden, rng)?;
    params.insert_filled(&format!("{prefix}.b1"), &[1, hidden], 0.0)?;
    params.insert_glorot(&format!("{prefix}.w2"), hidden, dim, rng)?;
    params.insert_filled(&format!("{prefix}.b2"), &[1, dim], 0.0)
}

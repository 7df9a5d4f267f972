//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian `u32`, values little-endian `f64`):
//!
//! ```text
//! "XVGC" | version
//! encoder: image_size channels patch_size model_dim num_heads num_layers ff_dim
//! decoder: model_dim num_heads num_layers ff_dim vocab_size max_len
//! vocab:   count, then per token: byte length, UTF-8 bytes
//! params:  count, then per tensor: name length, name, ndim, dims.., values..
//! ```

use std::path::Path;

use crate::decoder::{DecoderConfig, ModelConfig};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::tensor::Tensor;
use crate::tokenizer::Vocabulary;

pub const MAGIC: &[u8; 4] = b"XVGC";
pub const VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: [u32; 1] = [VERSION];

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("value fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let e = &self.config.encoder;
        for v in [e.image_size, e.channels, e.patch_size, e.model_dim, e.num_heads, e.num_layers, e.ff_dim] {
            put_u32(&mut out, v);
        }
        let d = &self.config.decoder;
        for v in [d.model_dim, d.num_heads, d.num_layers, d.ff_dim, d.vocab_size, d.max_len] {
            put_u32(&mut out, v);
        }
        put_u32(&mut out, self.vocab.len());
        for t in self.vocab.tokens() {
            put_str(&mut out, t);
        }
        put_u32(&mut out, self.params.len());
        for (name, t) in self.params.iter() {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Integrity("missing XVGC magic".into()));
        }
        let version = r.u32()?;
        if !SUPPORTED_VERSIONS.contains(&version) {
            return Err(Error::Version {
                found: version,
                supported: SUPPORTED_VERSIONS.to_vec(),
            });
        }
        let mut enc = [0usize; 7];
        for v in enc.iter_mut() {
            *v = r.u32()? as usize;
        }
        let mut dec = [0usize; 6];
        for v in dec.iter_mut() {
            *v = r.u32()? as usize;
        }
        let config = ModelConfig {
            encoder: EncoderConfig {
                image_size: enc[0],
                channels: enc[1],
                patch_size: enc[2],
                model_dim: enc[3],
                num_heads: enc[4],
                num_layers: enc[5],
                ff_dim: enc[6],
            },
            decoder: DecoderConfig {
                model_dim: dec[0],
                num_heads: dec[1],
                num_layers: dec[2],
                ff_dim: dec[3],
                vocab_size: dec[4],
                max_len: dec[5],
            },
        };
        let n_tokens = r.u32()? as usize;
        let mut vocab_text = String::new();
        for _ in 0..n_tokens {
            vocab_text.push_str(&r.string()?);
            vocab_text.push('\n');
        }
        let vocab = Vocabulary::from_text(&vocab_text)?;
        let n_params = r.u32()? as usize;
        let mut params = ModelParams::new();
        for _ in 0..n_params {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().product::<usize>();
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::Integrity("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.insert(name, Tensor::new(shape, data).map_err(|e| Error::Integrity(e.to_string()))?)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Integrity(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        config
            .validate()
            .map_err(|e| Error::Integrity(format!("stored configuration is invalid: {e}")))?;
        Ok(Self { config, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Integrity(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Integrity("invalid UTF-8 string".into()))
    }
}

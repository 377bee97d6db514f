//! Post-norm transformer encoder layer with ReLU feed-forward.

use crate::error::{Error, Result};

use super::ops::{layer_norm, linear, relu, scaled_attention};
use super::tensor::Tensor;
use super::weights::{Init, ParamSpec, WeightStore};

pub struct EncoderLayerWeights<'a> {
    /// `[d, 3d]`: query, key and value projections side by side.
    pub in_weight: &'a Tensor,
    pub in_bias: &'a Tensor,
    pub out_weight: &'a Tensor,
    pub out_bias: &'a Tensor,
    pub norm1_gamma: &'a Tensor,
    pub norm1_beta: &'a Tensor,
    pub ff1_weight: &'a Tensor,
    pub ff1_bias: &'a Tensor,
    pub ff2_weight: &'a Tensor,
    pub ff2_bias: &'a Tensor,
    pub norm2_gamma: &'a Tensor,
    pub norm2_beta: &'a Tensor,
    pub heads: usize,
}

pub fn encoder_layer_specs(prefix: &str, d: usize, ff: usize) -> Vec<ParamSpec> {
    let mut s = Vec::new();
    s.extend(ParamSpec::dense(&format!("{prefix}.attn.in"), d, 3 * d));
    s.extend(ParamSpec::dense(&format!("{prefix}.attn.out"), d, d));
    s.push(ParamSpec::new(format!("{prefix}.norm1.gamma"), &[d], Init::Ones));
    s.push(ParamSpec::new(format!("{prefix}.norm1.beta"), &[d], Init::Zeros));
    s.extend(ParamSpec::dense(&format!("{prefix}.ff1"), d, ff));
    s.extend(ParamSpec::dense(&format!("{prefix}.ff2"), ff, d));
    s.push(ParamSpec::new(format!("{prefix}.norm2.gamma"), &[d], Init::Ones));
    s.push(ParamSpec::new(format!("{prefix}.norm2.beta"), &[d], Init::Zeros));
    s
}

impl<'a> EncoderLayerWeights<'a> {
    pub fn from_store(w: &'a WeightStore, prefix: &str, d: usize, ff: usize, heads: usize) -> Result<Self> {
        let g = |name: &str, shape: &[usize]| w.get(&format!("{prefix}.{name}"), shape);
        Ok(Self {
            in_weight: g("attn.in.weight", &[d, 3 * d])?,
            in_bias: g("attn.in.bias", &[3 * d])?,
            out_weight: g("attn.out.weight", &[d, d])?,
            out_bias: g("attn.out.bias", &[d])?,
            norm1_gamma: g("norm1.gamma", &[d])?,
            norm1_beta: g("norm1.beta", &[d])?,
            ff1_weight: g("ff1.weight", &[d, ff])?,
            ff1_bias: g("ff1.bias", &[ff])?,
            ff2_weight: g("ff2.weight", &[ff, d])?,
            ff2_bias: g("ff2.bias", &[d])?,
            norm2_gamma: g("norm2.gamma", &[d])?,
            norm2_beta: g("norm2.beta", &[d])?,
            heads,
        })
    }
}

/// Columns `[start, start + width)` of a 2-D tensor.
fn columns(x: &Tensor, start: usize, width: usize) -> Result<Tensor> {
    let rows = x.rows();
    let mut data = Vec::with_capacity(rows * width);
    for r in 0..rows {
        data.extend_from_slice(&x.row(r)[start..start + width]);
    }
    Tensor::new(vec![rows, width], data)
}

/// Multi-head self-attention with `1/sqrt(d_head)` scaling, before the output projection.
pub fn multi_head_self_attention(tokens: &Tensor, w: &EncoderLayerWeights) -> Result<Tensor> {
    let (t, d) = (tokens.shape()[0], tokens.shape()[1]);
    if w.heads == 0 || d % w.heads != 0 {
        return Err(Error::invalid(format!("{} heads do not divide model dim {d}", w.heads)));
    }
    let dh = d / w.heads;
    let qkv = linear(tokens, w.in_weight, w.in_bias)?;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut out = vec![0.0f32; t * d];
    for h in 0..w.heads {
        let q = columns(&qkv, h * dh, dh)?;
        let k = columns(&qkv, d + h * dh, dh)?;
        let v = columns(&qkv, 2 * d + h * dh, dh)?;
        let (o, _) = scaled_attention(&q, &k, &v, scale)?;
        for r in 0..t {
            out[r * d + h * dh..r * d + (h + 1) * dh].copy_from_slice(o.row(r));
        }
    }
    Tensor::new(vec![t, d], out)
}

/// `x1 = LN(x + MHA(x))`, `y = LN(x1 + FF(x1))`.
pub fn transformer_encoder_layer(tokens: &Tensor, w: &EncoderLayerWeights) -> Result<Tensor> {
    let d = w.norm1_gamma.len();
    if tokens.rank() != 2 || tokens.shape()[1] != d {
        return Err(Error::Shape {
            op: "transformer_encoder_layer",
            left: tokens.shape().to_vec(),
            right: vec![d],
        });
    }
    let attn = linear(&multi_head_self_attention(tokens, w)?, w.out_weight, w.out_bias)?;
    let x1 = layer_norm(&tokens.add(&attn)?, w.norm1_gamma, w.norm1_beta)?;
    let hidden = relu(linear(&x1, w.ff1_weight, w.ff1_bias)?);
    let ff = linear(&hidden, w.ff2_weight, w.ff2_bias)?;
    layer_norm(&x1.add(&ff)?, w.norm2_gamma, w.norm2_beta)
}

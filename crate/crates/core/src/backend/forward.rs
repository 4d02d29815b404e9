//! Pre-norm transformer forward pass over explicit position ids and an
//! arbitrary visibility mask.

use ndarray::{s, Array1, Array2, Axis};

use super::mask::VisibilityMask;
use super::weights::DenoiserWeights;
use crate::distribution::Distribution;
use crate::error::{LeapError, Result};
use crate::sequence::TokenId;

const LAYER_NORM_EPS: f32 = 1e-5;
/// Additive score for keys a query may not see.
const MASKED_SCORE: f32 = -1e9;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub dists: Vec<Distribution>,
    pub top1: Vec<(TokenId, f64)>,
}

impl ForwardOutput {
    pub fn rows(&self) -> usize {
        self.dists.len()
    }
}

/// Sinusoidal encoding; identical ids give identical rows.
pub fn positional_encoding(pos: usize, d_model: usize) -> Vec<f32> {
    (0..d_model)
        .map(|j| {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
            if j % 2 == 0 {
                angle.sin() as f32
            } else {
                angle.cos() as f32
            }
        })
        .collect()
}

fn layer_norm(x: &Array2<f32>, scale: &Array1<f32>, bias: &Array1<f32>) -> Array2<f32> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let n = row.len() as f32;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * scale[j] + bias[j];
        }
    }
    out
}

pub fn gelu(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

/// Softmax in f64 of f32 logits.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn forward(
    weights: &DenoiserWeights,
    tokens: &[TokenId],
    position_ids: &[usize],
    mask: &VisibilityMask,
) -> Result<ForwardOutput> {
    let dims = weights.dims;
    let rows = tokens.len();
    if rows == 0 {
        return Err(LeapError::invalid("forward needs at least one row"));
    }
    if position_ids.len() != rows || mask.rows() != rows {
        return Err(LeapError::invalid(format!(
            "dimension mismatch: {rows} tokens, {} position ids, {}x{0} mask",
            position_ids.len(),
            mask.rows()
        )));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= dims.vocab) {
        return Err(LeapError::invalid(format!("token {t} outside vocabulary of {}", dims.vocab)));
    }
    if let Some(&p) = position_ids.iter().find(|&&p| p >= dims.max_pos) {
        return Err(LeapError::invalid(format!("position id {p} >= max_pos {}", dims.max_pos)));
    }
    mask.validate()?;

    let d = dims.d_model;
    let mut x = Array2::<f32>::zeros((rows, d));
    for (r, (&tok, &pos)) in tokens.iter().zip(position_ids).enumerate() {
        let pe = positional_encoding(pos, d);
        let emb = weights.token_embedding.row(tok as usize);
        for j in 0..d {
            x[[r, j]] = emb[j] + pe[j];
        }
    }

    let head_dim = dims.head_dim();
    let scale = 1.0 / (head_dim as f32).sqrt();
    let mut scores = vec![0f32; rows];
    for layer in &weights.layers {
        let h = layer_norm(&x, &layer.attn_norm_scale, &layer.attn_norm_bias);
        let q = h.dot(&layer.wq);
        let k = h.dot(&layer.wk);
        let v = h.dot(&layer.wv);
        let mut attn = Array2::<f32>::zeros((rows, d));
        for head in 0..dims.n_heads {
            let cols = head * head_dim..(head + 1) * head_dim;
            let qh = q.slice(s![.., cols.clone()]);
            let kh = k.slice(s![.., cols.clone()]);
            let vh = v.slice(s![.., cols.clone()]);
            for qi in 0..rows {
                let visible = mask.row(qi);
                let mut max = f32::NEG_INFINITY;
                for ki in 0..rows {
                    let sc = if visible[ki] { qh.row(qi).dot(&kh.row(ki)) * scale } else { MASKED_SCORE };
                    scores[ki] = sc;
                    max = max.max(sc);
                }
                let mut total = 0f32;
                for sc in scores.iter_mut() {
                    *sc = (*sc - max).exp();
                    total += *sc;
                }
                let mut out = attn.slice_mut(s![qi, cols.clone()]);
                for ki in 0..rows {
                    if visible[ki] {
                        let w = scores[ki] / total;
                        out.scaled_add(w, &vh.row(ki));
                    }
                }
            }
        }
        x = x + attn.dot(&layer.wo);

        let h = layer_norm(&x, &layer.ffn_norm_scale, &layer.ffn_norm_bias);
        let mut inner = h.dot(&layer.ffn_in) + &layer.ffn_in_bias;
        inner.mapv_inplace(gelu);
        x = x + inner.dot(&layer.ffn_out) + &layer.ffn_out_bias;
    }

    let h = layer_norm(&x, &weights.final_norm_scale, &weights.final_norm_bias);
    let logits = h.dot(&weights.unembedding);
    let mut dists = Vec::with_capacity(rows);
    let mut top1 = Vec::with_capacity(rows);
    for row in logits.axis_iter(Axis(0)) {
        let dist = Distribution::from_raw(softmax(row.as_slice().expect("row-major logits")));
        top1.push(dist.greedy());
        dists.push(dist);
    }
    Ok(ForwardOutput { dists, top1 })
}

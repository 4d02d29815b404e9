//! The tiny transformer denoiser.

mod forward;
mod mask;
mod weights;

use std::collections::BTreeMap;

pub use forward::{forward, gelu, positional_encoding, softmax, ForwardOutput};
pub use mask::VisibilityMask;
pub use weights::{DenoiserWeights, Dims, LayerWeights, MAGIC};

use crate::config::VisibilityMode;
use crate::decoding::{Denoiser, Lookahead};
use crate::distribution::Distribution;
use crate::error::Result;
use crate::sequence::{TokenId, Vocab};
use crate::superposition::{self, CandidateSet};

/// Transformer-backed denoiser. The last vocabulary id is the mask token.
#[derive(Debug, Clone)]
pub struct TinyDenoiser {
    weights: DenoiserWeights,
    vocab: Vocab,
}

impl TinyDenoiser {
    pub fn new(weights: DenoiserWeights) -> Result<Self> {
        weights.validate()?;
        let v = weights.dims.vocab;
        let vocab = Vocab::new(v, (v - 1) as TokenId)?;
        Ok(Self { weights, vocab })
    }

    pub fn weights(&self) -> &DenoiserWeights {
        &self.weights
    }

    /// Plain bidirectional forward with positions `0..len`.
    pub fn forward_plain(&self, tokens: &[TokenId]) -> Result<ForwardOutput> {
        let positions: Vec<usize> = (0..tokens.len()).collect();
        forward(&self.weights, tokens, &positions, &VisibilityMask::full(tokens.len()))
    }

    /// Decoder-facing view of a raw output row: the mask token's mass is
    /// removed so greedy decoding never proposes it.
    pub fn decode_dist(&self, raw: &Distribution) -> Distribution {
        raw.without_token(self.vocab.mask_id())
    }
}

impl Denoiser for TinyDenoiser {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn predict(&self, tokens: &[TokenId]) -> Result<BTreeMap<usize, Distribution>> {
        let out = self.forward_plain(tokens)?;
        Ok(tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| self.vocab.is_mask(t))
            .map(|(pos, _)| (pos, self.decode_dist(&out.dists[pos])))
            .collect())
    }

    fn lookahead(&self, tokens: &[TokenId], candidates: &[CandidateSet], mode: VisibilityMode) -> Result<Lookahead> {
        let layout = superposition::build_layout(tokens, self.vocab.mask_id(), candidates)?;
        let mask = superposition::build_visibility(&layout, mode);
        let out = forward(&self.weights, layout.tokens(), layout.position_ids(), &mask)?;
        let (orig, copies) = superposition::extract(&layout, &out)?;
        let original = tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| self.vocab.is_mask(t))
            .map(|(pos, _)| (pos, self.decode_dist(&out.dists[pos])))
            .collect();
        debug_assert_eq!(orig.len(), copies.len());
        let perturbed = copies.into_iter().map(|(pos, dist)| (pos, self.decode_dist(&dist).greedy().0)).collect();
        Ok(Lookahead { original, perturbed, forward_len: layout.len() })
    }
}

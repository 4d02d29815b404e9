//! Vocabulary, partially denoised sequence state and block scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use crate::distribution::Distribution;
use crate::error::{LeapError, Result};

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    size: usize,
    mask_id: TokenId,
    glyphs: Option<Vec<String>>,
}

impl Vocab {
    pub fn new(size: usize, mask_id: TokenId) -> Result<Self> {
        if size < 2 {
            return Err(LeapError::invalid(format!("vocabulary size {size} < 2")));
        }
        if mask_id as usize >= size {
            return Err(LeapError::invalid(format!("mask id {mask_id} outside vocabulary of size {size}")));
        }
        Ok(Self { size, mask_id, glyphs: None })
    }

    pub fn with_glyphs(mut self, glyphs: Vec<String>) -> Result<Self> {
        if glyphs.len() != self.size {
            return Err(LeapError::invalid("one glyph per token required"));
        }
        self.glyphs = Some(glyphs);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn is_mask(&self, token: TokenId) -> bool {
        token == self.mask_id
    }

    pub fn glyph(&self, token: TokenId) -> String {
        if token == self.mask_id {
            return "[M]".to_string();
        }
        match &self.glyphs {
            Some(g) => g[token as usize].clone(),
            None => token.to_string(),
        }
    }

    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens.iter().map(|&t| self.glyph(t)).collect::<Vec<_>>().join(" ")
    }
}

/// The sequence `x^t`: prompt followed by a generation region that is
/// unmasked block by block.
#[derive(Debug, Clone)]
pub struct SequenceState {
    prompt_len: usize,
    tokens: Vec<TokenId>,
    masked: BTreeSet<usize>,
    step: usize,
    block_size: usize,
    mask_id: TokenId,
    /// Distributions from the most recent forward, tagged with the block they
    /// were computed for.
    prev_dists: Option<(usize, BTreeMap<usize, Distribution>)>,
}

impl SequenceState {
    /// Prompt followed by `gen_len` masks.
    pub fn new(prompt: &[TokenId], gen_len: usize, block_size: usize, vocab: &Vocab) -> Result<Self> {
        if block_size == 0 {
            return Err(LeapError::invalid("block size must be at least 1"));
        }
        if !gen_len.is_multiple_of(block_size) {
            return Err(LeapError::invalid(format!(
                "generation length {gen_len} is not a multiple of block size {block_size}"
            )));
        }
        for (pos, &tok) in prompt.iter().enumerate() {
            if vocab.is_mask(tok) {
                return Err(LeapError::invalid(format!("prompt contains mask token at {pos}")));
            }
            if tok as usize >= vocab.size() {
                return Err(LeapError::invalid(format!("prompt token {tok} outside vocabulary")));
            }
        }
        let mut tokens = prompt.to_vec();
        tokens.extend(std::iter::repeat_n(vocab.mask_id(), gen_len));
        let masked = (prompt.len()..tokens.len()).collect();
        Ok(Self {
            prompt_len: prompt.len(),
            tokens,
            masked,
            step: 0,
            block_size,
            mask_id: vocab.mask_id(),
            prev_dists: None,
        })
    }

    /// A generation region that is already partly observed, as produced by
    /// forward corruption. Masked positions are exactly those holding the
    /// mask token.
    pub fn from_partial(prompt_len: usize, tokens: Vec<TokenId>, block_size: usize, vocab: &Vocab) -> Result<Self> {
        if block_size == 0 {
            return Err(LeapError::invalid("block size must be at least 1"));
        }
        if prompt_len > tokens.len() || !(tokens.len() - prompt_len).is_multiple_of(block_size) {
            return Err(LeapError::invalid(format!(
                "generation length {} is not a multiple of block size {block_size}",
                tokens.len().saturating_sub(prompt_len)
            )));
        }
        let mut masked = BTreeSet::new();
        for (pos, &tok) in tokens.iter().enumerate() {
            if tok as usize >= vocab.size() {
                return Err(LeapError::invalid(format!("token {tok} outside vocabulary")));
            }
            if vocab.is_mask(tok) {
                if pos < prompt_len {
                    return Err(LeapError::invalid(format!("prompt contains mask token at {pos}")));
                }
                masked.insert(pos);
            }
        }
        Ok(Self { prompt_len, tokens, masked, step: 0, block_size, mask_id: vocab.mask_id(), prev_dists: None })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn masked(&self) -> &BTreeSet<usize> {
        &self.masked
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    pub fn gen_len(&self) -> usize {
        self.tokens.len() - self.prompt_len
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn is_complete(&self) -> bool {
        self.masked.is_empty()
    }

    /// Earliest block of the generation region that still holds a mask.
    pub fn active_block(&self) -> Result<Range<usize>> {
        let first = *self.masked.iter().next().ok_or(LeapError::Complete)?;
        let block = (first - self.prompt_len) / self.block_size;
        let start = self.prompt_len + block * self.block_size;
        Ok(start..start + self.block_size)
    }

    /// Masked positions inside the active block, ascending.
    pub fn active_masked(&self) -> Result<Vec<usize>> {
        let span = self.active_block()?;
        Ok(self.masked.range(span).copied().collect())
    }

    fn block_index(&self, span: &Range<usize>) -> usize {
        (span.start - self.prompt_len) / self.block_size
    }

    /// Previous-step distributions, if they were computed for the block that
    /// is currently active.
    pub fn prev_dists(&self) -> Option<&BTreeMap<usize, Distribution>> {
        let span = self.active_block().ok()?;
        match &self.prev_dists {
            Some((block, dists)) if *block == self.block_index(&span) => Some(dists),
            _ => None,
        }
    }

    pub fn set_prev_dists(&mut self, dists: BTreeMap<usize, Distribution>) -> Result<()> {
        let span = self.active_block()?;
        self.prev_dists = Some((self.block_index(&span), dists));
        Ok(())
    }

    /// Commits one denoising step.
    pub fn apply_decodes(&mut self, events: &[(usize, TokenId)]) -> Result<()> {
        if events.is_empty() {
            return Err(LeapError::invalid("a step must decode at least one position"));
        }
        let mut seen = BTreeSet::new();
        for &(pos, tok) in events {
            if !seen.insert(pos) {
                return Err(LeapError::invalid(format!("position {pos} decoded twice in one step")));
            }
            if !self.masked.contains(&pos) {
                return Err(LeapError::invalid(format!("position {pos} is not masked")));
            }
            if tok == self.mask_id {
                return Err(LeapError::invalid(format!("cannot decode position {pos} to the mask token")));
            }
        }
        for &(pos, tok) in events {
            self.tokens[pos] = tok;
            self.masked.remove(&pos);
        }
        self.step += 1;
        Ok(())
    }
}

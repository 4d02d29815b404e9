//! Ground-truth probabilistic source: a first-order Markov chain with
//! closed-form masked-position posteriors, an exhaustive-enumeration oracle,
//! corpus sampling and forward corruption.
//!
//! Chain tokens are `0..V`; the mask token is `V`, so distributions handed to
//! the decoders have `V + 1` entries with zero mass on the mask.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::VisibilityMode;
use crate::decoding::{Denoiser, Lookahead};
use crate::distribution::Distribution;
use crate::error::{LeapError, Result};
use crate::rng::SplitMix64;
use crate::sequence::{TokenId, Vocab};
use crate::superposition::CandidateSet;

/// Largest `#masked * log2(V)` the brute-force oracle will enumerate.
pub const BRUTE_FORCE_BITS: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub vocab_size: usize,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

fn check_simplex(name: &str, row: &[f64], tol: f64) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(LeapError::format(format!("{name} has negative or non-finite entries")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(LeapError::format(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

impl MarkovSpec {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self { vocab_size: initial.len(), initial, transition };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocab_size;
        if v == 0 {
            return Err(LeapError::format("vocab_size must be positive"));
        }
        if self.initial.len() != v {
            return Err(LeapError::format(format!("initial has {} entries, expected {v}", self.initial.len())));
        }
        if self.transition.len() != v || self.transition.iter().any(|r| r.len() != v) {
            return Err(LeapError::format(format!("transition must be {v}x{v}")));
        }
        check_simplex("initial", &self.initial, 1e-9)?;
        for (i, row) in self.transition.iter().enumerate() {
            check_simplex(&format!("transition row {i}"), row, 1e-9)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn mask_id(&self) -> TokenId {
        self.vocab_size as TokenId
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.vocab_size + 1, self.mask_id()).expect("mask id is the last slot")
    }

    fn matrix(&self) -> Array2<f64> {
        let v = self.vocab_size;
        Array2::from_shape_fn((v, v), |(i, j)| self.transition[i][j])
    }
}

/// A joint distribution over fixed-length token sequences.
pub trait SequenceModel: Sync {
    fn vocab_size(&self) -> usize;
    fn sequence_prob(&self, seq: &[TokenId]) -> f64;
}

impl SequenceModel for MarkovSpec {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn sequence_prob(&self, seq: &[TokenId]) -> f64 {
        let Some((&first, rest)) = seq.split_first() else {
            return 1.0;
        };
        let mut p = self.initial[first as usize];
        let mut prev = first as usize;
        for &t in rest {
            p *= self.transition[prev][t as usize];
            prev = t as usize;
        }
        p
    }
}

/// Non-Markov chain where each token mixes the previous token's transition
/// with a copy of the first token: `p(x_k | x_{k-1}, x_0) = (1-w) P[x_{k-1}, x_k] + w [x_k = x_0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyCopySpec {
    pub vocab_size: usize,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub copy_weight: f64,
}

impl NoisyCopySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        MarkovSpec { vocab_size: spec.vocab_size, initial: spec.initial.clone(), transition: spec.transition.clone() }
            .validate()?;
        if !(0.0..=1.0).contains(&spec.copy_weight) {
            return Err(LeapError::format("copy_weight outside [0, 1]"));
        }
        Ok(spec)
    }
}

impl SequenceModel for NoisyCopySpec {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn sequence_prob(&self, seq: &[TokenId]) -> f64 {
        let Some((&first, rest)) = seq.split_first() else {
            return 1.0;
        };
        let w = self.copy_weight;
        let mut p = self.initial[first as usize];
        let mut prev = first as usize;
        for &t in rest {
            let copy = if t == first { w } else { 0.0 };
            p *= (1.0 - w) * self.transition[prev][t as usize] + copy;
            prev = t as usize;
        }
        p
    }
}

pub fn sample_sequence(spec: &MarkovSpec, length: usize, seed: u64) -> Vec<TokenId> {
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::with_capacity(length);
    if length == 0 {
        return out;
    }
    let mut prev = rng.categorical(&spec.initial);
    out.push(prev as TokenId);
    for _ in 1..length {
        prev = rng.categorical(&spec.transition[prev]);
        out.push(prev as TokenId);
    }
    out
}

/// Keeps each token with probability `alpha_t`, otherwise masks it.
pub fn corrupt(x0: &[TokenId], alpha_t: f64, seed: u64, mask_id: TokenId) -> Result<Vec<TokenId>> {
    if !(0.0..=1.0).contains(&alpha_t) {
        return Err(LeapError::invalid(format!("alpha_t = {alpha_t} outside [0, 1]")));
    }
    let mut rng = SplitMix64::new(seed);
    Ok(x0.iter().map(|&t| if rng.next_f64() < alpha_t { t } else { mask_id }).collect())
}

fn normalized(weights: Vec<f64>, mask_slot: bool) -> Distribution {
    let v = weights.len();
    let total: f64 = weights.iter().sum();
    let mut probs: Vec<f64> = if total > 0.0 {
        weights.into_iter().map(|w| w / total).collect()
    } else {
        // Evidence with zero probability: no token is preferred.
        vec![1.0 / v as f64; v]
    };
    if mask_slot {
        probs.push(0.0);
    }
    Distribution::from_raw(probs)
}

/// Matrix powers and prior marginals of a chain, reused across queries.
#[derive(Debug, Clone)]
pub struct MarkovTables {
    powers: Vec<Array2<f64>>,
    marginals: Vec<Array1<f64>>,
}

impl MarkovTables {
    pub fn new(spec: &MarkovSpec, max_len: usize) -> Self {
        let p = spec.matrix();
        let v = spec.vocab_size;
        let mut powers = vec![Array2::eye(v)];
        let mut marginals = vec![Array1::from(spec.initial.clone())];
        for d in 1..max_len.max(1) {
            let next = powers[d - 1].dot(&p);
            powers.push(next);
            let m = marginals[d - 1].dot(&p);
            marginals.push(m);
        }
        Self { powers, marginals }
    }

    pub fn max_len(&self) -> usize {
        self.powers.len()
    }

    fn power(&self, d: usize) -> &Array2<f64> {
        &self.powers[d]
    }

    /// Unnormalized left factor for position `i` given the nearest observed
    /// token to its left, if any.
    fn left(&self, i: usize, anchor: Option<(usize, TokenId)>) -> Vec<f64> {
        match anchor {
            Some((pos, tok)) => self.power(i - pos).row(tok as usize).to_vec(),
            None => self.marginals[i].to_vec(),
        }
    }

    fn right(&self, i: usize, anchor: Option<(usize, TokenId)>, v: usize) -> Vec<f64> {
        match anchor {
            Some((pos, tok)) => self.power(pos - i).column(tok as usize).to_vec(),
            None => vec![1.0; v],
        }
    }
}

/// Nearest observed `(position, token)` on one side of each position.
type Anchors = Vec<Option<(usize, TokenId)>>;

fn anchors(context: &[TokenId], mask_id: TokenId) -> (Anchors, Anchors) {
    let n = context.len();
    let mut left = vec![None; n];
    let mut right = vec![None; n];
    let mut last = None;
    for i in 0..n {
        left[i] = last;
        if context[i] != mask_id {
            last = Some((i, context[i]));
        }
    }
    last = None;
    for i in (0..n).rev() {
        right[i] = last;
        if context[i] != mask_id {
            last = Some((i, context[i]));
        }
    }
    (left, right)
}

fn validate_context(spec: &MarkovSpec, context: &[TokenId]) -> Result<()> {
    if context.is_empty() {
        return Err(LeapError::invalid("context must hold at least one position"));
    }
    if let Some(&t) = context.iter().find(|&&t| t as usize > spec.vocab_size) {
        return Err(LeapError::invalid(format!("token {t} outside chain vocabulary")));
    }
    Ok(())
}

fn conditional_with(tables: &MarkovTables, spec: &MarkovSpec, context: &[TokenId]) -> BTreeMap<usize, Distribution> {
    let mask = spec.mask_id();
    let v = spec.vocab_size;
    let (left, right) = anchors(context, mask);
    (0..context.len())
        .filter(|&i| context[i] == mask)
        .map(|i| {
            let l = tables.left(i, left[i]);
            let r = tables.right(i, right[i], v);
            let w = l.iter().zip(&r).map(|(a, b)| a * b).collect();
            (i, normalized(w, true))
        })
        .collect()
}

/// Exact posterior of every masked position given the observed tokens.
pub fn exact_conditional(spec: &MarkovSpec, context: &[TokenId]) -> Result<BTreeMap<usize, Distribution>> {
    validate_context(spec, context)?;
    let tables = MarkovTables::new(spec, context.len());
    Ok(conditional_with(&tables, spec, context))
}

/// Marginalizes over every completion of the masked positions.
pub fn brute_force_conditional<M: SequenceModel + ?Sized>(
    model: &M,
    context: &[TokenId],
) -> Result<BTreeMap<usize, Distribution>> {
    let v = model.vocab_size();
    let mask = v as TokenId;
    let masked: Vec<usize> = (0..context.len()).filter(|&i| context[i] == mask).collect();
    if masked.is_empty() {
        return Ok(BTreeMap::new());
    }
    let bits = masked.len() as f64 * (v as f64).log2();
    if bits > BRUTE_FORCE_BITS {
        let needed = (v as u128).checked_pow(masked.len() as u32).unwrap_or(u128::MAX);
        return Err(LeapError::BoundExceeded { needed, limit: 1 << 24 });
    }
    let mut weights = vec![vec![0.0; v]; masked.len()];
    let mut seq = context.to_vec();
    let mut digits = vec![0usize; masked.len()];
    loop {
        for (slot, &pos) in masked.iter().enumerate() {
            seq[pos] = digits[slot] as TokenId;
        }
        let p = model.sequence_prob(&seq);
        if p > 0.0 {
            for (slot, &d) in digits.iter().enumerate() {
                weights[slot][d] += p;
            }
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == digits.len() {
                return Ok(masked.iter().zip(weights).map(|(&pos, w)| (pos, normalized(w, true))).collect());
            }
            digits[k] += 1;
            if digits[k] < v {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// The chain posterior as a denoiser. Its lookahead is exact: instead of a
/// superposed forward it checks every one-step future built from the
/// candidate sets, which under a first-order chain reduces to choosing the
/// nearest filled neighbour on each side.
#[derive(Debug, Clone)]
pub struct MarkovDenoiser {
    spec: MarkovSpec,
    tables: MarkovTables,
    vocab: Vocab,
}

impl MarkovDenoiser {
    pub fn new(spec: MarkovSpec, max_len: usize) -> Result<Self> {
        spec.validate()?;
        let tables = MarkovTables::new(&spec, max_len);
        let vocab = spec.vocab();
        Ok(Self { spec, tables, vocab })
    }

    pub fn spec(&self) -> &MarkovSpec {
        &self.spec
    }

    fn check_len(&self, context: &[TokenId]) -> Result<()> {
        validate_context(&self.spec, context)?;
        if context.len() > self.tables.max_len() {
            return Err(LeapError::invalid(format!(
                "context length {} exceeds the denoiser's table length {}",
                context.len(),
                self.tables.max_len()
            )));
        }
        Ok(())
    }

    /// Greedy token of `i` under the first one-step future that changes it,
    /// or `None` when every such future leaves it unchanged.
    pub fn lookahead_flip(
        &self,
        context: &[TokenId],
        i: usize,
        candidates: &BTreeMap<usize, &CandidateSet>,
    ) -> Result<Option<TokenId>> {
        self.check_len(context)?;
        let mask = self.spec.mask_id();
        if context.get(i) != Some(&mask) {
            return Err(LeapError::invalid(format!("position {i} is not masked")));
        }
        let v = self.spec.vocab_size;
        let (left, right) = anchors(context, mask);
        let base_l = self.tables.left(i, left[i]);
        let base_r = self.tables.right(i, right[i], v);
        let greedy_of = |l: &[f64], r: &[f64]| -> TokenId {
            normalized(l.iter().zip(r).map(|(a, b)| a * b).collect(), false).greedy().0
        };
        let base = greedy_of(&base_l, &base_r);

        let lo = left[i].map_or(0, |(p, _)| p + 1);
        let hi = right[i].map_or(context.len(), |(p, _)| p);
        let mut lefts = vec![base_l];
        let mut rights = vec![base_r];
        for (&j, set) in candidates.range(lo..hi) {
            if j == i {
                continue;
            }
            for &(c, _) in &set.tokens {
                if j < i {
                    lefts.push(self.tables.left(i, Some((j, c))));
                } else {
                    rights.push(self.tables.right(i, Some((j, c)), v));
                }
            }
        }
        for l in &lefts {
            for r in &rights {
                let g = greedy_of(l, r);
                if g != base {
                    return Ok(Some(g));
                }
            }
        }
        Ok(None)
    }
}

impl Denoiser for MarkovDenoiser {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn predict(&self, tokens: &[TokenId]) -> Result<BTreeMap<usize, Distribution>> {
        self.check_len(tokens)?;
        Ok(conditional_with(&self.tables, &self.spec, tokens))
    }

    fn lookahead(&self, tokens: &[TokenId], candidates: &[CandidateSet], _mode: VisibilityMode) -> Result<Lookahead> {
        let original = self.predict(tokens)?;
        let by_owner: BTreeMap<usize, &CandidateSet> = candidates.iter().map(|s| (s.owner, s)).collect();
        let mut perturbed = BTreeMap::new();
        for &i in by_owner.keys() {
            let base = original
                .get(&i)
                .ok_or_else(|| LeapError::invalid(format!("candidate owner {i} is not masked")))?
                .greedy()
                .0;
            let flip = self.lookahead_flip(tokens, i, &by_owner)?;
            perturbed.insert(i, flip.unwrap_or(base));
        }
        let forward_len = tokens.len() + candidates.iter().map(|s| 1 + s.len()).sum::<usize>();
        Ok(Lookahead { original, perturbed, forward_len })
    }

    fn label(&self, strategy: crate::config::Strategy) -> String {
        match strategy {
            crate::config::Strategy::Leap => "leap-exact".to_string(),
            other => other.to_string(),
        }
    }
}

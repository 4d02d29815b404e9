//! Decoding strategies and the shared decode loop.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{DecodeConfig, Strategy, VisibilityMode};
use crate::distribution::Distribution;
use crate::error::{LeapError, Result};
use crate::sequence::{SequenceState, TokenId, Vocab};
use crate::superposition::{consistent_set, prune_candidates, CandidateSet};
use crate::trace::{DecodeEvent, DecodeTrace, Mechanism, Snapshot, StepRecord};

/// Result of one lookahead pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookahead {
    /// Predictions on the unperturbed context, for every masked position.
    pub original: BTreeMap<usize, Distribution>,
    /// Greedy prediction under the perturbed context, per candidate owner.
    pub perturbed: BTreeMap<usize, TokenId>,
    /// Rows processed by the pass.
    pub forward_len: usize,
}

/// A masked-token predictor `p(x_i | x^t)`.
pub trait Denoiser: Sync {
    fn vocab(&self) -> &Vocab;

    /// One plain forward: a distribution for every masked position, with no
    /// mass on the mask token.
    fn predict(&self, tokens: &[TokenId]) -> Result<BTreeMap<usize, Distribution>>;

    fn lookahead(&self, tokens: &[TokenId], candidates: &[CandidateSet], mode: VisibilityMode) -> Result<Lookahead>;

    /// Name reported for runs of `strategy` on this denoiser.
    fn label(&self, strategy: Strategy) -> String {
        strategy.to_string()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn vocab(&self) -> &Vocab {
        (**self).vocab()
    }

    fn predict(&self, tokens: &[TokenId]) -> Result<BTreeMap<usize, Distribution>> {
        (**self).predict(tokens)
    }

    fn lookahead(&self, tokens: &[TokenId], candidates: &[CandidateSet], mode: VisibilityMode) -> Result<Lookahead> {
        (**self).lookahead(tokens, candidates, mode)
    }

    fn label(&self, strategy: Strategy) -> String {
        (**self).label(strategy)
    }
}

/// Argmax token and its probability; ties go to the smaller token id.
pub fn greedy(dist: &Distribution) -> (TokenId, f64) {
    dist.greedy()
}

/// The positions one step decodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeSet {
    pub events: Vec<DecodeEvent>,
}

impl DecodeSet {
    pub fn positions(&self) -> BTreeSet<usize> {
        self.events.iter().map(|e| e.pos).collect()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    fn pairs(&self) -> Vec<(usize, TokenId)> {
        self.events.iter().map(|e| (e.pos, e.token)).collect()
    }
}

/// Greedy predictions for the active block's masked positions.
fn active_predictions(
    state: &SequenceState,
    dists: &BTreeMap<usize, Distribution>,
) -> Result<BTreeMap<usize, (TokenId, f64)>> {
    state
        .active_masked()?
        .into_iter()
        .map(|pos| {
            let d = dists
                .get(&pos)
                .ok_or_else(|| LeapError::invalid(format!("no distribution for masked position {pos}")))?;
            Ok((pos, d.greedy()))
        })
        .collect()
}

/// Single most confident position; ties go to the smaller position.
fn fallback(preds: &BTreeMap<usize, (TokenId, f64)>) -> DecodeEvent {
    let mut best: Option<(usize, TokenId, f64)> = None;
    for (&pos, &(token, conf)) in preds {
        if best.is_none_or(|(_, _, c)| conf > c) {
            best = Some((pos, token, conf));
        }
    }
    let (pos, token, conf) = best.expect("active block has at least one masked position");
    DecodeEvent { pos, token, conf, mech: Mechanism::Fallback }
}

fn threshold_events(preds: &BTreeMap<usize, (TokenId, f64)>, phi: f64) -> Vec<DecodeEvent> {
    preds
        .iter()
        .filter(|(_, &(_, conf))| conf > phi)
        .map(|(&pos, &(token, conf))| DecodeEvent { pos, token, conf, mech: Mechanism::Threshold })
        .collect()
}

/// Decodes every active-block position whose confidence exceeds `phi`, or
/// the single most confident one if none does.
pub fn step_cbpd(state: &SequenceState, dists: &BTreeMap<usize, Distribution>, phi: f64) -> Result<DecodeSet> {
    let preds = active_predictions(state, dists)?;
    let mut events = threshold_events(&preds, phi);
    if events.is_empty() {
        events.push(fallback(&preds));
    }
    Ok(DecodeSet { events })
}

/// One position per step: the most confident in the active block.
pub fn step_baseline(state: &SequenceState, dists: &BTreeMap<usize, Distribution>) -> Result<DecodeSet> {
    let preds = active_predictions(state, dists)?;
    Ok(DecodeSet { events: vec![fallback(&preds)] })
}

/// Everything a LEAP step computed, for callers that inspect the detector.
#[derive(Debug, Clone)]
pub struct LeapStep {
    pub set: DecodeSet,
    /// Original-context distributions for every masked position.
    pub dists: BTreeMap<usize, Distribution>,
    pub forward_len: usize,
    /// `None` on a bootstrap step, which runs plain CBPD.
    pub detail: Option<LeapDetail>,
}

#[derive(Debug, Clone)]
pub struct LeapDetail {
    pub candidates: Vec<CandidateSet>,
    pub predictions: BTreeMap<usize, (TokenId, f64)>,
    pub perturbed: BTreeMap<usize, TokenId>,
    /// Consistent positions passing the confidence gate, before any union or
    /// fallback.
    pub gated: BTreeSet<usize>,
}

/// One LEAP step. The first step of each block has no previous-step
/// distributions to prune from, so it runs a plain forward and decodes by
/// CBPD; the distributions it produces seed the next step.
pub fn step_leap<D: Denoiser + ?Sized>(
    state: &mut SequenceState,
    model: &D,
    config: &DecodeConfig,
) -> Result<LeapStep> {
    let mask_id = model.vocab().mask_id();
    let active: Vec<usize> = state.active_masked()?;
    let Some(prev) = state.prev_dists() else {
        let dists = model.predict(state.tokens())?;
        let set = step_cbpd(state, &dists, config.phi)?;
        state.set_prev_dists(restrict(&dists, &active)?)?;
        return Ok(LeapStep { set, dists, forward_len: state.len(), detail: None });
    };

    let prev = restrict(prev, &active)?;
    let candidates = prune_candidates(&prev, config.eta, mask_id);
    let look = model.lookahead(state.tokens(), &candidates, config.visibility_mode)?;
    let predictions = active_predictions(state, &look.original)?;
    let gated = consistent_set(&predictions, &look.perturbed, config.tau)?;

    let mut events: Vec<DecodeEvent> = gated
        .iter()
        .map(|&pos| {
            let (token, conf) = predictions[&pos];
            DecodeEvent { pos, token, conf, mech: Mechanism::Consistency }
        })
        .collect();
    if config.union_cbpd {
        events.extend(threshold_events(&predictions, config.phi).into_iter().filter(|e| !gated.contains(&e.pos)));
        events.sort_by_key(|e| e.pos);
    }
    if events.is_empty() {
        events.push(fallback(&predictions));
    }
    state.set_prev_dists(restrict(&look.original, &active)?)?;
    Ok(LeapStep {
        set: DecodeSet { events },
        dists: look.original,
        forward_len: look.forward_len,
        detail: Some(LeapDetail { candidates, predictions, perturbed: look.perturbed, gated }),
    })
}

fn restrict(dists: &BTreeMap<usize, Distribution>, keys: &[usize]) -> Result<BTreeMap<usize, Distribution>> {
    keys.iter()
        .map(|k| {
            dists
                .get(k)
                .cloned()
                .map(|d| (*k, d))
                .ok_or_else(|| LeapError::invalid(format!("no distribution for masked position {k}")))
        })
        .collect()
}

fn snapshots(dists: &BTreeMap<usize, Distribution>) -> Vec<Snapshot> {
    dists
        .iter()
        .map(|(&pos, d)| {
            let (token, conf) = d.greedy();
            Snapshot { pos, token, conf, probs: d.probs().to_vec() }
        })
        .collect()
}

/// What one executed step looked like, passed to decode observers before
/// the state is updated.
pub struct StepView<'a> {
    pub state: &'a SequenceState,
    pub record: &'a StepRecord,
    pub leap: Option<&'a LeapDetail>,
}

/// Decodes `state` to completion, reporting each step to `observe`.
pub fn decode_state_with<D, F>(
    model: &D,
    mut state: SequenceState,
    config: &DecodeConfig,
    mut observe: F,
) -> Result<(Vec<TokenId>, DecodeTrace)>
where
    D: Denoiser + ?Sized,
    F: FnMut(StepView<'_>) -> Result<()>,
{
    config.validate()?;
    let mut trace = DecodeTrace::default();
    let budget = state.masked().len();
    while !state.is_complete() {
        let before = state.clone();
        let (set, dists, forward_len, detail) = match config.strategy {
            Strategy::Baseline => {
                let dists = model.predict(state.tokens())?;
                (step_baseline(&state, &dists)?, dists, state.len(), None)
            }
            Strategy::Cbpd => {
                let dists = model.predict(state.tokens())?;
                (step_cbpd(&state, &dists, config.phi)?, dists, state.len(), None)
            }
            Strategy::Leap => {
                let step = step_leap(&mut state, model, config)?;
                (step.set, step.dists, step.forward_len, step.detail)
            }
        };
        let record = StepRecord {
            step: trace.steps.len() + 1,
            forward_len,
            events: set.events.clone(),
            snapshots: snapshots(&dists),
        };
        observe(StepView { state: &before, record: &record, leap: detail.as_ref() })?;
        state.apply_decodes(&set.pairs())?;
        trace.steps.push(record);
        debug_assert!(trace.steps.len() <= budget);
    }
    Ok((state.tokens().to_vec(), trace))
}

pub fn decode_state<D: Denoiser + ?Sized>(
    model: &D,
    state: SequenceState,
    config: &DecodeConfig,
) -> Result<(Vec<TokenId>, DecodeTrace)> {
    decode_state_with(model, state, config, |_| Ok(()))
}

/// Generates `config.gen_len` tokens after `prompt`.
pub fn run_decode<D: Denoiser + ?Sized>(
    model: &D,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<(Vec<TokenId>, DecodeTrace)> {
    config.validate()?;
    let state = SequenceState::new(prompt, config.gen_len, config.block_size, model.vocab())?;
    decode_state(model, state, config)
}

/// When and to what CBPD commits each generated position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceTarget {
    pub positions: BTreeMap<usize, TargetEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetEntry {
    /// 1-based step at which the position was decoded.
    pub step: usize,
    pub token: TokenId,
}

impl ConvergenceTarget {
    pub fn from_trace(trace: &DecodeTrace) -> Self {
        let positions = trace
            .steps
            .iter()
            .flat_map(|rec| rec.events.iter().map(move |e| (e.pos, TargetEntry { step: rec.step, token: e.token })))
            .collect();
        Self { positions }
    }

    pub fn get(&self, pos: usize) -> Option<TargetEntry> {
        self.positions.get(&pos).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Runs CBPD to completion and records each position's commit step and
/// token. Returns the trace alongside, since statistics need both.
pub fn convergence_target<D: Denoiser + ?Sized>(
    model: &D,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<(ConvergenceTarget, DecodeTrace)> {
    let cfg = DecodeConfig { strategy: Strategy::Cbpd, ..config.clone() };
    let (_, trace) = run_decode(model, prompt, &cfg)?;
    Ok((ConvergenceTarget::from_trace(&trace), trace))
}

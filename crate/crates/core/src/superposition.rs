//! Superposed lookahead: candidate pruning, the augmented sequence, its
//! visibility mask, and the consistency check between original and
//! perturbed predictions.
//!
//! The superposed sequence is the original `L` rows followed, for each owner
//! position `i` in ascending order, by one mask-token copy row and then one
//! row per candidate token. Every appended row reuses position id `i`.
//!
//! Visibility:
//! * original rows see exactly the original rows, so their outputs equal a
//!   plain forward;
//! * copy row `c_i` sees itself, candidate rows of every other owner, and
//!   the original rows minus row `i` (augment) or minus every owner row
//!   (replace). The copy takes the place of original row `i`, so with no
//!   candidates it reproduces that row's prediction;
//! * candidate rows see themselves and the original rows (augment) or the
//!   non-owner original rows (replace); they never see other appended rows.

use std::collections::{BTreeMap, BTreeSet};

use crate::backend::{ForwardOutput, VisibilityMask};
use crate::config::{max_candidates, VisibilityMode};
use crate::distribution::Distribution;
use crate::error::{LeapError, Result};
use crate::sequence::TokenId;

/// Plausible next-step tokens for one masked position, most probable first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub owner: usize,
    pub tokens: Vec<(TokenId, f64)>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Keeps tokens with probability `>= eta`, never the mask token. At most
/// `floor(1/eta)` tokens can qualify.
pub fn prune_candidates(prev_dists: &BTreeMap<usize, Distribution>, eta: f64, mask_id: TokenId) -> Vec<CandidateSet> {
    let cap = max_candidates(eta);
    prev_dists
        .iter()
        .map(|(&owner, dist)| {
            let mut tokens: Vec<(TokenId, f64)> = dist
                .probs()
                .iter()
                .enumerate()
                .filter(|&(t, &p)| t as TokenId != mask_id && p >= eta)
                .map(|(t, &p)| (t as TokenId, p))
                .collect();
            tokens.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            tokens.truncate(cap);
            CandidateSet { owner, tokens }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Original,
    Copy,
    Candidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Row {
    pub kind: RowKind,
    pub position_id: usize,
    pub token: TokenId,
    /// Owner position for appended rows.
    pub owner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperposedLayout {
    rows: Vec<Row>,
    original_len: usize,
    copy_rows: BTreeMap<usize, usize>,
    candidate_rows: BTreeMap<usize, Vec<usize>>,
    tokens: Vec<TokenId>,
    position_ids: Vec<usize>,
}

impl SuperposedLayout {
    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }

    pub fn owners(&self) -> impl Iterator<Item = usize> + '_ {
        self.copy_rows.keys().copied()
    }

    pub fn copy_row(&self, owner: usize) -> Option<usize> {
        self.copy_rows.get(&owner).copied()
    }

    pub fn candidate_rows(&self, owner: usize) -> &[usize] {
        self.candidate_rows.get(&owner).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn position_ids(&self) -> &[usize] {
        &self.position_ids
    }

    fn is_owner_row(&self, row: usize) -> bool {
        row < self.original_len && self.copy_rows.contains_key(&row)
    }
}

/// Lays out `tokens ⊕ [copy_i ⊕ candidates_i]` for each owner in ascending
/// order. Every owner must be a masked position.
pub fn build_layout(tokens: &[TokenId], mask_id: TokenId, candidate_sets: &[CandidateSet]) -> Result<SuperposedLayout> {
    let original_len = tokens.len();
    let mut rows: Vec<Row> = tokens
        .iter()
        .enumerate()
        .map(|(pos, &token)| Row { kind: RowKind::Original, position_id: pos, token, owner: None })
        .collect();
    let mut sets: Vec<&CandidateSet> = candidate_sets.iter().collect();
    sets.sort_by_key(|s| s.owner);
    let mut copy_rows = BTreeMap::new();
    let mut candidate_rows = BTreeMap::new();
    for set in sets {
        let owner = set.owner;
        if owner >= original_len || tokens[owner] != mask_id {
            return Err(LeapError::invalid(format!("candidate owner {owner} is not a masked position")));
        }
        if copy_rows.insert(owner, rows.len()).is_some() {
            return Err(LeapError::invalid(format!("duplicate candidate set for position {owner}")));
        }
        rows.push(Row { kind: RowKind::Copy, position_id: owner, token: mask_id, owner: Some(owner) });
        let mut cand = Vec::with_capacity(set.len());
        for &(token, _) in &set.tokens {
            if token == mask_id {
                return Err(LeapError::invalid("candidate set contains the mask token"));
            }
            cand.push(rows.len());
            rows.push(Row { kind: RowKind::Candidate, position_id: owner, token, owner: Some(owner) });
        }
        candidate_rows.insert(owner, cand);
    }
    let tokens = rows.iter().map(|r| r.token).collect();
    let position_ids = rows.iter().map(|r| r.position_id).collect();
    Ok(SuperposedLayout { rows, original_len, copy_rows, candidate_rows, tokens, position_ids })
}

pub fn build_visibility(layout: &SuperposedLayout, mode: VisibilityMode) -> VisibilityMask {
    let rows = layout.rows();
    let l = layout.original_len();
    let context_row = |k: usize| match mode {
        VisibilityMode::Augment => k < l,
        VisibilityMode::Replace => k < l && !layout.is_owner_row(k),
    };
    VisibilityMask::from_fn(rows.len(), |q, k| {
        let row = rows[q];
        match row.kind {
            RowKind::Original => k < l,
            RowKind::Copy => {
                let owner = row.owner.expect("copy rows have owners");
                if k == q {
                    return true;
                }
                if k < l {
                    return match mode {
                        VisibilityMode::Augment => k != owner,
                        VisibilityMode::Replace => !layout.is_owner_row(k),
                    };
                }
                let other = rows[k];
                other.kind == RowKind::Candidate && other.owner != Some(owner)
            }
            RowKind::Candidate => k == q || context_row(k),
        }
    })
}

/// Reads original-row and copy-row distributions for each owner.
#[allow(clippy::type_complexity)]
pub fn extract(
    layout: &SuperposedLayout,
    output: &ForwardOutput,
) -> Result<(BTreeMap<usize, Distribution>, BTreeMap<usize, Distribution>)> {
    if output.rows() != layout.len() {
        return Err(LeapError::invalid(format!(
            "forward output has {} rows, layout has {}",
            output.rows(),
            layout.len()
        )));
    }
    let mut orig = BTreeMap::new();
    let mut copies = BTreeMap::new();
    for (owner, &row) in &layout.copy_rows {
        orig.insert(*owner, output.dists[*owner].clone());
        copies.insert(*owner, output.dists[row].clone());
    }
    Ok((orig, copies))
}

/// Positions whose original and perturbed greedy tokens agree and whose
/// original confidence is at least `tau`.
pub fn consistent_set(
    orig_preds: &BTreeMap<usize, (TokenId, f64)>,
    copy_preds: &BTreeMap<usize, TokenId>,
    tau: f64,
) -> Result<BTreeSet<usize>> {
    if orig_preds.len() != copy_preds.len() || orig_preds.keys().any(|k| !copy_preds.contains_key(k)) {
        return Err(LeapError::invalid("original and perturbed predictions cover different positions"));
    }
    Ok(orig_preds
        .iter()
        .filter(|(pos, &(token, conf))| copy_preds[pos] == token && conf >= tau)
        .map(|(&pos, _)| pos)
        .collect())
}

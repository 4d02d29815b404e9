//! Convergence statistics over decode traces and the lookahead oracle used
//! to grade the early-convergence detector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::config::{DecodeConfig, Strategy};
use crate::decoding::{decode_state_with, ConvergenceTarget, Denoiser};
use crate::error::{LeapError, Result};
use crate::par::{self, Execution};
use crate::sequence::{SequenceState, TokenId};
use crate::superposition::CandidateSet;
use crate::trace::DecodeTrace;

/// Largest number of one-step futures the oracle will enumerate.
pub const ORACLE_BOUND: u128 = 4096;

/// Confidence bin edges. A value falls in the last bin whose lower edge it
/// reaches; the top edge is inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    edges: Vec<f64>,
}

impl Bins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LeapError::invalid("bin edges must be strictly increasing, at least two"));
        }
        Ok(Self { edges })
    }

    /// `n` equal-width bins over `[0, 1]`.
    pub fn uniform(n: usize) -> Self {
        Self { edges: (0..=n).map(|k| k as f64 / n as f64).collect() }
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        (self.edges[bin], self.edges[bin + 1])
    }

    pub fn index(&self, value: f64) -> Option<usize> {
        let last = *self.edges.last().expect("at least two edges");
        if value < self.edges[0] || value > last {
            return None;
        }
        let idx = self.edges.partition_point(|&e| e <= value);
        Some(idx.saturating_sub(1).min(self.len() - 1))
    }
}

impl Default for Bins {
    fn default() -> Self {
        Self::uniform(10)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` when the bin is empty.
    pub early_correct: Option<f64>,
    pub early_converged: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedStats {
    pub rows: Vec<BinRow>,
}

impl BinnedStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,early_correct,early_converged\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.2},{:.2},{},{},{}",
                r.lo,
                r.hi,
                r.count,
                fmt_opt(r.early_correct),
                fmt_opt(r.early_converged)
            );
        }
        out
    }
}

/// Per-position greedy history `(step, token)` in step order.
fn histories(trace: &DecodeTrace) -> BTreeMap<usize, Vec<(usize, TokenId)>> {
    let mut h: BTreeMap<usize, Vec<(usize, TokenId)>> = BTreeMap::new();
    for rec in &trace.steps {
        for s in &rec.snapshots {
            h.entry(s.pos).or_default().push((rec.step, s.token));
        }
    }
    h
}

fn check_pair(trace: &DecodeTrace, target: &ConvergenceTarget) -> Result<()> {
    let decoded: BTreeSet<usize> = trace.steps.iter().flat_map(|r| r.events.iter().map(|e| e.pos)).collect();
    let targeted: BTreeSet<usize> = target.positions.keys().copied().collect();
    if decoded != targeted {
        return Err(LeapError::invalid("trace and convergence target cover different positions"));
    }
    Ok(())
}

/// Early-correct and early-converged fractions of pre-commit snapshots,
/// binned by snapshot confidence, aggregated over `(trace, target)` pairs.
///
/// A snapshot of position `i` at step `s < tau_i` is early correct when its
/// greedy token already equals `x_i^*`, and early converged when it also
/// stays equal at every later snapshot up to the commit step.
pub fn early_stats(pairs: &[(&DecodeTrace, &ConvergenceTarget)], bins: &Bins) -> Result<BinnedStats> {
    let mut count = vec![0usize; bins.len()];
    let mut correct = vec![0usize; bins.len()];
    let mut converged = vec![0usize; bins.len()];
    for (trace, target) in pairs {
        check_pair(trace, target)?;
        let hist = histories(trace);
        for rec in &trace.steps {
            for snap in &rec.snapshots {
                let entry = target
                    .get(snap.pos)
                    .ok_or_else(|| LeapError::invalid(format!("no target for position {}", snap.pos)))?;
                if rec.step >= entry.step {
                    continue;
                }
                let Some(bin) = bins.index(snap.conf) else { continue };
                count[bin] += 1;
                if snap.token != entry.token {
                    continue;
                }
                correct[bin] += 1;
                let stable = hist[&snap.pos]
                    .iter()
                    .filter(|(step, _)| *step >= rec.step && *step <= entry.step)
                    .all(|&(_, tok)| tok == entry.token);
                if stable {
                    converged[bin] += 1;
                }
            }
        }
    }
    let rows = (0..bins.len())
        .map(|b| {
            let (lo, hi) = bins.bounds(b);
            let frac = |n: usize| (count[b] > 0).then(|| n as f64 / count[b] as f64);
            BinRow { lo, hi, count: count[b], early_correct: frac(correct[b]), early_converged: frac(converged[b]) }
        })
        .collect();
    Ok(BinnedStats { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfRow {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCdf {
    pub rows: Vec<CdfRow>,
    /// Sorted probabilities of the eventual token one step before commit.
    pub values: Vec<f64>,
    /// Tokens committed on the first step, which have no earlier snapshot.
    pub excluded: usize,
}

impl ConfidenceCdf {
    /// Smallest recorded value `x` with empirical `P(X <= x) >= q`.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.values.is_empty() {
            return None;
        }
        let n = self.values.len();
        let k = ((q * n as f64).ceil() as usize).clamp(1, n);
        Some(self.values[k - 1])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,density,cdf\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:.2},{:.2},{:.6},{:.6}", r.lo, r.hi, r.density, r.cdf);
        }
        out
    }
}

/// Distribution of the probability each committed token had one step
/// before it was committed.
pub fn prev_conf_cdf(pairs: &[(&DecodeTrace, &ConvergenceTarget)], bins: &Bins) -> Result<ConfidenceCdf> {
    if pairs.is_empty() {
        return Err(LeapError::invalid("empty corpus"));
    }
    let mut values = Vec::new();
    let mut excluded = 0;
    for (trace, target) in pairs {
        check_pair(trace, target)?;
        for (&pos, entry) in &target.positions {
            if entry.step < 2 {
                excluded += 1;
                continue;
            }
            let rec = &trace.steps[entry.step - 2];
            let snap =
                rec.snapshots.iter().find(|s| s.pos == pos).ok_or_else(|| {
                    LeapError::format(format!("step {} has no snapshot for position {pos}", rec.step))
                })?;
            let p = if !snap.probs.is_empty() {
                *snap.probs.get(entry.token as usize).ok_or_else(|| LeapError::format("snapshot probs too short"))?
            } else if snap.token == entry.token {
                snap.conf
            } else {
                return Err(LeapError::format(format!(
                    "snapshot for position {pos} at step {} lacks probabilities",
                    rec.step
                )));
            };
            values.push(p);
        }
    }
    if values.is_empty() {
        return Err(LeapError::invalid("no committed token has a preceding snapshot"));
    }
    values.sort_by(f64::total_cmp);
    let mut counts = vec![0usize; bins.len()];
    for &v in &values {
        if let Some(b) = bins.index(v) {
            counts[b] += 1;
        }
    }
    let total = values.len() as f64;
    let mut running = 0usize;
    let rows = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            running += c;
            let (lo, hi) = bins.bounds(b);
            CdfRow { lo, hi, density: c as f64 / total, cdf: running as f64 / total }
        })
        .collect();
    Ok(ConfidenceCdf { rows, values, excluded })
}

/// Whether `i`'s greedy prediction survives every one-step future: each
/// assignment that fills any subset of the other candidate owners with one
/// of their candidates (leaving the rest masked) is decoded with a plain
/// forward and compared with the unperturbed prediction.
pub fn oracle_converged<D: Denoiser + ?Sized>(
    model: &D,
    tokens: &[TokenId],
    i: usize,
    candidate_sets: &[CandidateSet],
    exec: Execution,
) -> Result<bool> {
    let mask = model.vocab().mask_id();
    if tokens.get(i) != Some(&mask) {
        return Err(LeapError::invalid(format!("position {i} is not masked")));
    }
    let others: Vec<&CandidateSet> = candidate_sets.iter().filter(|s| s.owner != i && !s.is_empty()).collect();
    let mut needed: u128 = 1;
    for s in &others {
        needed = needed.saturating_mul(s.len() as u128 + 1);
    }
    if needed > ORACLE_BOUND {
        return Err(LeapError::BoundExceeded { needed, limit: ORACLE_BOUND });
    }
    for s in &others {
        if tokens.get(s.owner) != Some(&mask) {
            return Err(LeapError::invalid(format!("candidate owner {} is not masked", s.owner)));
        }
    }
    let greedy_at = |seq: &[TokenId]| -> Result<TokenId> {
        let preds = model.predict(seq)?;
        Ok(preds[&i].greedy().0)
    };
    let base = greedy_at(tokens)?;
    let failure = std::sync::Mutex::new(None);
    let stable = par::all(exec, needed as usize, |mut code| {
        if code == 0 {
            return true;
        }
        let mut seq = tokens.to_vec();
        for s in &others {
            let radix = s.len() + 1;
            let digit = code % radix;
            code /= radix;
            if digit > 0 {
                seq[s.owner] = s.tokens[digit - 1].0;
            }
        }
        match greedy_at(&seq) {
            Ok(tok) => tok == base,
            Err(e) => {
                *failure.lock().expect("poisoned") = Some(e);
                false
            }
        }
    });
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(stable)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorStep {
    pub item: usize,
    pub step: usize,
    pub counts: Counts,
    pub oracle_size: usize,
    pub gated_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectorReport {
    pub steps: Vec<DetectorStep>,
    pub total: Counts,
}

impl DetectorReport {
    pub fn precision(&self) -> Option<f64> {
        self.total.precision()
    }

    pub fn recall(&self) -> Option<f64> {
        self.total.recall()
    }

    pub fn oracle_total(&self) -> usize {
        self.steps.iter().map(|s| s.oracle_size).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,step,tp,fp,fn,oracle,gated,precision,recall\n");
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.item,
                s.step,
                s.counts.tp,
                s.counts.fp,
                s.counts.fn_,
                s.oracle_size,
                s.gated_size,
                fmt_opt(s.counts.precision()),
                fmt_opt(s.counts.recall())
            );
        }
        let gated: usize = self.steps.iter().map(|s| s.gated_size).sum();
        let _ = writeln!(
            out,
            "all,,{},{},{},{},{},{},{}",
            self.total.tp,
            self.total.fp,
            self.total.fn_,
            self.oracle_total(),
            gated,
            fmt_opt(self.precision()),
            fmt_opt(self.recall())
        );
        out
    }
}

/// Compares the LEAP gated set with the oracle set
/// `{i : oracle_converged(i) and conf_i >= tau}` at every lookahead step of
/// a LEAP decode of each prompt.
pub fn detector_quality<D: Denoiser + ?Sized>(
    model: &D,
    prompts: &[Vec<TokenId>],
    config: &DecodeConfig,
    exec: Execution,
) -> Result<DetectorReport> {
    if prompts.is_empty() {
        return Err(LeapError::invalid("empty corpus"));
    }
    let cfg = DecodeConfig { strategy: Strategy::Leap, ..config.clone() };
    let per_item = par::try_map(exec, prompts, |item, prompt| {
        let state = SequenceState::new(prompt, cfg.gen_len, cfg.block_size, model.vocab())?;
        let mut rows = Vec::new();
        decode_state_with(model, state, &cfg, |view| {
            let Some(detail) = view.leap else { return Ok(()) };
            let mut oracle = BTreeSet::new();
            for (&pos, &(_, conf)) in &detail.predictions {
                if conf >= cfg.tau
                    && oracle_converged(model, view.state.tokens(), pos, &detail.candidates, Execution::Sequential)?
                {
                    oracle.insert(pos);
                }
            }
            let counts = Counts {
                tp: detail.gated.intersection(&oracle).count(),
                fp: detail.gated.difference(&oracle).count(),
                fn_: oracle.difference(&detail.gated).count(),
            };
            rows.push(DetectorStep {
                item,
                step: view.record.step,
                counts,
                oracle_size: oracle.len(),
                gated_size: detail.gated.len(),
            });
            Ok(())
        })?;
        Ok::<_, LeapError>(rows)
    })?;
    let steps: Vec<DetectorStep> = per_item.into_iter().flatten().collect();
    let mut total = Counts::default();
    for s in &steps {
        total.add(&s.counts);
    }
    Ok(DetectorReport { steps, total })
}

//! Per-step decode records and their JSON-lines encoding.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LeapError, Result};
use crate::sequence::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Threshold,
    Consistency,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeEvent {
    pub pos: usize,
    pub token: TokenId,
    pub conf: f64,
    pub mech: Mechanism,
}

/// Greedy prediction for one masked position at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub pos: usize,
    pub token: TokenId,
    pub conf: f64,
    /// Full distribution, kept so later analysis can read the probability of
    /// tokens other than the greedy one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probs: Vec<f64>,
}

/// One denoising step. Snapshots are predictions made on the context the
/// step started from, i.e. record `s` sees `x^{s-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub forward_len: usize,
    pub events: Vec<DecodeEvent>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeTrace {
    pub steps: Vec<StepRecord>,
}

impl DecodeTrace {
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn decoded_tokens(&self) -> usize {
        self.steps.iter().map(|s| s.events.len()).sum()
    }

    pub fn tfops(&self) -> u64 {
        self.steps.iter().map(|s| s.forward_len as u64).sum()
    }

    /// Checks the structural invariants: steps numbered 1.., at least one
    /// event per step, no position decoded twice.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (idx, rec) in self.steps.iter().enumerate() {
            if rec.step != idx + 1 {
                return Err(LeapError::format(format!(
                    "step record {idx} numbered {} (expected {})",
                    rec.step,
                    idx + 1
                )));
            }
            if rec.events.is_empty() {
                return Err(LeapError::format(format!("step {} decodes nothing", rec.step)));
            }
            for ev in &rec.events {
                if !seen.insert(ev.pos) {
                    return Err(LeapError::format(format!("position {} decoded twice (step {})", ev.pos, rec.step)));
                }
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.steps {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut steps = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StepRecord = serde_json::from_str(&line)
                .map_err(|e| LeapError::format(format!("trace line {}: {e}", lineno + 1)))?;
            steps.push(rec);
        }
        let trace = Self { steps };
        trace.validate()?;
        Ok(trace)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

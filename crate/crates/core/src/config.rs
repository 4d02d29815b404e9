//! Decoder configuration and the flat `key = value` file format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{LeapError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// One token per step.
    Baseline,
    /// Confidence-based parallel decoding.
    Cbpd,
    Leap,
}

impl FromStr for Strategy {
    type Err = LeapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Strategy::Baseline),
            "cbpd" => Ok(Strategy::Cbpd),
            "leap" => Ok(Strategy::Leap),
            other => Err(LeapError::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Baseline => "baseline",
            Strategy::Cbpd => "cbpd",
            Strategy::Leap => "leap",
        })
    }
}

/// How copy and candidate rows of the superposed sequence see the context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibilityMode {
    /// Candidates are added alongside the original masks.
    Augment,
    /// Candidates stand in for the original masks they belong to.
    Replace,
}

impl FromStr for VisibilityMode {
    type Err = LeapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "augment" => Ok(VisibilityMode::Augment),
            "replace" => Ok(VisibilityMode::Replace),
            other => Err(LeapError::Config(format!("unknown visibility mode `{other}`"))),
        }
    }
}

impl fmt::Display for VisibilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VisibilityMode::Augment => "augment",
            VisibilityMode::Replace => "replace",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    /// CBPD threshold, compared with strict `>`.
    pub phi: f64,
    /// LEAP confidence gate, compared with `>=`.
    pub tau: f64,
    /// Candidate pruning threshold, compared with `>=`.
    pub eta: f64,
    pub block_size: usize,
    pub visibility_mode: VisibilityMode,
    /// Also decode positions above `phi` during LEAP steps.
    pub union_cbpd: bool,
    pub gen_len: usize,
    pub seed: Option<u64>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Leap,
            phi: 0.9,
            tau: 0.7,
            eta: 0.2,
            block_size: 32,
            visibility_mode: VisibilityMode::Augment,
            union_cbpd: false,
            gen_len: 64,
            seed: None,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("phi", self.phi), ("tau", self.tau), ("eta", self.eta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(LeapError::Config(format!("{name} = {v} outside (0, 1]")));
            }
        }
        if self.block_size == 0 {
            return Err(LeapError::Config("block_size must be at least 1".into()));
        }
        if !self.gen_len.is_multiple_of(self.block_size) {
            return Err(LeapError::Config(format!(
                "gen_len {} is not a multiple of block_size {}",
                self.gen_len, self.block_size
            )));
        }
        Ok(())
    }

    /// Largest candidate set the pruning threshold admits.
    pub fn max_candidates(&self) -> usize {
        max_candidates(self.eta)
    }

    /// Applies one `key = value` pair. Returns `false` for keys this type
    /// does not own so callers can layer their own settings on top.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "strategy" => self.strategy = value.parse()?,
            "phi" => self.phi = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "eta" => self.eta = parse_value(key, value)?,
            "block_size" => self.block_size = parse_value(key, value)?,
            "visibility_mode" => self.visibility_mode = value.parse()?,
            "union_cbpd" => self.union_cbpd = parse_value(key, value)?,
            "gen_len" => self.gen_len = parse_value(key, value)?,
            "seed" => self.seed = Some(parse_value(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_pairs(pairs: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs.iter() {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn max_candidates(eta: f64) -> usize {
    // 1/0.2 lands a hair under 5 in binary
    (1.0 / eta + 1e-9).floor() as usize
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| LeapError::Config(format!("cannot parse `{value}` for key `{key}`")))
}

/// Ordered `key = value` pairs. Blank lines and `#` comments are ignored;
/// later assignments override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LeapError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(LeapError::Config(format!("line {}: empty key", lineno + 1)));
            }
            entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = DecodeConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.max_candidates(), 5);
    }

    #[test]
    fn rejects_out_of_range_thresholds() {
        for (k, v) in [("phi", "0"), ("tau", "1.5"), ("eta", "-0.1")] {
            let kv = KeyValues::parse(&format!("{k} = {v}")).unwrap();
            assert!(DecodeConfig::from_pairs(&kv).is_err(), "{k}={v}");
        }
        let kv = KeyValues::parse("gen_len = 10\nblock_size = 4").unwrap();
        assert!(DecodeConfig::from_pairs(&kv).is_err());
    }

    #[test]
    fn parses_every_field() {
        let text = "# comment\nstrategy = cbpd\nphi = 0.8\ntau=0.6\neta = 0.25 # inline\n\
                    block_size = 8\nvisibility_mode = replace\nunion_cbpd = true\ngen_len = 16\nseed = 9\n";
        let cfg = DecodeConfig::from_pairs(&KeyValues::parse(text).unwrap()).unwrap();
        assert_eq!(cfg.strategy, Strategy::Cbpd);
        assert_eq!(cfg.phi, 0.8);
        assert_eq!(cfg.tau, 0.6);
        assert_eq!(cfg.eta, 0.25);
        assert_eq!(cfg.block_size, 8);
        assert_eq!(cfg.visibility_mode, VisibilityMode::Replace);
        assert!(cfg.union_cbpd);
        assert_eq!(cfg.gen_len, 16);
        assert_eq!(cfg.seed, Some(9));
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(KeyValues::parse("phi 0.9").is_err());
        assert!(KeyValues::parse(" = 3").is_err());
        let kv = KeyValues::parse("strategy = greedy").unwrap();
        assert!(DecodeConfig::from_pairs(&kv).is_err());
    }

    #[test]
    fn later_assignment_wins() {
        let kv = KeyValues::parse("phi = 0.5\nphi = 0.6").unwrap();
        assert_eq!(kv.get("phi"), Some("0.6"));
    }

    #[test]
    fn candidate_cap_matches_floor() {
        assert_eq!(max_candidates(0.2), 5);
        assert_eq!(max_candidates(0.25), 4);
        assert_eq!(max_candidates(0.3), 3);
        assert_eq!(max_candidates(1.0), 1);
        assert_eq!(max_candidates(0.1), 10);
    }
}

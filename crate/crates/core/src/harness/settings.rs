//! Everything a harness command needs, read from a `key = value` file and
//! overridden by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::backend::{DenoiserWeights, TinyDenoiser};
use crate::config::{parse_value, DecodeConfig, KeyValues, Strategy, VisibilityMode};
use crate::decoding::{Denoiser, Lookahead};
use crate::distribution::Distribution;
use crate::error::{LeapError, Result};
use crate::exact::{MarkovDenoiser, MarkovSpec};
use crate::sequence::{TokenId, Vocab};
use crate::superposition::CandidateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Tiny,
    Markov,
}

impl FromStr for Backend {
    type Err = LeapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Backend::Tiny),
            "markov" => Ok(Backend::Markov),
            other => Err(LeapError::Config(format!("unknown backend `{other}`"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Tiny => "tiny",
            Backend::Markov => "markov",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub decode: DecodeConfig,
    pub backend: Backend,
    pub weights: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Corpus size for sampled evaluations.
    pub n: usize,
    /// Sequence length for sampled evaluations.
    pub len: usize,
    /// Keep probability of forward corruption.
    pub alpha: f64,
    pub prompt: Vec<TokenId>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            decode: DecodeConfig::default(),
            backend: Backend::Markov,
            weights: None,
            spec: None,
            corpus: None,
            n: 200,
            len: 64,
            alpha: 0.0,
            prompt: Vec::new(),
        }
    }
}

fn parse_tokens(value: &str) -> Result<Vec<TokenId>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value("prompt", s)).collect()
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.decode.set(key, value)? {
            return Ok(());
        }
        match key {
            "backend" => self.backend = value.parse()?,
            "weights" => self.weights = Some(PathBuf::from(value)),
            "spec" => self.spec = Some(PathBuf::from(value)),
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "n" => self.n = parse_value(key, value)?,
            "len" => self.len = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "prompt" => self.prompt = parse_tokens(value)?,
            other => return Err(LeapError::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// File values first, then `overrides` in order.
    pub fn from_pairs(file: &KeyValues, overrides: &[(&str, String)]) -> Result<Self> {
        let mut s = Self::default();
        for (k, v) in file.iter() {
            s.set(k, v)?;
        }
        for (k, v) in overrides {
            s.set(k, v)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.decode.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LeapError::Config(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.decode.seed.ok_or_else(|| LeapError::Config("a seed is required for randomized commands".into()))
    }

    /// Loads the configured backend, sized for sequences up to `max_len`.
    pub fn load_model(&self, max_len: usize) -> Result<Model> {
        match self.backend {
            Backend::Tiny => {
                let path = self
                    .weights
                    .as_ref()
                    .ok_or_else(|| LeapError::Config("backend `tiny` needs a weights file".into()))?;
                Ok(Model::Tiny(TinyDenoiser::new(DenoiserWeights::load(path)?)?))
            }
            Backend::Markov => {
                let path =
                    self.spec.as_ref().ok_or_else(|| LeapError::Config("backend `markov` needs a spec file".into()))?;
                Ok(Model::Markov(MarkovDenoiser::new(MarkovSpec::load(path)?, max_len)?))
            }
        }
    }

    pub fn to_pairs(&self) -> KeyValues {
        let d = &self.decode;
        let mut kv = KeyValues::default();
        kv.insert("strategy", d.strategy.to_string());
        kv.insert("phi", d.phi.to_string());
        kv.insert("tau", d.tau.to_string());
        kv.insert("eta", d.eta.to_string());
        kv.insert("block_size", d.block_size.to_string());
        kv.insert("visibility_mode", d.visibility_mode.to_string());
        kv.insert("union_cbpd", d.union_cbpd.to_string());
        kv.insert("gen_len", d.gen_len.to_string());
        if let Some(seed) = d.seed {
            kv.insert("seed", seed.to_string());
        }
        kv.insert("backend", self.backend.to_string());
        for (key, path) in [("weights", &self.weights), ("spec", &self.spec), ("corpus", &self.corpus)] {
            if let Some(p) = path {
                kv.insert(key, p.display().to_string());
            }
        }
        kv.insert("n", self.n.to_string());
        kv.insert("len", self.len.to_string());
        kv.insert("alpha", self.alpha.to_string());
        if !self.prompt.is_empty() {
            kv.insert("prompt", self.prompt.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","));
        }
        kv
    }
}

/// Either backend behind one [`Denoiser`].
#[derive(Debug, Clone)]
pub enum Model {
    Tiny(TinyDenoiser),
    Markov(MarkovDenoiser),
}

impl Model {
    fn inner(&self) -> &dyn Denoiser {
        match self {
            Model::Tiny(m) => m,
            Model::Markov(m) => m,
        }
    }
}

impl Denoiser for Model {
    fn vocab(&self) -> &Vocab {
        self.inner().vocab()
    }

    fn predict(&self, tokens: &[TokenId]) -> Result<BTreeMap<usize, Distribution>> {
        self.inner().predict(tokens)
    }

    fn lookahead(&self, tokens: &[TokenId], candidates: &[CandidateSet], mode: VisibilityMode) -> Result<Lookahead> {
        self.inner().lookahead(tokens, candidates, mode)
    }

    fn label(&self, strategy: Strategy) -> String {
        self.inner().label(strategy)
    }
}

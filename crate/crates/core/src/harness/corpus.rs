//! Sampled-corpus evaluation against generative ground truth.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::config::DecodeConfig;
use crate::decoding::{decode_state, Denoiser};
use crate::error::{LeapError, Result};
use crate::exact::{corrupt, sample_sequence, MarkovSpec};
use crate::par::{self, Execution};
use crate::rng::SplitMix64;
use crate::sequence::{SequenceState, TokenId};
use crate::trace::DecodeTrace;

use super::metrics::compute_metrics;

#[derive(Debug, Clone, PartialEq)]
pub struct ItemResult {
    pub index: usize,
    pub masked: usize,
    pub recovered: usize,
    pub exact_match: bool,
    pub steps: usize,
    pub tfops: u64,
    pub trace: DecodeTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub label: String,
    pub items: Vec<ItemResult>,
}

impl CorpusReport {
    /// Decoded tokens matching the ground truth, over all masked positions.
    /// A corpus with nothing masked recovers everything.
    pub fn recovery(&self) -> f64 {
        let masked: usize = self.items.iter().map(|i| i.masked).sum();
        let recovered: usize = self.items.iter().map(|i| i.recovered).sum();
        if masked == 0 {
            1.0
        } else {
            recovered as f64 / masked as f64
        }
    }

    pub fn exact_match_rate(&self) -> f64 {
        self.items.iter().filter(|i| i.exact_match).count() as f64 / self.items.len() as f64
    }

    pub fn mean_steps(&self) -> f64 {
        self.items.iter().map(|i| i.steps as f64).sum::<f64>() / self.items.len() as f64
    }

    pub fn total_steps(&self) -> usize {
        self.items.iter().map(|i| i.steps).sum()
    }

    pub fn total_tfops(&self) -> u64 {
        self.items.iter().map(|i| i.tfops).sum()
    }

    /// Mean tokens per forward over items that took at least one step.
    pub fn mean_tpf(&self) -> Option<f64> {
        let tpfs: Vec<f64> =
            self.items.iter().filter_map(|i| compute_metrics(&self.label, &i.trace, None).ok()?.tpf).collect();
        (!tpfs.is_empty()).then(|| tpfs.iter().sum::<f64>() / tpfs.len() as f64)
    }
}

/// Samples `n` sequences of length `len` from `spec`, corrupts each with
/// keep probability `alpha_t`, and decodes the masked positions with
/// `model`. Item seeds are drawn in order from one stream seeded by `seed`,
/// so results do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_corpus<D: Denoiser + ?Sized>(
    model: &D,
    spec: &MarkovSpec,
    n: usize,
    len: usize,
    alpha_t: f64,
    config: &DecodeConfig,
    seed: u64,
    exec: Execution,
) -> Result<CorpusReport> {
    if n == 0 {
        return Err(LeapError::invalid("corpus size must be at least 1"));
    }
    let vocab = model.vocab();
    if vocab.mask_id() as usize != spec.vocab_size || vocab.size() != spec.vocab_size + 1 {
        return Err(LeapError::invalid(format!(
            "model vocabulary ({} with mask {}) does not extend the chain vocabulary of {}",
            vocab.size(),
            vocab.mask_id(),
            spec.vocab_size
        )));
    }
    config.validate()?;
    let mut rng = SplitMix64::new(seed);
    let seeds: Vec<(u64, u64)> = (0..n).map(|_| (rng.next_u64(), rng.next_u64())).collect();
    let items = par::try_map(exec, &seeds, |index, &(sample_seed, corrupt_seed)| {
        let x0 = sample_sequence(spec, len, sample_seed);
        let xt = corrupt(&x0, alpha_t, corrupt_seed, vocab.mask_id())?;
        let state = SequenceState::from_partial(0, xt, config.block_size, vocab)?;
        let masked_pos: Vec<usize> = state.masked().iter().copied().collect();
        let (tokens, trace) = decode_state(model, state, config)?;
        let recovered = masked_pos.iter().filter(|&&p| tokens[p] == x0[p]).count();
        Ok::<_, LeapError>(ItemResult {
            index,
            masked: masked_pos.len(),
            recovered,
            exact_match: tokens == x0,
            steps: trace.num_steps(),
            tfops: trace.tfops(),
            trace,
        })
    })?;
    Ok(CorpusReport { label: model.label(config.strategy), items })
}

/// One JSON array of token ids per line.
pub fn save_corpus(path: &Path, corpus: &[Vec<TokenId>]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for seq in corpus {
        serde_json::to_writer(&mut w, seq)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Vec<Vec<TokenId>>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: Vec<TokenId> =
            serde_json::from_str(&line).map_err(|e| LeapError::format(format!("corpus line {}: {e}", lineno + 1)))?;
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Strategy;
    use crate::exact::MarkovDenoiser;

    fn spec() -> MarkovSpec {
        MarkovSpec::new(vec![0.6, 0.4], vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap()
    }

    fn cfg(strategy: Strategy) -> DecodeConfig {
        DecodeConfig { strategy, block_size: 8, gen_len: 16, ..DecodeConfig::default() }
    }

    #[test]
    fn nothing_masked_means_full_recovery_and_no_steps() {
        let model = MarkovDenoiser::new(spec(), 16).unwrap();
        let r = evaluate_corpus(&model, &spec(), 5, 16, 1.0, &cfg(Strategy::Cbpd), 1, Execution::Sequential).unwrap();
        assert_eq!(r.recovery(), 1.0);
        assert_eq!(r.exact_match_rate(), 1.0);
        assert_eq!(r.total_steps(), 0);
        assert_eq!(r.mean_tpf(), None);
    }

    #[test]
    fn deterministic_chain_is_recovered_by_every_strategy() {
        let ident = MarkovSpec::new(vec![1.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let model = MarkovDenoiser::new(ident.clone(), 16).unwrap();
        for strategy in [Strategy::Baseline, Strategy::Cbpd, Strategy::Leap] {
            let r = evaluate_corpus(&model, &ident, 4, 16, 0.3, &cfg(strategy), 2, Execution::Parallel).unwrap();
            assert_eq!(r.recovery(), 1.0, "{strategy}");
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let model = MarkovDenoiser::new(spec(), 16).unwrap();
        let a = evaluate_corpus(&model, &spec(), 12, 16, 0.2, &cfg(Strategy::Leap), 7, Execution::Sequential).unwrap();
        let b = evaluate_corpus(&model, &spec(), 12, 16, 0.2, &cfg(Strategy::Leap), 7, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.label, "leap-exact");
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let other = MarkovSpec::new(vec![1.0, 0.0, 0.0], vec![vec![1.0, 0.0, 0.0]; 3]).unwrap();
        let model = MarkovDenoiser::new(other, 16).unwrap();
        assert!(evaluate_corpus(&model, &spec(), 1, 16, 0.0, &cfg(Strategy::Cbpd), 1, Execution::Sequential).is_err());
        let model = MarkovDenoiser::new(spec(), 16).unwrap();
        assert!(evaluate_corpus(&model, &spec(), 0, 16, 0.0, &cfg(Strategy::Cbpd), 1, Execution::Sequential).is_err());
    }

    #[test]
    fn corpus_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = vec![vec![0, 1, 1], vec![1]];
        save_corpus(&path, &corpus).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "[0,1,1]\n[1]\n");
        assert_eq!(load_corpus(&path).unwrap(), corpus);
    }
}

#![allow(dead_code)]

use std::path::PathBuf;

use leap_core::backend::{DenoiserWeights, Dims, TinyDenoiser};
use leap_core::exact::MarkovSpec;
use leap_core::rng::SplitMix64;
use leap_core::superposition::CandidateSet;
use leap_core::TokenId;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn default_spec() -> MarkovSpec {
    MarkovSpec::load(&data_path("markov_default.json")).expect("committed spec loads")
}

pub fn dims(vocab: usize, layers: usize) -> Dims {
    Dims { d_model: 16, n_heads: 2, n_layers: layers, d_ffn: 32, vocab, max_pos: 64 }
}

pub fn tiny(seed: u64, vocab: usize, layers: usize) -> TinyDenoiser {
    TinyDenoiser::new(DenoiserWeights::seeded(seed, dims(vocab, layers)).unwrap()).unwrap()
}

pub fn below(rng: &mut SplitMix64, n: usize) -> usize {
    (rng.next_f64() * n as f64) as usize % n
}

/// A random sequence of `len` tokens with at least one mask (`vocab - 1`).
pub fn random_masked(rng: &mut SplitMix64, vocab: usize, len: usize, mask_rate: f64) -> Vec<TokenId> {
    let mask = (vocab - 1) as TokenId;
    let mut tokens: Vec<TokenId> =
        (0..len).map(|_| if rng.next_f64() < mask_rate { mask } else { below(rng, vocab - 1) as TokenId }).collect();
    let forced = below(rng, len);
    tokens[forced] = mask;
    tokens
}

/// Up to `max_size` distinct non-mask tokens with made-up probabilities.
pub fn random_candidates(rng: &mut SplitMix64, owner: usize, vocab: usize, max_size: usize) -> CandidateSet {
    let size = below(rng, max_size + 1);
    let mut pool: Vec<TokenId> = (0..(vocab - 1) as TokenId).collect();
    let mut tokens = Vec::new();
    for _ in 0..size.min(pool.len()) {
        let t = pool.swap_remove(below(rng, pool.len()));
        tokens.push((t, 0.2 + 0.1 * rng.next_f64()));
    }
    CandidateSet { owner, tokens }
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_spec(rng: &mut SplitMix64, v: usize) -> MarkovSpec {
    let row = |rng: &mut SplitMix64| {
        let w: Vec<f64> = (0..v).map(|_| 0.05 + rng.next_f64()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let initial = row(rng);
    let transition = (0..v).map(|_| row(rng)).collect();
    MarkovSpec::new(initial, transition).unwrap()
}

mod common;

use std::collections::BTreeMap;

use common::*;
use leap_core::analysis::oracle_converged;
use leap_core::exact::{brute_force_conditional, exact_conditional, MarkovDenoiser, MarkovSpec, NoisyCopySpec};
use leap_core::par::Execution;
use leap_core::rng::SplitMix64;
use leap_core::superposition::CandidateSet;
use leap_core::{Denoiser, TokenId};

#[test]
fn closed_form_matches_enumeration() {
    let mut rng = SplitMix64::new(3);
    for case in 0..100 {
        let v = 2 + below(&mut rng, 3);
        let spec = random_spec(&mut rng, v);
        let len = 1 + below(&mut rng, 8);
        let context = random_masked(&mut rng, v + 1, len, 0.6);
        let exact = exact_conditional(&spec, &context).unwrap();
        let brute = brute_force_conditional(&spec, &context).unwrap();
        assert_eq!(exact.keys().collect::<Vec<_>>(), brute.keys().collect::<Vec<_>>());
        for (pos, d) in &exact {
            assert!(max_abs(d.probs(), brute[pos].probs()) < 1e-10, "case {case} pos {pos}");
        }
    }
}

#[test]
fn worked_example() {
    let spec = MarkovSpec::new(vec![0.5, 0.5], vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let post = exact_conditional(&spec, &[0, 2, 0]).unwrap();
    assert!((post[&1].prob(0) - 0.81 / 0.83).abs() < 1e-12);
}

#[test]
fn exact_lookahead_agrees_with_enumerated_oracle() {
    let mut rng = SplitMix64::new(8);
    let mut flips = 0;
    for case in 0..150 {
        let v = 2 + below(&mut rng, 3);
        let spec = random_spec(&mut rng, v);
        let model = MarkovDenoiser::new(spec, 12).unwrap();
        let len = 2 + below(&mut rng, 10);
        let tokens = random_masked(&mut rng, v + 1, len, 0.6);
        let masked: Vec<usize> = (0..len).filter(|&i| tokens[i] == v as TokenId).collect();
        let sets: Vec<CandidateSet> = masked.iter().map(|&o| random_candidates(&mut rng, o, v + 1, 2)).collect();
        let by_owner: BTreeMap<usize, &CandidateSet> = sets.iter().map(|s| (s.owner, s)).collect();
        for &i in &masked {
            let flip = model.lookahead_flip(&tokens, i, &by_owner).unwrap();
            let stable = oracle_converged(&model, &tokens, i, &sets, Execution::Sequential).unwrap();
            assert_eq!(flip.is_none(), stable, "case {case} position {i}");
            if let Some(t) = flip {
                flips += 1;
                assert_ne!(t, model.predict(&tokens).unwrap()[&i].greedy().0);
            }
        }
    }
    assert!(flips > 0, "no instance exercised a flip");
}

#[test]
fn noisy_copy_data_has_long_range_dependence() {
    let text = std::fs::read_to_string(data_path("noisy_copy.json")).unwrap();
    let spec = NoisyCopySpec::from_json(&text).unwrap();
    let m = spec.vocab_size as TokenId;
    let a = brute_force_conditional(&spec, &[0, 1, m, 1]).unwrap();
    let b = brute_force_conditional(&spec, &[2, 1, m, 1]).unwrap();
    for d in a.values().chain(b.values()) {
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    // Same neighbours, different first token: a pure chain could not tell
    // these apart.
    assert!(max_abs(a[&2].probs(), b[&2].probs()) > 0.05);
    assert_ne!(a[&2].greedy().0, b[&2].greedy().0);
}

#[test]
fn committed_spec_is_valid() {
    let spec = default_spec();
    assert_eq!(spec.vocab_size, 8);
    let round = MarkovSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(round, spec);
}

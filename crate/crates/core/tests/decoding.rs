mod common;

use std::collections::BTreeMap;

use common::*;
use leap_core::analysis::oracle_converged;
use leap_core::decoding::{convergence_target, decode_state_with, step_cbpd};
use leap_core::exact::MarkovDenoiser;
use leap_core::par::Execution;
use leap_core::rng::SplitMix64;
use leap_core::superposition::{consistent_set, CandidateSet};
use leap_core::trace::Mechanism;
use leap_core::{run_decode, DecodeConfig, Distribution, SequenceState, Strategy, TokenId, Vocab};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;

fn dist_strategy(v: usize) -> impl proptest::strategy::Strategy<Value = Distribution> {
    proptest::collection::vec(0.001f64..1.0, v).prop_map(|w| {
        let s: f64 = w.iter().sum();
        Distribution::new(w.into_iter().map(|x| x / s).collect()).unwrap()
    })
}

fn markov_model(seed: u64, v: usize, max_len: usize) -> MarkovDenoiser {
    let mut rng = SplitMix64::new(seed);
    MarkovDenoiser::new(random_spec(&mut rng, v), max_len).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cbpd_sets_shrink_as_phi_grows(
        dists in proptest::collection::vec(dist_strategy(5), 1..12),
        phis in (0.05f64..1.0, 0.05f64..1.0),
    ) {
        let vocab = Vocab::new(6, 5).unwrap();
        let state = SequenceState::new(&[], dists.len(), dists.len(), &vocab).unwrap();
        let map: BTreeMap<usize, Distribution> = dists.into_iter().enumerate().collect();
        let (lo, hi) = if phis.0 <= phis.1 { phis } else { (phis.1, phis.0) };
        let small = step_cbpd(&state, &map, hi).unwrap().positions();
        let large = step_cbpd(&state, &map, lo).unwrap().positions();
        prop_assert!(!small.is_empty());
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn gated_sets_shrink_as_tau_grows(
        preds in proptest::collection::vec((0u32..4, 0.0f64..1.0, 0u32..4), 0..12),
        taus in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let orig: BTreeMap<usize, (TokenId, f64)> = preds.iter().enumerate().map(|(i, p)| (i, (p.0, p.1))).collect();
        let copy: BTreeMap<usize, TokenId> = preds.iter().enumerate().map(|(i, p)| (i, p.2)).collect();
        let (lo, hi) = if taus.0 <= taus.1 { taus } else { (taus.1, taus.0) };
        let strict = consistent_set(&orig, &copy, hi).unwrap();
        let loose = consistent_set(&orig, &copy, lo).unwrap();
        prop_assert!(strict.is_subset(&loose));
    }

    #[test]
    fn every_strategy_progresses_and_terminates(
        seed in 0u64..1000,
        v in 2usize..5,
        blocks in 1usize..4,
        block_size in 1usize..6,
        prompt_len in 0usize..4,
        strategy in prop_oneof![Just(Strategy::Baseline), Just(Strategy::Cbpd), Just(Strategy::Leap)],
    ) {
        let gen_len = blocks * block_size;
        let model = markov_model(seed, v, prompt_len + gen_len);
        let prompt: Vec<TokenId> = (0..prompt_len).map(|i| (i % v) as TokenId).collect();
        let cfg = DecodeConfig { strategy, gen_len, block_size, phi: 0.6, tau: 0.5, ..DecodeConfig::default() };
        let (tokens, trace) = run_decode(&model, &prompt, &cfg).unwrap();
        prop_assert_eq!(&tokens[..prompt_len], &prompt[..]);
        prop_assert!(tokens.iter().all(|&t| (t as usize) < v));
        prop_assert!(trace.num_steps() <= gen_len);
        prop_assert!(trace.steps.iter().all(|s| !s.events.is_empty()));
        prop_assert_eq!(trace.decoded_tokens(), gen_len);
        if strategy == Strategy::Baseline {
            prop_assert_eq!(trace.num_steps(), gen_len);
        }
        let (tokens2, trace2) = run_decode(&model, &prompt, &cfg).unwrap();
        prop_assert_eq!(tokens, tokens2);
        prop_assert_eq!(trace.to_jsonl(), trace2.to_jsonl());
    }

    #[test]
    fn oracle_is_monotone_in_candidate_sets(seed in 0u64..500, len in 2usize..9) {
        let mut rng = SplitMix64::new(seed);
        let v = 3;
        let model = MarkovDenoiser::new(random_spec(&mut rng, v), len).unwrap();
        let tokens = random_masked(&mut rng, v + 1, len, 0.6);
        let masked: Vec<usize> = (0..len).filter(|&i| tokens[i] == v as TokenId).collect();
        // At most 3^7 assignments, inside the enumeration bound.
        let full: Vec<CandidateSet> = masked.iter().map(|&o| random_candidates(&mut rng, o, v + 1, 2)).collect();
        let shrunk: Vec<CandidateSet> = full
            .iter()
            .map(|s| CandidateSet { owner: s.owner, tokens: s.tokens.iter().take(s.len() / 2).copied().collect() })
            .collect();
        for &i in &masked {
            let big = oracle_converged(&model, &tokens, i, &full, Execution::Sequential).unwrap();
            let small = oracle_converged(&model, &tokens, i, &shrunk, Execution::Sequential).unwrap();
            prop_assert!(!big || small);
        }
    }
}

#[test]
fn cbpd_fallback_fires_exactly_when_nothing_clears_phi() {
    for seed in 0..40 {
        let model = markov_model(seed, 3, 12);
        let cfg = DecodeConfig { strategy: Strategy::Cbpd, gen_len: 12, block_size: 4, ..DecodeConfig::default() };
        let state = SequenceState::new(&[], 12, 4, leap_core::Denoiser::vocab(&model)).unwrap();
        decode_state_with(&model, state, &cfg, |view| {
            let active = view.state.active_masked()?;
            let confs: Vec<(usize, f64)> =
                view.record.snapshots.iter().filter(|s| active.contains(&s.pos)).map(|s| (s.pos, s.conf)).collect();
            let any_above = confs.iter().any(|&(_, c)| c > cfg.phi);
            let fallback = view.record.events.iter().any(|e| e.mech == Mechanism::Fallback);
            assert_eq!(fallback, !any_above);
            if fallback {
                let best = confs.iter().copied().fold((usize::MAX, -1.0), |b, (p, c)| if c > b.1 { (p, c) } else { b });
                assert_eq!(view.record.events.len(), 1);
                assert_eq!(view.record.events[0].pos, best.0);
            }
            Ok(())
        })
        .unwrap();
    }
}

#[test]
fn convergence_target_replays_cbpd() {
    for seed in 0..10 {
        let model = markov_model(seed, 4, 16);
        let cfg = DecodeConfig { gen_len: 16, block_size: 8, ..DecodeConfig::default() };
        let (target, trace) = convergence_target(&model, &[], &cfg).unwrap();
        let cbpd = DecodeConfig { strategy: Strategy::Cbpd, ..cfg.clone() };
        let (tokens, trace2) = run_decode(&model, &[], &cbpd).unwrap();
        assert_eq!(trace.to_jsonl(), trace2.to_jsonl());
        assert_eq!(target.positions.len(), 16);
        for (&pos, entry) in &target.positions {
            assert_eq!(entry.token, tokens[pos]);
            assert!(trace.steps[entry.step - 1].events.iter().any(|e| e.pos == pos));
        }
    }
}

#[test]
fn leap_decodes_no_more_steps_than_gen_len_on_the_tiny_model() {
    let model = tiny(3, 10, 2);
    for eta in [0.05, 0.1, 0.2] {
        let cfg = DecodeConfig { gen_len: 16, block_size: 8, eta, tau: 0.3, ..DecodeConfig::default() };
        let (tokens, trace) = run_decode(&model, &[1, 2, 3], &cfg).unwrap();
        assert_eq!(tokens.len(), 19);
        assert!(trace.num_steps() <= 16);
        assert!(tokens.iter().all(|&t| t != 9));
    }
}

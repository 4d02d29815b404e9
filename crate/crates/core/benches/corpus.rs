use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use leap_core::analysis::{detector_quality, oracle_converged};
use leap_core::backend::{DenoiserWeights, Dims, TinyDenoiser};
use leap_core::exact::{MarkovDenoiser, MarkovSpec};
use leap_core::harness::evaluate_corpus;
use leap_core::par::Execution;
use leap_core::superposition::CandidateSet;
use leap_core::{DecodeConfig, Strategy, TokenId};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn spec() -> MarkovSpec {
    MarkovSpec::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/markov_default.json")).unwrap()
}

fn toy() -> TinyDenoiser {
    let dims = Dims { d_model: 32, n_heads: 4, n_layers: 2, d_ffn: 64, vocab: 12, max_pos: 64 };
    TinyDenoiser::new(DenoiserWeights::seeded(7, dims).unwrap()).unwrap()
}

fn corpus(c: &mut Criterion) {
    let spec = spec();
    let model = MarkovDenoiser::new(spec.clone(), 64).unwrap();
    let mut group = c.benchmark_group("evaluate_corpus");
    group.sample_size(10);
    for strategy in [Strategy::Cbpd, Strategy::Leap] {
        let cfg = DecodeConfig { strategy, ..DecodeConfig::default() };
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(strategy.to_string(), name), &exec, |b, &exec| {
                b.iter(|| evaluate_corpus(&model, &spec, 64, 64, 0.2, &cfg, 1, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let model = toy();
    let mut tokens: Vec<TokenId> = vec![1, 2, 3, 4];
    tokens.extend([11; 8]);
    // Seven other owners with two candidates each: 3^7 = 2187 forwards.
    let sets: Vec<CandidateSet> =
        (5..12).map(|owner| CandidateSet { owner, tokens: vec![(0, 0.3), (owner as TokenId - 4, 0.25)] }).collect();
    let mut group = c.benchmark_group("oracle_converged");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| oracle_converged(&model, &tokens, 4, &sets, exec).unwrap()));
    }
    group.finish();

    let prompts: Vec<Vec<TokenId>> = (0..8).map(|k| vec![k % 11, (k + 3) % 11, 5, 1]).collect();
    let cfg = DecodeConfig { gen_len: 16, block_size: 8, tau: 0.5, ..DecodeConfig::default() };
    let mut group = c.benchmark_group("detector_quality");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| detector_quality(&model, &prompts, &cfg, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, corpus, oracle);
criterion_main!(benches);

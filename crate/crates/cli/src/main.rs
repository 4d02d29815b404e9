//! `leap`: command-line harness for weights, corpora, decoding runs and
//! reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3
//! enumeration bound exceeded.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use leap_core::analysis::{detector_quality, early_stats, prev_conf_cdf, Bins};
use leap_core::backend::{DenoiserWeights, Dims};
use leap_core::config::KeyValues;
use leap_core::decoding::{decode_state, ConvergenceTarget};
use leap_core::exact::{corrupt, sample_sequence, MarkovSpec};
use leap_core::harness::{
    compute_metrics, load_corpus, save_corpus, sweep, sweep_values, Backend, Settings, SweepParam, SweepRow,
};
use leap_core::par::Execution;
use leap_core::rng::SplitMix64;
use leap_core::{DecodeConfig, DecodeTrace, Denoiser, LeapError, SequenceState, Strategy};

#[derive(Parser)]
#[command(name = "leap", version, about = "Parallel decoding harness for masked-diffusion denoisers")]
struct Cli {
    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Write seeded transformer weights.
    GenWeights {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        d_model: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 64)]
        ffn: usize,
        #[arg(long, default_value_t = 12)]
        vocab: usize,
        #[arg(long, default_value_t = 128)]
        max_pos: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample sequences from a Markov chain, one JSON array per line.
    SampleCorpus {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        len: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode one sequence and write its trace.
    Run(RunArgs),
    /// Steps, TPF and TFOPs of a trace, optionally against a baseline.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Strategy name for the report; defaults to the trace file stem.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Early-convergence statistics over paired traces and targets.
    Stats {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision and recall of the lookahead detector against enumeration.
    Oracle {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus evaluation over a grid of one threshold.
    Sweep {
        #[arg(long)]
        param: String,
        /// `LO:HI:STEP`, inclusive.
        #[arg(long)]
        range: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` settings; flags override them.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    gen_len: Option<usize>,
    /// Keep probability when corrupting a sampled sequence (markov backend).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    union_cbpd: Option<bool>,
    /// Comma-separated prompt token ids (tiny backend).
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    trace: PathBuf,
    /// Also write the CBPD convergence target of the same input.
    #[arg(long)]
    target_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match execute(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &LeapError) -> u8 {
    match e {
        LeapError::Config(_) => 1,
        LeapError::BoundExceeded { .. } => 3,
        _ => 2,
    }
}

fn execute(command: Command, exec: Execution) -> leap_core::Result<()> {
    match command {
        Command::GenWeights { seed, d_model, heads, layers, ffn, vocab, max_pos, out } => {
            let dims = Dims { d_model, n_heads: heads, n_layers: layers, d_ffn: ffn, vocab, max_pos };
            dims.validate().map_err(|e| LeapError::Config(e.to_string()))?;
            DenoiserWeights::seeded(seed, dims)?.save(&out)
        }
        Command::SampleCorpus { spec, n, len, seed, out } => {
            let spec = MarkovSpec::load(&spec)?;
            let mut rng = SplitMix64::new(seed);
            let corpus: Vec<_> = (0..n).map(|_| sample_sequence(&spec, len, rng.next_u64())).collect();
            save_corpus(&out, &corpus)
        }
        Command::Run(args) => run(args),
        Command::Metrics { trace, baseline, label, out } => {
            let run = DecodeTrace::load(&trace)?;
            let base = baseline.as_deref().map(DecodeTrace::load).transpose()?;
            let label = label.unwrap_or_else(|| stem(&trace));
            let report = compute_metrics(&label, &run, base.as_ref())?;
            std::fs::write(&out, report.to_csv())?;
            std::fs::write(sibling(&out, "steps"), report.lengths_csv())?;
            Ok(())
        }
        Command::Stats { traces, targets, out } => stats(&traces, &targets, &out),
        Command::Oracle { weights, corpus, config, out } => {
            let mut settings = load_settings(&config, &[])?;
            settings.backend = Backend::Tiny;
            settings.weights = Some(weights);
            let model = settings.load_model(0)?;
            let prompts = load_corpus(&corpus)?;
            let report = detector_quality(&model, &prompts, &settings.decode, exec)?;
            std::fs::write(&out, report.to_csv())?;
            let fmt = |v: Option<f64>| v.map_or("absent".to_string(), |x| format!("{x:.4}"));
            println!(
                "steps {} oracle {} precision {} recall {}",
                report.steps.len(),
                report.oracle_total(),
                fmt(report.precision()),
                fmt(report.recall())
            );
            Ok(())
        }
        Command::Sweep { param, range, config, out } => {
            let param: SweepParam = param.parse()?;
            let (lo, hi, step) = parse_range(&range)?;
            let values = sweep_values(lo, hi, step)?;
            let settings = load_settings(&config, &[])?;
            let seed = settings.seed()?;
            let spec_path =
                settings.spec.as_ref().ok_or_else(|| LeapError::Config("sweep needs `spec` for its corpus".into()))?;
            let spec = MarkovSpec::load(spec_path)?;
            let model = settings.load_model(settings.len)?;
            let rows = sweep(
                &model,
                &spec,
                param,
                &values,
                &settings.decode,
                settings.n,
                settings.len,
                settings.alpha,
                seed,
                exec,
            )?;
            std::fs::write(&out, SweepRow::to_csv(param, &rows))?;
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> leap_core::Result<()> {
    let mut overrides: Vec<(&str, String)> = Vec::new();
    let mut push = |key, value: Option<String>| {
        if let Some(v) = value {
            overrides.push((key, v));
        }
    };
    push("backend", args.backend);
    push("weights", args.weights.map(|p| p.display().to_string()));
    push("spec", args.spec.map(|p| p.display().to_string()));
    push("strategy", args.strategy);
    push("phi", args.phi.map(|v| v.to_string()));
    push("tau", args.tau.map(|v| v.to_string()));
    push("eta", args.eta.map(|v| v.to_string()));
    push("block_size", args.block_size.map(|v| v.to_string()));
    push("gen_len", args.gen_len.map(|v| v.to_string()));
    push("alpha", args.alpha.map(|v| v.to_string()));
    push("seed", args.seed.map(|v| v.to_string()));
    push("visibility_mode", args.mode);
    push("union_cbpd", args.union_cbpd.map(|v| v.to_string()));
    push("prompt", args.prompt);
    let settings = match &args.config {
        Some(path) => load_settings(path, &overrides)?,
        None => Settings::from_pairs(&KeyValues::default(), &overrides)?,
    };
    let seed = settings.seed()?;
    let cfg = &settings.decode;

    let (model, state, truth) = match settings.backend {
        Backend::Markov => {
            let spec_path =
                settings.spec.as_ref().ok_or_else(|| LeapError::Config("backend `markov` needs --spec".into()))?;
            let spec = MarkovSpec::load(spec_path)?;
            let model = settings.load_model(cfg.gen_len)?;
            let mut rng = SplitMix64::new(seed);
            let x0 = sample_sequence(&spec, cfg.gen_len, rng.next_u64());
            let xt = corrupt(&x0, settings.alpha, rng.next_u64(), spec.mask_id())?;
            let state = SequenceState::from_partial(0, xt, cfg.block_size, model.vocab())?;
            (model, state, Some(x0))
        }
        Backend::Tiny => {
            let model = settings.load_model(0)?;
            let state = SequenceState::new(&settings.prompt, cfg.gen_len, cfg.block_size, model.vocab())?;
            (model, state, None)
        }
    };
    if let Some(path) = &args.target_out {
        let cbpd = DecodeConfig { strategy: Strategy::Cbpd, ..cfg.clone() };
        let (_, trace) = decode_state(&model, state.clone(), &cbpd)?;
        ConvergenceTarget::from_trace(&trace).save(path)?;
    }
    let masked: Vec<usize> = state.masked().iter().copied().collect();
    let start = Instant::now();
    let (tokens, trace) = decode_state(&model, state, cfg)?;
    let wall = start.elapsed();
    trace.save(&args.trace)?;

    let mut summary = serde_json::json!({
        "strategy": model.label(cfg.strategy),
        "steps": trace.num_steps(),
        "decoded": trace.decoded_tokens(),
        "tfops": trace.tfops(),
        "wall_ms": wall.as_secs_f64() * 1e3,
        "tokens": tokens,
    });
    if let Some(x0) = truth {
        let recovered = masked.iter().filter(|&&p| tokens[p] == x0[p]).count();
        summary["recovery"] =
            serde_json::json!(if masked.is_empty() { 1.0 } else { recovered as f64 / masked.len() as f64 });
    }
    println!("{summary}");
    Ok(())
}

fn stats(traces: &Path, targets: &Path, out: &Path) -> leap_core::Result<()> {
    let mut paths: Vec<PathBuf> =
        std::fs::read_dir(traces)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
    paths.sort();
    if paths.is_empty() {
        return Err(LeapError::InvalidInput(format!("no .jsonl traces in {}", traces.display())));
    }
    let mut runs = Vec::with_capacity(paths.len());
    for path in &paths {
        let target_path = targets.join(format!("{}.json", stem(path)));
        let target = ConvergenceTarget::load(&target_path)
            .map_err(|e| LeapError::InvalidInput(format!("{}: {e}", target_path.display())))?;
        runs.push((DecodeTrace::load(path)?, target));
    }
    let pairs: Vec<_> = runs.iter().map(|(t, g)| (t, g)).collect();
    let bins = Bins::default();
    std::fs::write(out, early_stats(&pairs, &bins)?.to_csv())?;
    let cdf = prev_conf_cdf(&pairs, &bins)?;
    std::fs::write(sibling(out, "cdf"), cdf.to_csv())?;
    match cdf.quantile(0.10) {
        Some(q) => println!("confidence at cumulative 0.10: {q:.4} ({} excluded)", cdf.excluded),
        None => println!("no token had an earlier snapshot ({} excluded)", cdf.excluded),
    }
    Ok(())
}

/// Settings from a file, with relative paths taken from the file's directory.
fn load_settings(path: &Path, overrides: &[(&str, String)]) -> leap_core::Result<Settings> {
    let file = KeyValues::load(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut resolved = KeyValues::default();
    for (k, v) in file.iter() {
        match k {
            "weights" | "spec" | "corpus" if Path::new(v).is_relative() => {
                resolved.insert(k, base.join(v).display().to_string())
            }
            _ => resolved.insert(k, v),
        }
    }
    Settings::from_pairs(&resolved, overrides)
}

fn parse_range(text: &str) -> leap_core::Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| LeapError::Config(format!("bad range `{text}`, expected LO:HI:STEP")))?;
    match parts[..] {
        [lo, hi, step] => Ok((lo, hi, step)),
        _ => Err(LeapError::Config(format!("bad range `{text}`, expected LO:HI:STEP"))),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `dir/name.csv` becomes `dir/name.<tag>.csv`.
fn sibling(path: &Path, tag: &str) -> PathBuf {
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{}.{tag}.{ext}", stem(path)))
}

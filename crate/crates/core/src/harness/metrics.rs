use std::fmt::Write as _;
use std::time::Duration;

use crate::error::{LeapError, Result};
use crate::trace::DecodeTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub strategy: String,
    pub steps: usize,
    pub decoded: usize,
    /// Tokens per forward; absent for a run with no steps.
    pub tpf: Option<f64>,
    /// Token forward operations: the sum of per-step forward lengths.
    pub tfops: u64,
    pub normalized_tfops: Option<f64>,
    pub speedup_steps: Option<f64>,
    pub wall_time: Option<Duration>,
    pub speedup_wall: Option<f64>,
    pub forward_lengths: Vec<usize>,
}

/// Metrics of `trace`, relative to `baseline` when given. Wall time is not
/// part of a trace; callers that timed the run fill it in afterwards with
/// [`MetricsReport::with_wall_time`].
pub fn compute_metrics(strategy: &str, trace: &DecodeTrace, baseline: Option<&DecodeTrace>) -> Result<MetricsReport> {
    trace.validate()?;
    let steps = trace.num_steps();
    let decoded = trace.decoded_tokens();
    let forward_lengths: Vec<usize> = trace.steps.iter().map(|s| s.forward_len).collect();
    let tfops = forward_lengths.iter().map(|&l| l as u64).sum();
    let (normalized_tfops, speedup_steps) = match baseline {
        Some(base) => {
            base.validate()?;
            if base.decoded_tokens() != decoded {
                return Err(LeapError::invalid(format!(
                    "baseline decoded {} tokens, run decoded {decoded}",
                    base.decoded_tokens()
                )));
            }
            let norm = (base.tfops() > 0).then(|| tfops as f64 / base.tfops() as f64);
            let speed = (steps > 0).then(|| base.num_steps() as f64 / steps as f64);
            (norm, speed)
        }
        None => (None, None),
    };
    Ok(MetricsReport {
        strategy: strategy.to_string(),
        steps,
        decoded,
        tpf: (steps > 0).then(|| decoded as f64 / steps as f64),
        tfops,
        normalized_tfops,
        speedup_steps,
        wall_time: None,
        speedup_wall: None,
        forward_lengths,
    })
}

impl MetricsReport {
    pub fn with_wall_time(mut self, wall: Duration, baseline_wall: Option<Duration>) -> Self {
        self.wall_time = Some(wall);
        self.speedup_wall = baseline_wall.filter(|_| !wall.is_zero()).map(|b| b.as_secs_f64() / wall.as_secs_f64());
        self
    }

    pub fn csv_header() -> &'static str {
        "strategy,steps,decoded,tpf,tfops,normalized_tfops,speedup_steps,wall_s,speedup_wall"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.strategy,
            self.steps,
            self.decoded,
            opt(self.tpf),
            self.tfops,
            opt(self.normalized_tfops),
            opt(self.speedup_steps),
            opt(self.wall_time.map(|d| d.as_secs_f64())),
            opt(self.speedup_wall)
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }

    /// Per-step forward lengths as `step,forward_len` rows.
    pub fn lengths_csv(&self) -> String {
        let mut out = String::from("step,forward_len\n");
        for (i, l) in self.forward_lengths.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, l);
        }
        out
    }
}

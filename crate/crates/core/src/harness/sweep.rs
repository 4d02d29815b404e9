use std::fmt::Write as _;
use std::str::FromStr;

use crate::config::{DecodeConfig, Strategy};
use crate::decoding::Denoiser;
use crate::error::{LeapError, Result};
use crate::exact::MarkovSpec;
use crate::par::Execution;

use super::corpus::evaluate_corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Tau,
    Eta,
    Phi,
}

impl FromStr for SweepParam {
    type Err = LeapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(SweepParam::Tau),
            "eta" => Ok(SweepParam::Eta),
            "phi" => Ok(SweepParam::Phi),
            other => Err(LeapError::Config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub accuracy: f64,
    pub mean_steps: f64,
    pub mean_tpf: Option<f64>,
    /// TFOPs relative to CBPD on the same corpus.
    pub normalized_tfops: Option<f64>,
}

impl SweepRow {
    pub fn csv_header(param: SweepParam) -> String {
        let name = match param {
            SweepParam::Tau => "tau",
            SweepParam::Eta => "eta",
            SweepParam::Phi => "phi",
        };
        format!("{name},accuracy,mean_steps,mean_tpf,normalized_tfops")
    }

    pub fn to_csv(param: SweepParam, rows: &[SweepRow]) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = Self::csv_header(param) + "\n";
        for r in rows {
            let _ = writeln!(
                out,
                "{:.4},{:.6},{:.4},{},{}",
                r.value,
                r.accuracy,
                r.mean_steps,
                opt(r.mean_tpf),
                opt(r.normalized_tfops)
            );
        }
        out
    }
}

/// Inclusive grid `lo, lo + step, ...` up to `hi`, snapped to 1e-9 so that
/// `0.55:0.8:0.05` yields six clean values.
pub fn sweep_values(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || lo > hi || !lo.is_finite() || !hi.is_finite() {
        return Err(LeapError::Config(format!("bad sweep range {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Evaluates one corpus per grid value, varying `param` in `base`.
#[allow(clippy::too_many_arguments)]
pub fn sweep<D: Denoiser + ?Sized>(
    model: &D,
    spec: &MarkovSpec,
    param: SweepParam,
    values: &[f64],
    base: &DecodeConfig,
    n: usize,
    len: usize,
    alpha_t: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if n == 0 {
        return Err(LeapError::invalid("empty corpus"));
    }
    let reference_cfg = DecodeConfig { strategy: Strategy::Cbpd, ..base.clone() };
    let reference = evaluate_corpus(model, spec, n, len, alpha_t, &reference_cfg, seed, exec)?;
    let reference_tfops = reference.total_tfops();
    values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match param {
                SweepParam::Tau => cfg.tau = value,
                SweepParam::Eta => cfg.eta = value,
                SweepParam::Phi => cfg.phi = value,
            }
            let report = evaluate_corpus(model, spec, n, len, alpha_t, &cfg, seed, exec)?;
            Ok(SweepRow {
                value,
                accuracy: report.recovery(),
                mean_steps: report.mean_steps(),
                mean_tpf: report.mean_tpf(),
                normalized_tfops: (reference_tfops > 0).then(|| report.total_tfops() as f64 / reference_tfops as f64),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::MarkovDenoiser;

    #[test]
    fn grid_sizes() {
        let tau = sweep_values(0.55, 0.80, 0.05).unwrap();
        assert_eq!(tau, vec![0.55, 0.6, 0.65, 0.7, 0.75, 0.8]);
        assert_eq!(sweep_values(0.1, 0.5, 0.05).unwrap().len(), 9);
        assert_eq!(sweep_values(0.3, 0.3, 0.05).unwrap(), vec![0.3]);
        assert!(sweep_values(0.5, 0.3, 0.05).is_err());
        assert!(sweep_values(0.1, 0.3, 0.0).is_err());
    }

    #[test]
    fn sweep_emits_one_row_per_value() {
        let spec = MarkovSpec::new(vec![0.6, 0.4], vec![vec![0.85, 0.15], vec![0.25, 0.75]]).unwrap();
        let model = MarkovDenoiser::new(spec.clone(), 16).unwrap();
        let base = DecodeConfig { block_size: 8, gen_len: 16, ..DecodeConfig::default() };
        let values = sweep_values(0.6, 0.8, 0.1).unwrap();
        let rows = sweep(&model, &spec, SweepParam::Tau, &values, &base, 6, 16, 0.0, 3, Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.mean_tpf.unwrap() >= 1.0));
        let csv = SweepRow::to_csv(SweepParam::Tau, &rows);
        assert!(csv.starts_with("tau,accuracy,mean_steps,mean_tpf,normalized_tfops\n0.6000,"));
        assert!(sweep(&model, &spec, SweepParam::Tau, &values, &base, 0, 16, 0.0, 3, Execution::Parallel).is_err());
    }
}

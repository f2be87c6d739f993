use std::fmt;

use helios_client::{Client, InstrumentKind};
use helios_core::learn::inverse::DEFAULT_START;
use helios_core::learn::{inverse_design, GpFitOptions, GpModel, Hyperparams, NelderMeadOptions};
use helios_core::{Channel, RgbSetting};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;

pub const SAMPLE_UPPER: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct InverseParams {
    /// Desired counts in CLRGB output order (630, 515, 445 nm).
    pub target: [f64; 3],
    pub samples: usize,
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelSummary {
    pub channel: Channel,
    pub target: f64,
    pub predicted_mean: f64,
    pub predicted_std: f64,
    pub empirical_mean: f64,
    pub empirical_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseReport {
    pub seed: u64,
    pub samples: usize,
    pub hyperparams: Hyperparams,
    pub solution: RgbSetting,
    pub unclamped: [f64; 3],
    pub converged: bool,
    pub at_boundary: bool,
    pub channels: Vec<ChannelSummary>,
    pub repeats: Vec<Vec<u16>>,
    pub warnings: Vec<String>,
}

impl fmt::Display for InverseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}, {} training samples", self.seed, self.samples)?;
        let s = self.solution;
        writeln!(f, "solution R={:.4} G={:.4} B={:.4}", s.r(), s.g(), s.b())?;
        writeln!(
            f,
            "{:>8}  {:>8}  {:>10}  {:>8}  {:>10}  {:>8}",
            "channel", "target", "predicted", "+/-", "measured", "+/-"
        )?;
        for c in &self.channels {
            writeln!(
                f,
                "{:>8}  {:>8.0}  {:>10.1}  {:>8.1}  {:>10.1}  {:>8.1}",
                c.channel.wire_name(),
                c.target,
                c.predicted_mean,
                c.predicted_std,
                c.empirical_mean,
                c.empirical_std
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Uniform samples in `[0, SAMPLE_UPPER]^3`.
pub fn sample_inputs(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.0..=SAMPLE_UPPER)))
        .collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fits a GP to `samples` CLRGB measurements and inverts it for the
/// target, returning the fitted model alongside the solution.
pub fn fit_and_solve(client: &Client, params: &InverseParams) -> Result<(GpModel, InverseReport), CliError> {
    if params.samples < 10 {
        return Err(CliError::Usage(format!(
            "need at least 10 training samples for the quadratic model, got {}",
            params.samples
        )));
    }
    if params.repeats == 0 {
        return Err(CliError::Usage("need at least one verification measurement".into()));
    }
    if params.target.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(CliError::Usage("target counts must be finite and non-negative".into()));
    }
    let kind = InstrumentKind::ClRgb;
    let inputs = sample_inputs(params.samples, params.seed);
    let mut outputs = Vec::with_capacity(inputs.len());
    for x in &inputs {
        outputs.push(client.measure(kind, RgbSetting::from_array(*x))?);
    }
    let x = DMatrix::from_fn(inputs.len(), 3, |i, j| inputs[i][j]);
    let y = DMatrix::from_fn(outputs.len(), 3, |i, j| f64::from(outputs[i][j]));
    let model = GpModel::fit(&x, &y, &GpFitOptions::default()).map_err(|e| CliError::Runtime(e.to_string()))?;
    let sol = inverse_design(&model, &params.target, DEFAULT_START, &NelderMeadOptions::default())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let prediction = model.predict(&sol.setting.as_array());

    let mut repeats = Vec::with_capacity(params.repeats);
    for _ in 0..params.repeats {
        repeats.push(client.measure(kind, sol.setting)?);
    }
    let channels = kind
        .channels()
        .iter()
        .enumerate()
        .map(|(j, &channel)| {
            let values: Vec<f64> = repeats.iter().map(|r| f64::from(r[j])).collect();
            let (empirical_mean, empirical_std) = mean_std(&values);
            ChannelSummary {
                channel,
                target: params.target[j],
                predicted_mean: prediction.mean[j],
                predicted_std: prediction.std[j],
                empirical_mean,
                empirical_std,
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if sol.at_boundary {
        warnings.push("solution is on the edge of the input range; the target may be out of reach".to_string());
    }
    if !sol.converged {
        warnings.push(format!(
            "optimizer did not converge after {} iterations; showing the best point found",
            sol.iterations
        ));
    }
    let report = InverseReport {
        seed: params.seed,
        samples: params.samples,
        hyperparams: model.hyperparams(),
        solution: sol.setting,
        unclamped: sol.unclamped,
        converged: sol.converged,
        at_boundary: sol.at_boundary,
        channels,
        repeats,
        warnings,
    };
    Ok((model, report))
}

pub fn run(client: &Client, params: &InverseParams) -> Result<InverseReport, CliError> {
    fit_and_solve(client, params).map(|(_, report)| report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_seeded_and_bounded() {
        let a = sample_inputs(20, 42);
        assert_eq!(a, sample_inputs(20, 42));
        assert_ne!(a, sample_inputs(20, 43));
        assert!(a.iter().flatten().all(|v| (0.0..=SAMPLE_UPPER).contains(v)));
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.2909944487358056).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }
}

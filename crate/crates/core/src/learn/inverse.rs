use serde::Serialize;

use super::gp::GpModel;
use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use super::LearnError;
use crate::sim::RgbSetting;

pub const DEFAULT_START: [f64; 3] = [0.3, 0.3, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseSolution {
    /// Optimum clamped into the unit cube.
    pub setting: RgbSetting,
    /// Optimum before clamping.
    pub unclamped: [f64; 3],
    /// Squared error of the model prediction at `setting`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub at_boundary: bool,
}

fn squared_error(model: &GpModel, x: &[f64], target: &[f64]) -> f64 {
    model
        .predict_mean(x)
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum()
}

/// Finds an RGB setting whose predicted outputs match `target`, using an
/// unconstrained simplex search and clamping the result into `[0, 1]^3`.
pub fn inverse_design(
    model: &GpModel,
    target: &[f64],
    x0: [f64; 3],
    options: &NelderMeadOptions,
) -> Result<InverseSolution, LearnError> {
    if model.input_dim() != 3 {
        return Err(LearnError::Argument(format!(
            "inverse design needs a 3-input model, this one has {}",
            model.input_dim()
        )));
    }
    if target.len() != model.output_dim() {
        return Err(LearnError::Argument(format!(
            "target has {} values but the model predicts {}",
            target.len(),
            model.output_dim()
        )));
    }
    if target.iter().any(|t| !t.is_finite()) {
        return Err(LearnError::Argument("target must be finite".into()));
    }
    let m = nelder_mead(|x| squared_error(model, x, target), &x0, options)?;
    let unclamped = [m.x[0], m.x[1], m.x[2]];
    let setting = RgbSetting::new(unclamped[0], unclamped[1], unclamped[2]);
    let clamped = setting.as_array();
    let at_boundary = clamped.iter().any(|&v| v == 0.0 || v == 1.0);
    Ok(InverseSolution {
        setting,
        unclamped,
        objective: squared_error(model, &clamped, target),
        iterations: m.iterations,
        converged: m.converged,
        at_boundary,
    })
}

//! Gaussian-process regression with a dot-product plus white-noise kernel
//! over polynomial features.
//!
//! With features `phi(x)` the covariance is
//! `k(x, x') = phi(x) . phi(x') + sigma0_sq + noise * [x == x']`,
//! so the posterior mean is ridge regression in feature space. Outputs are
//! normalized per column; the two kernel hyperparameters are shared.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::FeaturePipeline;
use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use super::LearnError;

pub const MODEL_SCHEMA: &str = "helios-gp/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Inhomogeneity of the dot-product kernel.
    pub sigma0_sq: f64,
    /// White-noise level, in normalized output units.
    pub noise: f64,
}

impl Hyperparams {
    fn from_log(theta: &[f64]) -> Self {
        Hyperparams {
            sigma0_sq: theta[0].exp(),
            noise: theta[1].exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpFitOptions {
    /// Starting points as `(ln sigma0_sq, ln noise)`.
    pub starts: Vec<(f64, f64)>,
    pub log_sigma0_bounds: (f64, f64),
    pub log_noise_bounds: (f64, f64),
    pub optimizer: NelderMeadOptions,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions {
            starts: vec![(-2.0, -4.0), (0.0, -1.0), (2.0, 1.0)],
            log_sigma0_bounds: (1e-5f64.ln(), 1e5f64.ln()),
            log_noise_bounds: (1e-10f64.ln(), 1e5f64.ln()),
            optimizer: NelderMeadOptions::default(),
        }
    }
}

/// Kernel matrix `Phi Phi^T + sigma0_sq 11^T + noise I`.
pub fn kernel_matrix(phi: &DMatrix<f64>, hp: Hyperparams) -> DMatrix<f64> {
    let n = phi.nrows();
    let mut k = phi * phi.transpose();
    k.add_scalar_mut(hp.sigma0_sq);
    for i in 0..n {
        k[(i, i)] += hp.noise;
    }
    k
}

/// Summed log marginal likelihood over the columns of `y`, or `None` when
/// the kernel matrix is not positive definite.
pub fn log_marginal_likelihood(phi: &DMatrix<f64>, y: &DMatrix<f64>, hp: Hyperparams) -> Option<f64> {
    let chol = kernel_matrix(phi, hp).cholesky()?;
    let n = phi.nrows() as f64;
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let alpha = chol.solve(y);
    let fit: f64 = y.component_mul(&alpha).sum();
    let k = y.ncols() as f64;
    let lml = -0.5 * fit - k * log_det_half - k * 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    lml.is_finite().then_some(lml)
}

/// Analytic gradient of [`log_marginal_likelihood`] with respect to
/// `(ln sigma0_sq, ln noise)`.
pub fn log_marginal_likelihood_gradient(
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    hp: Hyperparams,
) -> Option<[f64; 2]> {
    let chol = kernel_matrix(phi, hp).cholesky()?;
    let k_inv = chol.inverse();
    let alpha = chol.solve(y);
    let mut grad = [0.0; 2];
    for col in alpha.column_iter() {
        // 0.5 tr((a a^T - K^-1) dK) with dK = sigma0_sq 11^T and noise I
        let sum_alpha = col.sum();
        grad[0] += 0.5 * hp.sigma0_sq * (sum_alpha * sum_alpha - k_inv.sum());
        grad[1] += 0.5 * hp.noise * (col.norm_squared() - k_inv.trace());
    }
    Some(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A fitted, immutable GP regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    pipeline: FeaturePipeline,
    hyperparams: Hyperparams,
    features: DMatrix<f64>,
    y_mean: Vec<f64>,
    y_std: Vec<f64>,
    /// Lower Cholesky factor of the kernel matrix.
    factor: DMatrix<f64>,
    /// `K^-1 y_normalized`, one column per output.
    weights: DMatrix<f64>,
}

fn normalize_columns(y: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = y.nrows() as f64;
    let mut means = Vec::with_capacity(y.ncols());
    let mut stds = Vec::with_capacity(y.ncols());
    let mut out = y.clone();
    for (j, col) in y.column_iter().enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..y.nrows() {
            out[(i, j)] = (y[(i, j)] - mean) / std;
        }
        means.push(mean);
        stds.push(std);
    }
    (out, means, stds)
}

fn check_shapes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(), LearnError> {
    if x.nrows() != y.nrows() {
        return Err(LearnError::Argument(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
        return Err(LearnError::Argument("empty training data".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(LearnError::Argument("training data must be finite".into()));
    }
    Ok(())
}

impl GpModel {
    /// Fits with hyperparameters chosen by maximizing the log marginal
    /// likelihood, Nelder-Mead over log-parameters from each start.
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, options: &GpFitOptions) -> Result<Self, LearnError> {
        check_shapes(x, y)?;
        let pipeline = FeaturePipeline::fit(x)?;
        if x.nrows() < pipeline.feature_dim() {
            return Err(LearnError::Argument(format!(
                "need at least {} rows to fit {} inputs, got {}",
                pipeline.feature_dim(),
                x.ncols(),
                x.nrows()
            )));
        }
        let phi = pipeline.transform(x);
        let (y_norm, _, _) = normalize_columns(y);

        let (lo0, hi0) = options.log_sigma0_bounds;
        let (lo1, hi1) = options.log_noise_bounds;
        let clamp = |theta: &[f64]| [theta[0].clamp(lo0, hi0), theta[1].clamp(lo1, hi1)];
        let objective = |theta: &[f64]| {
            let t = clamp(theta);
            log_marginal_likelihood(&phi, &y_norm, Hyperparams::from_log(&t))
                .map(|v| -v)
                .unwrap_or(f64::INFINITY)
        };

        let mut best: Option<(f64, [f64; 2])> = None;
        for &(s, n) in &options.starts {
            let m = nelder_mead(objective, &[s, n], &options.optimizer)?;
            if m.f.is_finite() && best.is_none_or(|(f, _)| m.f < f) {
                best = Some((m.f, clamp(&m.x)));
            }
        }
        let (_, theta) = best.ok_or_else(|| {
            LearnError::Fit(
                "kernel matrix was not positive definite from any starting point; \
                 inputs are too ill-conditioned"
                    .into(),
            )
        })?;
        Self::fit_with(x, y, Hyperparams::from_log(&theta))
    }

    /// Fits with fixed hyperparameters.
    pub fn fit_with(x: &DMatrix<f64>, y: &DMatrix<f64>, hyperparams: Hyperparams) -> Result<Self, LearnError> {
        check_shapes(x, y)?;
        let pipeline = FeaturePipeline::fit(x)?;
        let features = pipeline.transform(x);
        let (y_norm, y_mean, y_std) = normalize_columns(y);
        Self::assemble(pipeline, hyperparams, features, y_mean, y_std, &y_norm)
    }

    fn assemble(
        pipeline: FeaturePipeline,
        hyperparams: Hyperparams,
        features: DMatrix<f64>,
        y_mean: Vec<f64>,
        y_std: Vec<f64>,
        y_norm: &DMatrix<f64>,
    ) -> Result<Self, LearnError> {
        let chol = kernel_matrix(&features, hyperparams).cholesky().ok_or_else(|| {
            LearnError::Fit(format!(
                "kernel matrix is not positive definite (sigma0_sq = {:e}, noise = {:e})",
                hyperparams.sigma0_sq, hyperparams.noise
            ))
        })?;
        let weights = chol.solve(y_norm);
        Ok(GpModel {
            pipeline,
            hyperparams,
            features,
            y_mean,
            y_std,
            factor: chol.unpack(),
            weights,
        })
    }

    pub fn hyperparams(&self) -> Hyperparams {
        self.hyperparams
    }

    pub fn pipeline(&self) -> &FeaturePipeline {
        &self.pipeline
    }

    pub fn output_dim(&self) -> usize {
        self.y_mean.len()
    }

    pub fn input_dim(&self) -> usize {
        self.pipeline.input_dim()
    }

    pub fn output_scale(&self) -> &[f64] {
        &self.y_std
    }

    fn cross_covariance(&self, phi: &DVector<f64>) -> DVector<f64> {
        let mut k = &self.features * phi;
        k.add_scalar_mut(self.hyperparams.sigma0_sq);
        k
    }

    /// Posterior mean only.
    pub fn predict_mean(&self, x: &[f64]) -> Vec<f64> {
        let k = self.cross_covariance(&self.pipeline.features(x));
        (0..self.output_dim())
            .map(|j| k.dot(&self.weights.column(j)) * self.y_std[j] + self.y_mean[j])
            .collect()
    }

    /// Posterior mean and standard deviation. The standard deviation
    /// includes the white-noise term.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let phi = self.pipeline.features(x);
        let k = self.cross_covariance(&phi);
        let prior = phi.norm_squared() + self.hyperparams.sigma0_sq + self.hyperparams.noise;
        let explained = self
            .factor
            .solve_lower_triangular(&k)
            .map(|v| v.norm_squared())
            .unwrap_or(0.0);
        let sd_norm = (prior - explained).max(0.0).sqrt();
        let mean = (0..self.output_dim())
            .map(|j| k.dot(&self.weights.column(j)) * self.y_std[j] + self.y_mean[j])
            .collect();
        let std = self.y_std.iter().map(|s| sd_norm * s).collect();
        Prediction { mean, std }
    }

    /// Predicted means, one row per input row.
    pub fn predict_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), self.output_dim());
        for (i, row) in x.row_iter().enumerate() {
            let r: Vec<f64> = row.iter().copied().collect();
            for (j, v) in self.predict_mean(&r).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Log marginal likelihood of the training data at the fitted
    /// hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let y_norm = self.normalized_targets();
        log_marginal_likelihood(&self.features, &y_norm, self.hyperparams).unwrap_or(f64::NEG_INFINITY)
    }

    fn normalized_targets(&self) -> DMatrix<f64> {
        // K alpha = y_normalized
        let l = &self.factor;
        l * (l.transpose() * &self.weights)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SavedModel::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let saved: SavedModel = serde_json::from_str(text).map_err(|e| LearnError::Format(e.to_string()))?;
        saved.into_model()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    schema: String,
    pipeline: FeaturePipeline,
    hyperparams: Hyperparams,
    y_mean: Vec<f64>,
    y_std: Vec<f64>,
    /// Training features, row-major.
    features: Vec<Vec<f64>>,
    /// Per-output weight vectors, one row per training point.
    weights: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, LearnError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(LearnError::Format(format!("{field} rows have unequal lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl From<&GpModel> for SavedModel {
    fn from(m: &GpModel) -> Self {
        SavedModel {
            schema: MODEL_SCHEMA.to_string(),
            pipeline: m.pipeline.clone(),
            hyperparams: m.hyperparams,
            y_mean: m.y_mean.clone(),
            y_std: m.y_std.clone(),
            features: rows_of(&m.features),
            weights: rows_of(&m.weights),
        }
    }
}

impl SavedModel {
    fn into_model(self) -> Result<GpModel, LearnError> {
        if self.schema != MODEL_SCHEMA {
            return Err(LearnError::Format(format!(
                "unsupported model schema `{}` (expected `{MODEL_SCHEMA}`)",
                self.schema
            )));
        }
        let features = matrix_from_rows(&self.features, "features")?;
        let weights = matrix_from_rows(&self.weights, "weights")?;
        if features.ncols() != self.pipeline.feature_dim()
            || weights.nrows() != features.nrows()
            || weights.ncols() != self.y_mean.len()
            || self.y_std.len() != self.y_mean.len()
        {
            return Err(LearnError::Format("inconsistent model dimensions".into()));
        }
        let chol = kernel_matrix(&features, self.hyperparams)
            .cholesky()
            .ok_or_else(|| LearnError::Format("stored kernel is not positive definite".into()))?;
        Ok(GpModel {
            pipeline: self.pipeline,
            hyperparams: self.hyperparams,
            features,
            y_mean: self.y_mean,
            y_std: self.y_std,
            factor: chol.unpack(),
            weights,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, 3, |_, _| rng.random_range(0.0..1.0))
    }

    fn linear_targets(x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), 2, |i, j| {
            let r = x.row(i);
            if j == 0 {
                3.0 + 40.0 * r[0] - 7.0 * r[1] + 2.0 * r[2]
            } else {
                -1.0 + 0.5 * r[0] + 9.0 * r[2]
            }
        })
    }

    #[test]
    fn interpolates_training_points_without_noise() {
        // Fewer points than features keeps the kernel matrix full rank.
        let x = random_inputs(8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-50.0..50.0));
        let m = GpModel::fit_with(&x, &y, Hyperparams { sigma0_sq: 1.0, noise: 1e-12 }).unwrap();
        for i in 0..8 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let p = m.predict(&row);
            for j in 0..2 {
                assert!((p.mean[j] - y[(i, j)]).abs() <= 1e-6 * y[(i, j)].abs().max(1.0));
                assert!(p.std[j] < 1e-3, "{}", p.std[j]);
            }
        }
    }

    #[test]
    fn noise_free_linear_map_is_reproduced() {
        let x = random_inputs(20, 11);
        let y = linear_targets(&x);
        let m = GpModel::fit(&x, &y, &GpFitOptions::default()).unwrap();
        assert!(m.hyperparams().noise <= 1e-6, "{:?}", m.hyperparams());
        let pred = m.predict_rows(&x);
        for i in 0..20 {
            for j in 0..2 {
                let t = y[(i, j)];
                assert!((pred[(i, j)] - t).abs() <= 1e-6 * t.abs().max(1.0), "{} vs {}", pred[(i, j)], t);
            }
        }
    }

    #[test]
    fn constant_targets_predict_constant() {
        let x = random_inputs(12, 5);
        let y = DMatrix::from_element(12, 1, 42.0);
        let m = GpModel::fit(&x, &y, &GpFitOptions::default()).unwrap();
        for q in [[0.1, 0.2, 0.3], [0.9, 0.1, 0.5], [2.0, 2.0, 2.0]] {
            let p = m.predict(&q);
            assert_eq!(p.mean[0], 42.0);
            assert!(p.std[0].is_finite());
        }
        let p = m.predict(&[0.5, 0.5, 0.5]);
        assert!(p.std[0] <= 10.0 * m.hyperparams().noise.sqrt() + 1e-3, "{:?}", p);
    }

    #[test]
    fn std_grows_along_a_ray() {
        let x = random_inputs(16, 8);
        let y = linear_targets(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = y.map(|v| v + rng.random_range(-0.5..0.5));
        let m = GpModel::fit(&x, &noisy, &GpFitOptions::default()).unwrap();
        let mut last = 0.0;
        for t in [2.0, 4.0, 8.0, 16.0, 32.0] {
            let p = m.predict(&[t, 0.7 * t, 0.4 * t]);
            assert!(p.mean.iter().all(|v| v.is_finite()));
            assert!(p.std[0] > last, "std {} not above {}", p.std[0], last);
            last = p.std[0];
        }
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let x = random_inputs(6, 1);
        let y = linear_targets(&x);
        assert!(matches!(
            GpModel::fit(&x, &y, &GpFitOptions::default()),
            Err(LearnError::Argument(_))
        ));
        let bad = DMatrix::zeros(5, 1);
        assert!(GpModel::fit_with(&x, &bad, Hyperparams { sigma0_sq: 1.0, noise: 1.0 }).is_err());
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let x = random_inputs(14, 2);
        let y = linear_targets(&x);
        let m = GpModel::fit_with(&x, &y, Hyperparams { sigma0_sq: 0.5, noise: 0.01 }).unwrap();
        let text = m.to_json();
        assert!(text.contains("\"schema\": \"helios-gp/1\""));
        let back = GpModel::from_json(&text).unwrap();
        let q = [0.3, 0.6, 0.2];
        let (a, b) = (m.predict(&q), back.predict(&q));
        for j in 0..2 {
            assert!((a.mean[j] - b.mean[j]).abs() < 1e-9);
            assert!((a.std[j] - b.std[j]).abs() < 1e-9);
        }
        let wrong = text.replace("helios-gp/1", "helios-gp/2");
        assert!(matches!(GpModel::from_json(&wrong), Err(LearnError::Format(_))));
    }

    #[test]
    fn stored_lml_matches_direct_evaluation() {
        let x = random_inputs(15, 21);
        let y = linear_targets(&x).map(|v| v + 0.1 * v.sin());
        let hp = Hyperparams { sigma0_sq: 0.7, noise: 0.05 };
        let m = GpModel::fit_with(&x, &y, hp).unwrap();
        let (y_norm, _, _) = normalize_columns(&y);
        let direct = log_marginal_likelihood(&m.features, &y_norm, hp).unwrap();
        assert!((direct - m.log_marginal_likelihood()).abs() < 1e-6 * direct.abs());
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LearnError;

/// Standardization followed by a full degree-2 polynomial expansion:
/// `[1, z_1, .., z_d, z_1 z_1, z_1 z_2, .., z_d z_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub poly_degree: u32,
}

impl FeaturePipeline {
    /// Learns per-column mean and population standard deviation. Constant
    /// columns get a unit scale.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self, LearnError> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(LearnError::Argument("cannot fit a pipeline on empty inputs".into()));
        }
        let n = x.nrows() as f64;
        let mut input_mean = Vec::with_capacity(x.ncols());
        let mut input_std = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            input_mean.push(mean);
            input_std.push(if std > 0.0 { std } else { 1.0 });
        }
        Ok(FeaturePipeline {
            input_mean,
            input_std,
            poly_degree: 2,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    /// Number of polynomial features: `1 + d + d (d + 1) / 2`.
    pub fn feature_dim(&self) -> usize {
        let d = self.input_dim();
        1 + d + d * (d + 1) / 2
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn features(&self, x: &[f64]) -> DVector<f64> {
        let z = self.standardize(x);
        let mut out = Vec::with_capacity(self.feature_dim());
        out.push(1.0);
        out.extend_from_slice(&z);
        for i in 0..z.len() {
            for j in i..z.len() {
                out.push(z[i] * z[j]);
            }
        }
        DVector::from_vec(out)
    }

    /// Feature matrix, one row per input row.
    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.feature_dim();
        let mut phi = DMatrix::zeros(x.nrows(), m);
        for (i, row) in x.row_iter().enumerate() {
            let r: Vec<f64> = row.iter().copied().collect();
            phi.set_row(i, &self.features(&r).transpose());
        }
        phi
    }
}

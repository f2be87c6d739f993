use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LearnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x_train: DMatrix<f64>,
    pub x_test: DMatrix<f64>,
    pub y_train: DMatrix<f64>,
    pub y_test: DMatrix<f64>,
    /// Original row indices of the test partition, in output order.
    pub test_rows: Vec<usize>,
}

fn take_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Seeded shuffle split. The test side gets `round(n * test_fraction)` rows,
/// kept between 1 and `n - 1`.
pub fn train_test_split(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    test_fraction: f64,
    seed: u64,
) -> Result<Split, LearnError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(LearnError::Argument(format!(
            "test fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let n = x.nrows();
    if n != y.nrows() {
        return Err(LearnError::Argument(format!("X has {n} rows but Y has {}", y.nrows())));
    }
    if n < 2 {
        return Err(LearnError::Argument("need at least 2 rows to split".into()));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = order.split_at(n_test);
    Ok(Split {
        x_train: take_rows(x, train),
        x_test: take_rows(x, test),
        y_train: take_rows(y, train),
        y_test: take_rows(y, test),
        test_rows: test.to_vec(),
    })
}

/// Coefficient of determination, averaged uniformly over outputs.
pub fn r2_score(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<f64, LearnError> {
    if y_true.shape() != y_pred.shape() {
        return Err(LearnError::Argument(format!(
            "shape mismatch: {:?} vs {:?}",
            y_true.shape(),
            y_pred.shape()
        )));
    }
    let n = y_true.nrows();
    if n < 2 || y_true.ncols() == 0 {
        return Err(LearnError::Argument("R^2 needs at least 2 rows".into()));
    }
    let mut total = 0.0;
    for j in 0..y_true.ncols() {
        let t = y_true.column(j);
        let mean = t.sum() / n as f64;
        let ss_tot: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
        if ss_tot == 0.0 {
            return Err(LearnError::Score(format!("output {j} has zero variance")));
        }
        let ss_res: f64 = t.iter().zip(y_pred.column(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
        total += 1.0 - ss_res / ss_tot;
    }
    Ok(total / y_true.ncols() as f64)
}

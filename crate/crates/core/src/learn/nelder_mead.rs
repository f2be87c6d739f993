//! Derivative-free Nelder-Mead simplex minimization.
//!
//! Follows the classic reflect / expand / contract / shrink scheme with
//! an initial simplex built like SciPy's: each coordinate is perturbed by
//! `init_step` times its value, or by 0.00025 when the value is zero.

use super::LearnError;

/// Perturbation used for zero coordinates of the starting point.
const ZERO_COORD_STEP: f64 = 0.00025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub init_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_iter: usize,
    /// Keep the best objective value after every iteration.
    pub record_trace: bool,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            init_step: 0.05,
            f_tol: 1e-8,
            x_tol: 1e-8,
            max_iter: 2000,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexCoefficients {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for SimplexCoefficients {
    fn default() -> Self {
        SimplexCoefficients {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

/// `n + 1` vertices kept sorted by objective value, best first.
#[derive(Debug, Clone)]
pub struct SimplexState {
    pub vertices: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub coefficients: SimplexCoefficients,
}

impl SimplexState {
    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.vertices = order.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = order.iter().map(|&i| self.values[i]).collect();
    }

    fn x_spread(&self) -> f64 {
        let best = &self.vertices[0];
        self.vertices[1..]
            .iter()
            .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    fn f_spread(&self) -> f64 {
        let best = self.values[0];
        self.values[1..]
            .iter()
            .map(|v| (v - best).abs())
            .fold(0.0, f64::max)
    }

    fn centroid(&self) -> Vec<f64> {
        let n = self.vertices.len() - 1;
        let mut c = vec![0.0; self.vertices[0].len()];
        for v in &self.vertices[..n] {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi;
            }
        }
        c.iter_mut().for_each(|ci| *ci /= n as f64);
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration, when requested.
    pub trace: Vec<f64>,
}

/// `base + t * (point - base)`
fn along(base: &[f64], point: &[f64], t: f64) -> Vec<f64> {
    base.iter().zip(point).map(|(b, p)| b + t * (p - b)).collect()
}

/// Minimizes `objective` from `x0`. Hitting `max_iter` is not an error:
/// the best vertex is returned with `converged = false`.
pub fn nelder_mead<F>(
    mut objective: F,
    x0: &[f64],
    options: &NelderMeadOptions,
) -> Result<Minimum, LearnError>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Err(LearnError::Argument("starting point must have at least one coordinate".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(LearnError::Argument("starting point must be finite".into()));
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut vertices = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if v[i] != 0.0 {
            v[i] * (1.0 + options.init_step)
        } else {
            ZERO_COORD_STEP
        };
        vertices.push(v);
    }
    let values = vertices.iter().map(|v| eval(v)).collect();
    let mut state = SimplexState {
        vertices,
        values,
        iterations: 0,
        coefficients: SimplexCoefficients::default(),
    };
    state.sort();

    let SimplexCoefficients {
        reflection,
        expansion,
        contraction,
        shrink,
    } = state.coefficients;
    let mut trace = Vec::new();
    let mut converged = false;

    while state.iterations < options.max_iter {
        if state.x_spread() <= options.x_tol && state.f_spread() <= options.f_tol {
            converged = true;
            break;
        }
        let worst = state.vertices[n].clone();
        let f_worst = state.values[n];
        let centroid = state.centroid();

        let xr = along(&centroid, &worst, -reflection);
        let fr = eval(&xr);

        let mut do_shrink = false;
        if fr < state.values[0] {
            let xe = along(&centroid, &worst, -reflection * expansion);
            let fe = eval(&xe);
            if fe < fr {
                state.vertices[n] = xe;
                state.values[n] = fe;
            } else {
                state.vertices[n] = xr;
                state.values[n] = fr;
            }
        } else if fr < state.values[n - 1] {
            state.vertices[n] = xr;
            state.values[n] = fr;
        } else if fr < f_worst {
            let xc = along(&centroid, &worst, -reflection * contraction);
            let fc = eval(&xc);
            if fc <= fr {
                state.vertices[n] = xc;
                state.values[n] = fc;
            } else {
                do_shrink = true;
            }
        } else {
            let xcc = along(&centroid, &worst, contraction);
            let fcc = eval(&xcc);
            if fcc < f_worst {
                state.vertices[n] = xcc;
                state.values[n] = fcc;
            } else {
                do_shrink = true;
            }
        }

        if do_shrink {
            let best = state.vertices[0].clone();
            for i in 1..=n {
                state.vertices[i] = along(&best, &state.vertices[i], shrink);
                state.values[i] = eval(&state.vertices[i]);
            }
        }

        state.sort();
        state.iterations += 1;
        if options.record_trace {
            trace.push(state.values[0]);
        }
    }
    if !converged && state.x_spread() <= options.x_tol && state.f_spread() <= options.f_tol {
        converged = true;
    }

    Ok(Minimum {
        x: state.vertices[0].clone(),
        f: state.values[0],
        iterations: state.iterations,
        evaluations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_parabola() {
        let m = nelder_mead(|x| (x[0] - 2.0).powi(2), &[0.0], &Default::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 2.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], &Default::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn quadratic_matches_normal_equations() {
        let a = DMatrix::from_row_slice(4, 3, &[
            2.0, 0.5, 0.0, //
            0.3, 1.5, 0.2, //
            0.0, 0.4, 1.8, //
            0.7, 0.0, 0.6,
        ]);
        let b = DVector::from_vec(vec![1.0, -0.5, 2.0, 0.3]);
        let ata = a.transpose() * &a;
        let exact = ata.cholesky().unwrap().solve(&(a.transpose() * &b));
        let f = |x: &[f64]| {
            let r = &a * DVector::from_column_slice(x) - &b;
            r.norm_squared()
        };
        let m = nelder_mead(f, &[0.0, 0.0, 0.0], &Default::default()).unwrap();
        for i in 0..3 {
            assert!((m.x[i] - exact[i]).abs() < 1e-5, "{:?} vs {}", m.x, exact);
        }
    }

    #[test]
    fn max_iter_reports_not_converged() {
        let opts = NelderMeadOptions {
            max_iter: 3,
            ..Default::default()
        };
        let m = nelder_mead(|x| (x[0] - 50.0).powi(2) + x[1].powi(2), &[1.0, 1.0], &opts).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }

    #[test]
    fn empty_start_is_rejected() {
        assert!(nelder_mead(|_| 0.0, &[], &Default::default()).is_err());
        assert!(nelder_mead(|_| 0.0, &[f64::NAN], &Default::default()).is_err());
    }

    #[test]
    fn nan_objective_is_treated_as_worst() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let m = nelder_mead(f, &[0.5], &Default::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn best_value_never_increases(
            center in prop::collection::vec(-3.0f64..3.0, 2..5),
            start in prop::collection::vec(-3.0f64..3.0, 5),
        ) {
            let n = center.len();
            let x0 = &start[..n];
            let f = |x: &[f64]| {
                x.iter().zip(&center).enumerate()
                    .map(|(i, (a, c))| (i as f64 + 1.0) * (a - c).powi(2) + 0.1 * (a * c).sin())
                    .sum::<f64>()
            };
            let opts = NelderMeadOptions { record_trace: true, ..Default::default() };
            let m = nelder_mead(f, x0, &opts).unwrap();
            for w in m.trace.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            prop_assert!(m.f <= f(x0));
        }
    }
}

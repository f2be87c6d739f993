//! Classical experiment designs: evenly spaced sweeps with a least-squares
//! line, and the 3-factor, 3-level Latin square with its ANOVA.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};

/// Critical F value for (2, 2) degrees of freedom at alpha = 0.05.
pub const DEFAULT_F_CRITICAL: f64 = 19.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DoeError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("singular fit: all x values are equal")]
    SingularFit,
}

/// `n` evenly spaced values from `lo` to `hi`, both endpoints exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, DoeError> {
    if n < 2 {
        return Err(DoeError::Argument(format!("linspace needs n >= 2, got {n}")));
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    out[n - 1] = hi;
    Ok(out)
}

/// Ordinary least-squares line `y = slope * x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64), DoeError> {
    if x.len() != y.len() {
        return Err(DoeError::Argument(format!(
            "x has {} points but y has {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(DoeError::Argument("need at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(DoeError::SingularFit);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// A one-factor sweep and the line fitted through its unsaturated points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Indices left out of the fit because they reached the saturation level.
    pub excluded: Vec<usize>,
}

impl SweepResult {
    /// Fits the sweep, dropping points at or above `saturation` when given.
    pub fn fit(x: Vec<f64>, y: Vec<f64>, saturation: Option<f64>) -> Result<Self, DoeError> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(DoeError::Argument(format!(
                "sweep needs matching x/y of length >= 2, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        let excluded: Vec<usize> = match saturation {
            Some(level) => (0..y.len()).filter(|&i| y[i] >= level).collect(),
            None => Vec::new(),
        };
        let (fx, fy): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(&y)
            .enumerate()
            .filter(|(i, _)| !excluded.contains(i))
            .map(|(_, (a, b))| (*a, *b))
            .unzip();
        let (slope, intercept) = fit_line(&fx, &fy)?;
        Ok(SweepResult {
            x,
            y,
            slope,
            intercept,
            excluded,
        })
    }

    pub fn fitted(&self) -> Vec<f64> {
        self.x.iter().map(|v| self.slope * v + self.intercept).collect()
    }
}

/// Three factors at three levels each, nine runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatinSquareDesign {
    pub factors: [String; 3],
    pub levels: [[f64; 3]; 3],
    /// Level index per factor for each run.
    pub runs: Vec<[usize; 3]>,
}

impl LatinSquareDesign {
    /// Factor values (not level indices) of every run.
    pub fn settings(&self) -> Vec<[f64; 3]> {
        self.runs
            .iter()
            .map(|run| {
                [
                    self.levels[0][run[0]],
                    self.levels[1][run[1]],
                    self.levels[2][run[2]],
                ]
            })
            .collect()
    }

    /// Checks run count, level replication and pairwise balance.
    pub fn is_balanced(&self) -> bool {
        if self.runs.len() != 9 {
            return false;
        }
        for f in 0..3 {
            for level in 0..3 {
                if self.runs.iter().filter(|r| r[f] == level).count() != 3 {
                    return false;
                }
            }
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            for la in 0..3 {
                for lb in 0..3 {
                    let hits = self.runs.iter().filter(|r| r[a] == la && r[b] == lb).count();
                    if hits != 1 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn check_levels(factors: &[(&str, [f64; 3])]) -> Result<(), DoeError> {
    if factors.len() != 3 {
        return Err(DoeError::Argument(format!(
            "a Latin square needs exactly 3 factors, got {}",
            factors.len()
        )));
    }
    for (name, levels) in factors {
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(DoeError::Argument(format!("factor {name} has a non-finite level")));
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if levels[i] == levels[j] {
                    return Err(DoeError::Argument(format!(
                        "factor {name} repeats level {}",
                        levels[i]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Canonical cyclic Latin square: run `(i, j)` uses levels
/// `(i, j, (i + j) mod 3)`.
pub fn latin_square(factors: &[(&str, [f64; 3])]) -> Result<LatinSquareDesign, DoeError> {
    check_levels(factors)?;
    let mut runs = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            runs.push([i, j, (i + j) % 3]);
        }
    }
    Ok(LatinSquareDesign {
        factors: [
            factors[0].0.to_string(),
            factors[1].0.to_string(),
            factors[2].0.to_string(),
        ],
        levels: [factors[0].1, factors[1].1, factors[2].1],
        runs,
    })
}

/// Latin square with the third factor's level labels permuted and the run
/// order shuffled, both driven by `seed`.
pub fn latin_square_randomized(
    factors: &[(&str, [f64; 3])],
    seed: u64,
) -> Result<LatinSquareDesign, DoeError> {
    let mut design = latin_square(factors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut relabel = [0usize, 1, 2];
    relabel.shuffle(&mut rng);
    for run in &mut design.runs {
        run[2] = relabel[run[2]];
    }
    design.runs.shuffle(&mut rng);
    Ok(design)
}

/// The standard R/G/B design over `{0, 0.5, 1.0}`.
pub fn rgb_latin_square() -> LatinSquareDesign {
    let levels = [0.0, 0.5, 1.0];
    latin_square(&[("R", levels), ("G", levels), ("B", levels)]).expect("valid levels")
}

fn serialize_f_score<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub effect: String,
    pub sum_sq: f64,
    pub df: u32,
    pub mean_sq: f64,
    #[serde(serialize_with = "serialize_f_score")]
    pub f_score: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub sum_sq: f64,
    pub df: u32,
    pub mean_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaTable {
    pub response: String,
    pub f_critical: f64,
    pub grand_mean: f64,
    pub total_sum_sq: f64,
    pub effects: Vec<EffectRow>,
    pub residual: ResidualRow,
}

impl AnovaTable {
    pub fn effect(&self, factor: &str) -> Option<&EffectRow> {
        let name = format!("{factor}_effect");
        self.effects.iter().find(|r| r.effect == name)
    }
}

fn format_f(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl fmt::Display for AnovaTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header_f = format!("F-score (fc={:.1})", self.f_critical);
        let mut rows: Vec<(String, String, String)> = self
            .effects
            .iter()
            .map(|r| {
                (
                    r.effect.clone(),
                    format_f(r.f_score),
                    if r.significant { "True" } else { "False" }.to_string(),
                )
            })
            .collect();
        rows.push(("residuals".into(), "1.0".into(), "False".into()));

        let idx_w = self.response.len().max(rows.len().to_string().len());
        let eff_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("effect".len());
        let f_w = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(header_f.len());
        let sig_w = "Significant".len();

        writeln!(
            f,
            "{:<idx_w$}  {:<eff_w$}  {:>f_w$}  {:>sig_w$}",
            self.response, "effect", header_f, "Significant"
        )?;
        for (i, (effect, score, sig)) in rows.iter().enumerate() {
            writeln!(f, "{i:<idx_w$}  {effect:<eff_w$}  {score:>f_w$}  {sig:>sig_w$}")?;
        }
        Ok(())
    }
}

/// Main-effects ANOVA for a 9-run, 3-factor, 3-level Latin square.
///
/// Residual mean squares below `1e-12` of the largest mean square are
/// treated as exactly zero: factors with a non-zero effect then score
/// `+inf` and are significant, factors without one score 0.
pub fn anova_effects(
    design: &LatinSquareDesign,
    response: &[f64],
    response_name: &str,
    f_critical: f64,
) -> Result<AnovaTable, DoeError> {
    if response.len() != design.runs.len() {
        return Err(DoeError::Argument(format!(
            "response has {} values for {} runs",
            response.len(),
            design.runs.len()
        )));
    }
    if design.runs.len() != 9 {
        return Err(DoeError::Argument("design must have 9 runs".into()));
    }
    let n = response.len() as f64;
    let grand = response.iter().sum::<f64>() / n;
    let total: f64 = response.iter().map(|y| (y - grand).powi(2)).sum();

    let factor_ss: Vec<f64> = (0..3)
        .map(|fi| {
            let mut sums = [0.0; 3];
            let mut counts = [0usize; 3];
            for (run, y) in design.runs.iter().zip(response) {
                sums[run[fi]] += y;
                counts[run[fi]] += 1;
            }
            (0..3)
                .map(|l| counts[l] as f64 * (sums[l] / counts[l] as f64 - grand).powi(2))
                .sum()
        })
        .collect();

    let residual_ss = (total - factor_ss.iter().sum::<f64>()).max(0.0);
    let residual_ms = residual_ss / 2.0;
    let factor_ms: Vec<f64> = factor_ss.iter().map(|ss| ss / 2.0).collect();
    let ms_max = factor_ms.iter().copied().fold(residual_ms, f64::max);
    let eps = 1e-12 * ms_max;

    let effects = factor_ss
        .iter()
        .zip(&factor_ms)
        .zip(&design.factors)
        .map(|((&ss, &ms), name)| {
            let f_score = if residual_ms <= eps {
                if ms > eps {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                ms / residual_ms
            };
            EffectRow {
                effect: format!("{name}_effect"),
                sum_sq: ss,
                df: 2,
                mean_sq: ms,
                f_score,
                significant: f_score > f_critical,
            }
        })
        .collect();

    Ok(AnovaTable {
        response: response_name.to_string(),
        f_critical,
        grand_mean: grand,
        total_sum_sq: total,
        effects,
        residual: ResidualRow {
            sum_sq: residual_ss,
            df: 2,
            mean_sq: residual_ms,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linspace_examples() {
        assert_eq!(linspace(0.0, 1.0, 5).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linspace(2.0, 2.0, 3).unwrap(), vec![2.0, 2.0, 2.0]);
        assert_eq!(linspace(0.0, 1.0, 2).unwrap(), vec![0.0, 1.0]);
        assert!(linspace(0.0, 1.0, 1).is_err());
        assert!(linspace(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn fit_line_examples() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let (m, b) = fit_line(&x, &y).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);

        let (m, b) = fit_line(&x, &[7.5; 5]).unwrap();
        assert_eq!((m, b), (0.0, 7.5));

        assert_eq!(fit_line(&[1.0, 1.0], &[0.0, 3.0]), Err(DoeError::SingularFit));
        assert!(fit_line(&[1.0], &[1.0]).is_err());
        assert!(fit_line(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn sweep_excludes_saturated_points() {
        let x = linspace(0.0, 1.0, 5).unwrap();
        let y = vec![10.0, 20.0, 30.0, 40.0, 65_535.0];
        let sweep = SweepResult::fit(x, y, Some(65_535.0)).unwrap();
        assert_eq!(sweep.excluded, vec![4]);
        assert!((sweep.slope - 40.0).abs() < 1e-12);
        assert!((sweep.intercept - 10.0).abs() < 1e-12);
        assert_eq!(sweep.fitted().len(), 5);
    }

    #[test]
    fn canonical_square_is_balanced_and_stable() {
        let d = rgb_latin_square();
        assert_eq!(d.runs.len(), 9);
        assert!(d.is_balanced());
        assert_eq!(d, rgb_latin_square());
        // Each level value appears three times per factor.
        for f in 0..3 {
            let total: f64 = d.settings().iter().map(|s| s[f]).sum();
            assert!((total - 3.0 * 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn randomized_square_is_balanced_and_seeded() {
        let levels = [0.0, 0.5, 1.0];
        let spec = [("R", levels), ("G", levels), ("B", levels)];
        let a = latin_square_randomized(&spec, 7).unwrap();
        assert!(a.is_balanced());
        assert_eq!(a, latin_square_randomized(&spec, 7).unwrap());
    }

    #[test]
    fn latin_square_argument_errors() {
        let levels = [0.0, 0.5, 1.0];
        assert!(latin_square(&[("R", levels), ("G", levels)]).is_err());
        assert!(latin_square(&[("R", [0.0, 0.0, 1.0]), ("G", levels), ("B", levels)]).is_err());
    }

    #[test]
    fn constant_response_has_no_effects() {
        let d = rgb_latin_square();
        let t = anova_effects(&d, &[5.0; 9], "y", DEFAULT_F_CRITICAL).unwrap();
        for row in &t.effects {
            assert_eq!(row.sum_sq, 0.0);
            assert_eq!(row.f_score, 0.0);
            assert!(!row.significant);
        }
        assert_eq!(t.residual.sum_sq, 0.0);
    }

    #[test]
    fn pure_r_response_is_infinitely_significant() {
        let d = rgb_latin_square();
        let y: Vec<f64> = d.settings().iter().map(|s| 1000.0 * s[0] + 7.0).collect();
        let t = anova_effects(&d, &y, "y", DEFAULT_F_CRITICAL).unwrap();
        let r = t.effect("R").unwrap();
        assert!(r.f_score.is_infinite() && r.significant);
        // 3 * 1000^2 * (0.25 + 0 + 0.25)
        assert!((r.sum_sq - 1.5e6).abs() < 1e-6);
        assert_eq!(t.effect("G").unwrap().f_score, 0.0);
        assert_eq!(t.effect("B").unwrap().f_score, 0.0);
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"f_score\":\"inf\""));
    }

    #[test]
    fn misaligned_response_is_rejected() {
        assert!(anova_effects(&rgb_latin_square(), &[1.0; 8], "y", 19.0).is_err());
    }

    #[test]
    fn display_mirrors_pandas_layout() {
        let d = rgb_latin_square();
        let y = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0];
        let t = anova_effects(&d, &y, "Ro", DEFAULT_F_CRITICAL).unwrap();
        let text = t.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("Ro  effect"));
        assert!(lines[0].contains("F-score (fc=19.0)"));
        assert!(lines[0].ends_with("Significant"));
        assert!(lines[1].starts_with("0   R_effect"));
        assert!(lines[4].starts_with("3   residuals"));
        assert!(lines[4].contains("1.0"));
    }

    // Brute-force SS via the full model matrix residual: fit the additive
    // main-effects model by enumerating cell means.
    fn residual_by_projection(design: &LatinSquareDesign, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let grand = y.iter().sum::<f64>() / n;
        let mut fitted = vec![grand; y.len()];
        for f in 0..3 {
            for level in 0..3 {
                let idx: Vec<usize> = (0..9).filter(|&i| design.runs[i][f] == level).collect();
                let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
                for &i in &idx {
                    fitted[i] += m - grand;
                }
            }
        }
        y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum()
    }

    proptest! {
        #[test]
        fn ss_decomposition_holds(y in prop::collection::vec(-1e4f64..1e4, 9)) {
            let d = rgb_latin_square();
            let t = anova_effects(&d, &y, "y", DEFAULT_F_CRITICAL).unwrap();
            let sum: f64 = t.effects.iter().map(|r| r.sum_sq).sum::<f64>() + t.residual.sum_sq;
            let scale = t.total_sum_sq.max(1.0);
            prop_assert!((sum - t.total_sum_sq).abs() <= 1e-9 * scale);
            let brute = residual_by_projection(&d, &y);
            prop_assert!((brute - t.residual.sum_sq).abs() <= 1e-9 * scale);
        }

        #[test]
        fn scaling_leaves_f_unchanged(y in prop::collection::vec(-1e3f64..1e3, 9), k in 0.01f64..100.0) {
            let d = rgb_latin_square();
            let a = anova_effects(&d, &y, "y", DEFAULT_F_CRITICAL).unwrap();
            let scaled: Vec<f64> = y.iter().map(|v| v * k).collect();
            let b = anova_effects(&d, &scaled, "y", DEFAULT_F_CRITICAL).unwrap();
            for (ra, rb) in a.effects.iter().zip(&b.effects) {
                prop_assert!((rb.sum_sq - k * k * ra.sum_sq).abs() <= 1e-8 * (k * k * ra.sum_sq).max(1e-6));
                if ra.f_score.is_finite() && a.residual.mean_sq > 1e-9 {
                    prop_assert!((ra.f_score - rb.f_score).abs() <= 1e-6 * ra.f_score.max(1.0));
                    prop_assert_eq!(ra.significant, rb.significant);
                }
            }
        }

        #[test]
        fn line_residuals_are_orthogonal(
            pts in prop::collection::vec((-100f64..100.0, -1e4f64..1e4), 3..30)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
            let (m, b) = fit_line(&x, &y).unwrap();
            let res: Vec<f64> = x.iter().zip(&y).map(|(a, c)| c - (m * a + b)).collect();
            let scale: f64 = y.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            let xscale: f64 = x.iter().zip(&y).map(|(a, c)| (a * c).abs()).sum::<f64>().max(1.0);
            prop_assert!(res.iter().sum::<f64>().abs() <= 1e-9 * scale);
            prop_assert!(res.iter().zip(&x).map(|(r, a)| r * a).sum::<f64>().abs() <= 1e-9 * xscale);
        }
    }
}

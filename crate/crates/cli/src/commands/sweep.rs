use std::fmt;
use std::path::{Path, PathBuf};

use helios_client::{Client, InstrumentKind};
use helios_core::doe::{linspace, SweepResult};
use helios_core::{Channel, RgbSetting, MAX_COUNT};
use serde::Serialize;

use crate::error::CliError;

/// Largest failed fraction that still allows a fit.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepParams {
    pub instrument: InstrumentKind,
    /// One of R, G, B.
    pub input: String,
    pub channel: Channel,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub x: f64,
    pub y: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Point indices left out as saturated.
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub instrument: InstrumentKind,
    pub input: String,
    pub channel: Channel,
    pub points: Vec<SweepPoint>,
    pub failed: usize,
    pub fit: Option<LineFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot_data: Option<PathBuf>,
}

impl SweepReport {
    pub fn fit_skipped(&self) -> bool {
        self.fit.is_none()
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {} -> {}", self.instrument, self.input, self.channel)?;
        writeln!(f, "{:>8}  {:>8}", self.input, self.channel.wire_name())?;
        for p in &self.points {
            match (p.y, &p.error) {
                (Some(y), _) => writeln!(f, "{:>8.4}  {:>8}", p.x, y)?,
                (None, Some(e)) => writeln!(f, "{:>8.4}  failed: {e}", p.x)?,
                (None, None) => writeln!(f, "{:>8.4}  -", p.x)?,
            }
        }
        match &self.fit {
            Some(fit) => {
                writeln!(f, "slope {:.2}, intercept {:.2}", fit.slope, fit.intercept)?;
                if !fit.excluded.is_empty() {
                    writeln!(f, "saturated points left out of the fit: {:?}", fit.excluded)?;
                }
            }
            None => writeln!(f, "fit skipped: {} of {} points failed", self.failed, self.points.len())?,
        }
        if let Some(path) = &self.plot_data {
            writeln!(f, "plot data written to {}", path.display())?;
        }
        Ok(())
    }
}

pub fn validate(params: &SweepParams) -> Result<usize, CliError> {
    if params.n < 2 {
        return Err(CliError::Usage(format!("a sweep needs at least 2 points, got {}", params.n)));
    }
    let kind = params.instrument;
    let input = ["R", "G", "B"]
        .iter()
        .position(|n| n.eq_ignore_ascii_case(&params.input))
        .ok_or_else(|| CliError::Usage(format!("input must be R, G or B, got `{}`", params.input)))?;
    if !kind.input_names().contains(&["R", "G", "B"][input]) {
        return Err(CliError::Usage(format!(
            "{kind} has no {} input (inputs: {})",
            params.input,
            kind.input_names().join(", ")
        )));
    }
    if !kind.channels().contains(&params.channel) {
        return Err(CliError::Usage(format!("{kind} does not report {}", params.channel)));
    }
    Ok(input)
}

/// Measures `n` evenly spaced levels of one input and fits a line through
/// the unsaturated counts, unless too many points failed.
pub fn run(client: &Client, params: &SweepParams) -> Result<SweepReport, CliError> {
    let input = validate(params)?;
    let kind = params.instrument;
    let column = kind.channels().iter().position(|c| *c == params.channel).expect("validated");
    let xs = linspace(0.0, 1.0, params.n).map_err(|e| CliError::Usage(e.to_string()))?;
    let points: Vec<SweepPoint> = xs
        .iter()
        .map(|&x| {
            let mut levels = [0.0; 3];
            levels[input] = x;
            match client.measure(kind, RgbSetting::from_array(levels)) {
                Ok(counts) => SweepPoint {
                    x,
                    y: Some(counts[column]),
                    error: None,
                },
                Err(e) => SweepPoint {
                    x,
                    y: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let failed = points.iter().filter(|p| p.y.is_none()).count();
    let fit = if failed as f64 > MAX_FAILED_FRACTION * points.len() as f64 {
        None
    } else {
        let (x, y): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter_map(|p| p.y.map(|y| (p.x, f64::from(y))))
            .unzip();
        let r = SweepResult::fit(x, y, Some(f64::from(MAX_COUNT)))
            .map_err(|e| CliError::Runtime(format!("line fit failed: {e}")))?;
        Some(LineFit {
            slope: r.slope,
            intercept: r.intercept,
            excluded: r.excluded,
        })
    };
    Ok(SweepReport {
        instrument: kind,
        input: ["R", "G", "B"][input].to_string(),
        channel: params.channel,
        points,
        failed,
        fit,
        plot_data: None,
    })
}

/// CSV with `x,y,fitted` for every measured point.
pub fn plot_csv(report: &SweepReport) -> Option<String> {
    let fit = report.fit.as_ref()?;
    let mut s = String::from("x,y,fitted\n");
    for p in &report.points {
        if let Some(y) = p.y {
            s.push_str(&format!("{},{},{}\n", p.x, y, fit.slope * p.x + fit.intercept));
        }
    }
    Some(s)
}

pub fn write_plot_data(report: &mut SweepReport, path: &Path) -> Result<(), CliError> {
    if let Some(csv) = plot_csv(report) {
        std::fs::write(path, csv)
            .map_err(|e| CliError::Runtime(format!("cannot write plot data {}: {e}", path.display())))?;
        report.plot_data = Some(path.to_path_buf());
    }
    Ok(())
}

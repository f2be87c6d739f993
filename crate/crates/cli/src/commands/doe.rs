use std::fmt;

use helios_client::{Client, InstrumentKind};
use helios_core::doe::{anova_effects, rgb_latin_square, AnovaTable, LatinSquareDesign};
use helios_core::{Channel, RgbSetting};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoeRun {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub response: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoeReport {
    pub instrument: InstrumentKind,
    pub response: Channel,
    pub runs: Vec<DoeRun>,
    pub anova: AnovaTable,
}

impl fmt::Display for DoeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} Latin square, response {}", self.instrument, self.response)?;
        writeln!(f, "{:>5} {:>5} {:>5}  {:>8}", "R", "G", "B", self.response.wire_name())?;
        for r in &self.runs {
            writeln!(f, "{:>5.2} {:>5.2} {:>5.2}  {:>8}", r.r, r.g, r.b, r.response)?;
        }
        writeln!(f)?;
        write!(f, "{}", self.anova)
    }
}

/// Responses for the nine runs of `design`, measured on CLRGB.
pub fn measure_design(client: &Client, design: &LatinSquareDesign, response: Channel) -> Result<Vec<DoeRun>, CliError> {
    let kind = InstrumentKind::ClRgb;
    let column = kind
        .channels()
        .iter()
        .position(|c| *c == response)
        .ok_or_else(|| CliError::Usage(format!("{kind} does not report {response}")))?;
    design
        .settings()
        .into_iter()
        .enumerate()
        .map(|(i, [r, g, b])| {
            let counts = client
                .measure(kind, RgbSetting::new(r, g, b))
                .map_err(|e| CliError::Runtime(format!("run {} failed: {e}", i + 1)))?;
            Ok(DoeRun {
                r,
                g,
                b,
                response: counts[column],
            })
        })
        .collect()
}

pub fn run(client: &Client, response: Channel, f_critical: f64) -> Result<DoeReport, CliError> {
    let design = rgb_latin_square();
    let runs = measure_design(client, &design, response)?;
    let y: Vec<f64> = runs.iter().map(|r| f64::from(r.response)).collect();
    let anova =
        anova_effects(&design, &y, response.wire_name(), f_critical).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(DoeReport {
        instrument: InstrumentKind::ClRgb,
        response,
        runs,
        anova,
    })
}

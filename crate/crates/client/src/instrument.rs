use std::fmt;
use std::str::FromStr;

use helios_core::{Channel, RgbSetting};
use serde::{Deserialize, Serialize};

/// The four instrument abstractions offered on top of the photometer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstrumentKind {
    GreenMachine1,
    GreenMachine3,
    #[serde(rename = "CLRGB")]
    ClRgb,
    #[serde(rename = "CLLight")]
    ClLight,
}

const GREEN_1: [Channel; 1] = [Channel::W515];
const GREEN_3: [Channel; 3] = [Channel::W480, Channel::W515, Channel::W555];
const RGB_3: [Channel; 3] = [Channel::W630, Channel::W515, Channel::W445];

impl InstrumentKind {
    pub const ALL: [InstrumentKind; 4] = [
        InstrumentKind::GreenMachine1,
        InstrumentKind::GreenMachine3,
        InstrumentKind::ClRgb,
        InstrumentKind::ClLight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstrumentKind::GreenMachine1 => "GreenMachine1",
            InstrumentKind::GreenMachine3 => "GreenMachine3",
            InstrumentKind::ClRgb => "CLRGB",
            InstrumentKind::ClLight => "CLLight",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            InstrumentKind::GreenMachine1 => {
                "GreenMachine1: one input (G, green LED level 0-1) and one output, the intensity at 515nm."
            }
            InstrumentKind::GreenMachine3 => {
                "GreenMachine3: one input (G, green LED level 0-1) and three outputs, the intensities at 480nm, 515nm and 555nm."
            }
            InstrumentKind::ClRgb => {
                "CLRGB: three inputs (R, G, B LED levels 0-1) and three outputs, the intensities at 630nm, 515nm and 445nm."
            }
            InstrumentKind::ClLight => {
                "CLLight: three inputs (R, G, B LED levels 0-1) and 10 outputs, the intensities at 415nm, 445nm, 480nm, 515nm, 555nm, 590nm, 630nm, 680nm, clear and nir."
            }
        }
    }

    /// Output channels, in the order results are returned.
    pub fn channels(self) -> &'static [Channel] {
        match self {
            InstrumentKind::GreenMachine1 => &GREEN_1,
            InstrumentKind::GreenMachine3 => &GREEN_3,
            InstrumentKind::ClRgb => &RGB_3,
            InstrumentKind::ClLight => &Channel::ALL,
        }
    }

    pub fn input_names(self) -> &'static [&'static str] {
        match self {
            InstrumentKind::GreenMachine1 | InstrumentKind::GreenMachine3 => &["G"],
            InstrumentKind::ClRgb | InstrumentKind::ClLight => &["R", "G", "B"],
        }
    }

    /// Drops the inputs this instrument does not expose.
    pub fn restrict(self, setting: RgbSetting) -> RgbSetting {
        match self {
            InstrumentKind::GreenMachine1 | InstrumentKind::GreenMachine3 => {
                RgbSetting::new(0.0, setting.g(), 0.0)
            }
            InstrumentKind::ClRgb | InstrumentKind::ClLight => setting,
        }
    }
}

impl fmt::Display for InstrumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown instrument `{0}` (expected GreenMachine1, GreenMachine3, CLRGB or CLLight)")]
pub struct UnknownInstrument(pub String);

impl FromStr for InstrumentKind {
    type Err = UnknownInstrument;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        InstrumentKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| UnknownInstrument(s.to_string()))
    }
}

/// `(name, description)` for every instrument, in a fixed order.
pub fn instrument_catalog() -> Vec<(&'static str, &'static str)> {
    InstrumentKind::ALL
        .iter()
        .map(|k| (k.name(), k.description()))
        .collect()
}

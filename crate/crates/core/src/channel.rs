//! Spectral channels of the photometer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of spectral channels reported by the photometer.
pub const CHANNEL_COUNT: usize = 10;

/// Largest count the 16-bit photometer can report.
pub const MAX_COUNT: u16 = u16::MAX;

/// One of the ten photometer bands, in canonical order: ascending
/// wavelength, then clear, then near infrared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "415nm")]
    W415,
    #[serde(rename = "445nm")]
    W445,
    #[serde(rename = "480nm")]
    W480,
    #[serde(rename = "515nm")]
    W515,
    #[serde(rename = "555nm")]
    W555,
    #[serde(rename = "590nm")]
    W590,
    #[serde(rename = "630nm")]
    W630,
    #[serde(rename = "680nm")]
    W680,
    #[serde(rename = "clear")]
    Clear,
    #[serde(rename = "nir")]
    Nir,
}

impl Channel {
    pub const ALL: [Channel; CHANNEL_COUNT] = [
        Channel::W415,
        Channel::W445,
        Channel::W480,
        Channel::W515,
        Channel::W555,
        Channel::W590,
        Channel::W630,
        Channel::W680,
        Channel::Clear,
        Channel::Nir,
    ];

    /// Position in the canonical ordering.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Channel> {
        Self::ALL.get(index).copied()
    }

    /// Name used on the wire and in calibration files.
    pub fn wire_name(self) -> &'static str {
        match self {
            Channel::W415 => "415nm",
            Channel::W445 => "445nm",
            Channel::W480 => "480nm",
            Channel::W515 => "515nm",
            Channel::W555 => "555nm",
            Channel::W590 => "590nm",
            Channel::W630 => "630nm",
            Channel::W680 => "680nm",
            Channel::Clear => "clear",
            Channel::Nir => "nir",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown channel `{0}`")]
pub struct UnknownChannel(pub String);

impl FromStr for Channel {
    type Err = UnknownChannel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase();
        Channel::ALL
            .into_iter()
            .find(|c| c.wire_name() == lowered || c.wire_name().trim_end_matches("nm") == lowered)
            .ok_or_else(|| UnknownChannel(s.to_string()))
    }
}

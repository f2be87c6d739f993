//! Blocking client for the photometer HTTP API and the instrument
//! abstractions built on it.

mod client;
mod instrument;

pub use client::{backoff_delay, ApiResponse, Client, ClientConfig, ClientError, Sleeper, BASE_URL_ENV};
pub use instrument::{instrument_catalog, InstrumentKind, UnknownInstrument};

use helios_core::RgbSetting;

/// One-shot measurement with a fresh client.
pub fn measure(kind: InstrumentKind, inputs: RgbSetting, config: &ClientConfig) -> Result<Vec<u16>, ClientError> {
    Client::new(config.clone())?.measure(kind, inputs)
}

//! Instrument model, experiment design and learning for the Helios
//! photometer twin.

pub mod calibration;
pub mod channel;
pub mod doe;
pub mod learn;
pub mod sim;

pub use channel::{Channel, CHANNEL_COUNT, MAX_COUNT};
pub use sim::{default_model, AmbientModel, Counts, Reading, ResponseModel, RgbSetting, Simulator};

//! Noise-aware simulator of the RGB LED and 10-channel photometer.
//!
//! The response is affine in the three LED inputs: every channel reads
//! `gain · [r, g, b] + dark + ambient(t)` before noise, rounding and the
//! 16-bit clamp. [`ResponseModel::expected_counts`] exposes the noise-free
//! value and is the oracle the rest of the workspace tests against.

use std::f64::consts::PI;
use std::fmt;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channel::{Channel, CHANNEL_COUNT, MAX_COUNT};

/// Per-channel real values in canonical channel order.
pub type ChannelVector = [f64; CHANNEL_COUNT];

/// LED drive levels, each a fraction in `[0, 1]`.
///
/// Construction clamps; NaN maps to 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RgbSetting {
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "G")]
    g: f64,
    #[serde(rename = "B")]
    b: f64,
}

fn clamp_fraction(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

impl RgbSetting {
    pub fn new(r: f64, g: f64, b: f64) -> Self {
        RgbSetting {
            r: clamp_fraction(r),
            g: clamp_fraction(g),
            b: clamp_fraction(b),
        }
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

impl<'de> Deserialize<'de> for RgbSetting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(rename = "R", default)]
            r: f64,
            #[serde(rename = "G", default)]
            g: f64,
            #[serde(rename = "B", default)]
            b: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ok(RgbSetting::new(raw.r, raw.g, raw.b))
    }
}

/// Integer counts for all ten channels, serialized as a map keyed by wire
/// name in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Counts(pub [u16; CHANNEL_COUNT]);

impl Counts {
    pub fn get(&self, channel: Channel) -> u16 {
        self.0[channel.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Channel, u16)> + '_ {
        Channel::ALL.into_iter().map(move |c| (c, self.get(c)))
    }
}

impl Serialize for Counts {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(CHANNEL_COUNT))?;
        for (c, v) in self.iter() {
            map.serialize_entry(c.wire_name(), &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Counts {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct CountsVisitor;

        impl<'de> Visitor<'de> for CountsVisitor {
            type Value = Counts;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map with all ten channel counts")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Counts, A::Error> {
                let mut seen = [None; CHANNEL_COUNT];
                while let Some((key, value)) = access.next_entry::<String, u16>()? {
                    let channel: Channel = key.parse().map_err(de::Error::custom)?;
                    seen[channel.index()] = Some(value);
                }
                let mut counts = [0u16; CHANNEL_COUNT];
                for (i, v) in seen.iter().enumerate() {
                    counts[i] = v.ok_or_else(|| {
                        de::Error::custom(format!("missing channel {}", Channel::ALL[i]))
                    })?;
                }
                Ok(Counts(counts))
            }
        }

        deserializer.deserialize_map(CountsVisitor)
    }
}

/// One photometer reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub counts: Counts,
    pub timestamp: DateTime<Utc>,
}

impl Reading {
    pub fn count(&self, channel: Channel) -> u16 {
        self.counts.get(channel)
    }
}

/// Time-varying background light: a half-wave rectified sine on top of a
/// constant floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientModel {
    pub amplitude: ChannelVector,
    pub constant: ChannelVector,
    /// Cycle length in seconds.
    pub period_s: f64,
    /// Phase offset as a fraction of the period.
    pub phase: f64,
}

impl Default for AmbientModel {
    fn default() -> Self {
        AmbientModel {
            amplitude: [0.0; CHANNEL_COUNT],
            constant: [0.0; CHANNEL_COUNT],
            period_s: 86_400.0,
            phase: 0.0,
        }
    }
}

impl AmbientModel {
    /// Daylight cycle: dark from 18:00 to 06:00 UTC, peaking at noon with
    /// enough light to saturate the clear channel.
    pub fn daylight() -> Self {
        AmbientModel {
            amplitude: [
                900.0, 1_500.0, 2_200.0, 3_000.0, 3_600.0, 3_800.0, 4_000.0, 3_500.0, 60_000.0,
                4_500.0,
            ],
            constant: [
                50.0, 80.0, 120.0, 150.0, 170.0, 180.0, 200.0, 170.0, 1_500.0, 250.0,
            ],
            period_s: 86_400.0,
            phase: 0.25,
        }
    }

    /// Fraction of the cycle elapsed at `t`, in `[0, 1)`.
    pub fn cycle_fraction(&self, t: DateTime<Utc>) -> f64 {
        let seconds = t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9;
        seconds.rem_euclid(self.period_s) / self.period_s
    }

    /// Ambient contribution in counts for every channel at `t`. Never
    /// negative for a valid model.
    pub fn counts_at(&self, t: DateTime<Utc>) -> ChannelVector {
        let wave = (2.0 * PI * (self.cycle_fraction(t) - self.phase)).sin().max(0.0);
        let mut out = [0.0; CHANNEL_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.constant[i] + self.amplitude[i] * wave;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{field}[{index}] = {value} must be finite and non-negative")]
    Negative {
        field: &'static str,
        index: usize,
        value: f64,
    },
    #[error("ambient period must be positive and finite, got {0}")]
    Period(f64),
    #[error("ambient phase must be finite, got {0}")]
    Phase(f64),
}

/// Ground truth of the simulated instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    /// Counts per unit input; rows are channels, columns are R, G, B.
    pub gain: [[f64; 3]; CHANNEL_COUNT],
    pub dark: ChannelVector,
    pub ambient: AmbientModel,
    pub noise_std: ChannelVector,
    pub seed: u64,
}

impl ResponseModel {
    /// Builds a model after checking its invariants.
    pub fn new(
        gain: [[f64; 3]; CHANNEL_COUNT],
        dark: ChannelVector,
        ambient: AmbientModel,
        noise_std: ChannelVector,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let model = ResponseModel {
            gain,
            dark,
            ambient,
            noise_std,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        fn check(field: &'static str, values: &[f64]) -> Result<(), ModelError> {
            for (index, &value) in values.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(ModelError::Negative {
                        field,
                        index,
                        value,
                    });
                }
            }
            Ok(())
        }
        let flat_gain: Vec<f64> = self.gain.iter().flatten().copied().collect();
        check("gain", &flat_gain)?;
        check("dark", &self.dark)?;
        check("noise_std", &self.noise_std)?;
        check("ambient.amplitude", &self.ambient.amplitude)?;
        check("ambient.constant", &self.ambient.constant)?;
        if !(self.ambient.period_s.is_finite() && self.ambient.period_s > 0.0) {
            return Err(ModelError::Period(self.ambient.period_s));
        }
        if !self.ambient.phase.is_finite() {
            return Err(ModelError::Phase(self.ambient.phase));
        }
        Ok(())
    }

    /// Copy of this model with every channel's noise set to `std`.
    pub fn with_noise(mut self, std: f64) -> Self {
        self.noise_std = [std; CHANNEL_COUNT];
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ambient(mut self, ambient: AmbientModel) -> Self {
        self.ambient = ambient;
        self
    }

    /// Noise-free, unclamped, unrounded response at `x` and instant `t`.
    pub fn expected_counts(&self, x: RgbSetting, t: DateTime<Utc>) -> ChannelVector {
        let ambient = self.ambient.counts_at(t);
        let input = x.as_array();
        let mut out = [0.0; CHANNEL_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            let drive: f64 = self.gain[i].iter().zip(input).map(|(g, v)| g * v).sum();
            *o = drive + self.dark[i] + ambient[i];
        }
        out
    }

    /// Takes one noisy reading. Draws exactly ten standard normals from
    /// `rng`, one per channel in canonical order.
    pub fn measure<R: Rng + ?Sized>(&self, x: RgbSetting, t: DateTime<Utc>, rng: &mut R) -> Reading {
        let expected = self.expected_counts(x, t);
        let mut counts = [0u16; CHANNEL_COUNT];
        for (i, c) in counts.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *c = quantize(expected[i] + z * self.noise_std[i]);
        }
        Reading {
            counts: Counts(counts),
            timestamp: t,
        }
    }
}

/// Rounds half away from zero, then clamps into the 16-bit range.
pub fn quantize(value: f64) -> u16 {
    if value.is_nan() {
        return 0;
    }
    value.round().clamp(0.0, f64::from(MAX_COUNT)) as u16
}

/// A response model bundled with the random stream that feeds its noise.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: ResponseModel,
    rng: ChaCha8Rng,
    draws: u64,
}

impl Simulator {
    pub fn new(model: ResponseModel) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(model.seed);
        Simulator {
            model,
            rng,
            draws: 0,
        }
    }

    pub fn model(&self) -> &ResponseModel {
        &self.model
    }

    /// Number of readings taken so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn measure(&mut self, x: RgbSetting, t: DateTime<Utc>) -> Reading {
        self.draws += 1;
        self.model.measure(x, t, &mut self.rng)
    }
}

/// Fixed reference calibration, version 1.
///
/// Rows 630/515/445 are fitted to the anchor readings printed for the
/// physical device. 515 nm reproduces the G sweep line
/// (62466.40 counts per unit G, 3110.20 at G = 0) exactly. The
/// remaining channels are uncalibrated smooth interpolations.
pub fn default_model() -> ResponseModel {
    ResponseModel {
        gain: [
            [150.0, 400.0, 9_000.0],     // 415nm (uncalibrated)
            [300.0, 1_290.0, 32_730.0],  // 445nm
            [400.0, 18_000.0, 21_000.0], // 480nm (uncalibrated)
            [5_000.0, 62_466.4, 300.0],  // 515nm
            [8_000.0, 30_000.0, 200.0],  // 555nm (uncalibrated)
            [20_000.0, 6_000.0, 150.0],  // 590nm (uncalibrated)
            [36_400.0, 710.0, 450.0],    // 630nm
            [14_000.0, 300.0, 100.0],    // 680nm (uncalibrated)
            [30_000.0, 40_000.0, 25_000.0], // clear (uncalibrated)
            [3_000.0, 500.0, 300.0],     // nir (uncalibrated)
        ],
        dark: [
            600.0, 1_020.0, 1_500.0, 3_110.2, 3_500.0, 4_200.0, 5_640.0, 3_000.0, 8_000.0, 2_500.0,
        ],
        ambient: AmbientModel::default(),
        noise_std: [70.0; CHANNEL_COUNT],
        seed: 42,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn epoch() -> DateTime<Utc> {
        Utc.timestamp_opt(0, 0).unwrap()
    }

    fn zero_model() -> ResponseModel {
        ResponseModel::new(
            [[0.0; 3]; CHANNEL_COUNT],
            [0.0; CHANNEL_COUNT],
            AmbientModel::default(),
            [0.0; CHANNEL_COUNT],
            1,
        )
        .unwrap()
    }

    #[test]
    fn rgb_setting_clamps() {
        let x = RgbSetting::new(-0.5, 2.0, f64::NAN);
        assert_eq!(x.as_array(), [0.0, 1.0, 0.0]);
        let y = RgbSetting::new(f64::INFINITY, f64::NEG_INFINITY, 0.25);
        assert_eq!(y.as_array(), [1.0, 0.0, 0.25]);
    }

    #[test]
    fn zero_model_reads_zero() {
        let m = zero_model();
        let e = m.expected_counts(RgbSetting::new(0.3, 0.9, 1.0), epoch());
        assert_eq!(e, [0.0; CHANNEL_COUNT]);
    }

    #[test]
    fn default_515_follows_sweep_line() {
        let m = default_model();
        let half = m.expected_counts(RgbSetting::new(0.0, 0.5, 0.0), epoch());
        assert!((half[Channel::W515.index()] - 34_343.4).abs() < 1e-9);
        let full = m.expected_counts(RgbSetting::new(0.0, 1.0, 0.0), epoch());
        assert!((full[Channel::W515.index()] - 65_576.6).abs() < 1e-9);
    }

    #[test]
    fn saturates_at_full_green() {
        let m = default_model().with_noise(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = m.measure(RgbSetting::new(0.0, 1.0, 0.0), epoch(), &mut rng);
        assert_eq!(r.count(Channel::W515), 65_535);
    }

    #[test]
    fn zero_noise_measure_is_rounded_oracle() {
        let m = default_model().with_noise(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = RgbSetting::new(0.12, 0.45, 1.0);
        let e = m.expected_counts(x, epoch());
        let r = m.measure(x, epoch(), &mut rng);
        for c in Channel::ALL {
            assert_eq!(r.count(c), quantize(e[c.index()]));
        }
    }

    #[test]
    fn quantize_rounds_half_away_and_clamps() {
        assert_eq!(quantize(2.5), 3);
        assert_eq!(quantize(-0.4), 0);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(70_000.0), 65_535);
        assert_eq!(quantize(f64::NAN), 0);
    }

    #[test]
    fn ambient_cases() {
        let mut a = AmbientModel::default();
        assert_eq!(a.counts_at(epoch()), [0.0; CHANNEL_COUNT]);
        a.constant = [12.0; CHANNEL_COUNT];
        assert_eq!(a.counts_at(Utc.timestamp_opt(12_345, 0).unwrap()), [12.0; CHANNEL_COUNT]);

        // Peak of the sine: (t/period - phase) = 1/4.
        let peak = AmbientModel {
            amplitude: [500.0; CHANNEL_COUNT],
            constant: [0.0; CHANNEL_COUNT],
            period_s: 1_000.0,
            phase: 0.1,
        };
        let t = Utc.timestamp_opt(350, 0).unwrap();
        for v in peak.counts_at(t) {
            assert!((v - 500.0).abs() < 1e-9);
        }
        // Night half of the cycle is clipped to zero.
        let night = Utc.timestamp_opt(850, 0).unwrap();
        assert_eq!(peak.counts_at(night), [0.0; CHANNEL_COUNT]);
    }

    #[test]
    fn daylight_saturates_clear_at_noon_only() {
        let m = default_model().with_ambient(AmbientModel::daylight());
        let noon = Utc.with_ymd_and_hms(2025, 2, 20, 12, 0, 0).unwrap();
        let midnight = Utc.with_ymd_and_hms(2025, 2, 20, 0, 0, 0).unwrap();
        let dark = RgbSetting::default();
        assert!(m.expected_counts(dark, noon)[Channel::Clear.index()] > 65_535.0);
        assert!(m.expected_counts(dark, midnight)[Channel::Clear.index()] < 65_535.0);
    }

    #[test]
    fn validation_rejects_negative_gain() {
        let mut gain = [[0.0; 3]; CHANNEL_COUNT];
        gain[4][1] = -1.0;
        let err = ResponseModel::new(
            gain,
            [0.0; CHANNEL_COUNT],
            AmbientModel::default(),
            [0.0; CHANNEL_COUNT],
            0,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::Negative { field: "gain", .. }));
        assert!(default_model().validate().is_ok());
    }

    #[test]
    fn counts_serialize_in_canonical_order() {
        let counts = Counts([1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
        let s = serde_json::to_string(&counts).unwrap();
        assert_eq!(
            s,
            r#"{"415nm":1,"445nm":2,"480nm":3,"515nm":4,"555nm":5,"590nm":6,"630nm":7,"680nm":8,"clear":9,"nir":10}"#
        );
        let back: Counts = serde_json::from_str(&s).unwrap();
        assert_eq!(back, counts);
        assert!(serde_json::from_str::<Counts>(r#"{"415nm":1}"#).is_err());
    }

    #[test]
    fn simulator_is_deterministic() {
        let t = epoch();
        let x = RgbSetting::new(0.2, 0.4, 0.6);
        let mut a = Simulator::new(default_model());
        let mut b = Simulator::new(default_model());
        for _ in 0..20 {
            assert_eq!(a.measure(x, t), b.measure(x, t));
        }
        assert_eq!(a.draws(), 20);
    }
}

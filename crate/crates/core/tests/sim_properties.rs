use chrono::{DateTime, TimeZone, Utc};
use helios_core::channel::{Channel, CHANNEL_COUNT};
use helios_core::sim::{AmbientModel, ChannelVector};
use helios_core::{default_model, RgbSetting, Simulator};
use proptest::prelude::*;

fn midnight() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap()
}

fn stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn noise_matches_configured_std() {
    let model = default_model().with_seed(2024);
    let x = RgbSetting::new(0.2, 0.3, 0.25);
    let expected = model.expected_counts(x, midnight());
    let mut sim = Simulator::new(model.clone());
    let mut samples: Vec<Vec<f64>> = (0..CHANNEL_COUNT).map(|_| Vec::with_capacity(10_000)).collect();
    for _ in 0..10_000 {
        let r = sim.measure(x, midnight());
        for ch in Channel::ALL {
            samples[ch.index()].push(f64::from(r.count(ch)));
        }
    }
    for ch in Channel::ALL {
        let (mean, std) = stats(&samples[ch.index()]);
        let sigma = model.noise_std[ch.index()];
        assert!((std - sigma).abs() <= 0.05 * sigma, "{ch}: std {std}");
        assert!((mean - expected[ch.index()]).abs() <= 4.0 * sigma / 100.0 + 0.5, "{ch}: mean {mean}");
    }
}

#[test]
fn ten_repeats_scatter_like_the_noise_level() {
    let mut sim = Simulator::new(default_model());
    let x = RgbSetting::new(0.12626935, 0.1015257, 0.27444814);
    for ch in [Channel::W630, Channel::W515, Channel::W445] {
        let values: Vec<f64> = (0..10).map(|_| f64::from(sim.measure(x, midnight()).count(ch))).collect();
        let (_, std) = stats(&values);
        assert!((35.0..=140.0).contains(&std), "{ch}: {std}");
    }
}

#[test]
fn ambient_adds_to_the_dark_baseline() {
    let ambient = AmbientModel::daylight();
    let model = default_model().with_ambient(ambient.clone());
    let x = RgbSetting::new(0.1, 0.1, 0.1);
    let night = model.expected_counts(x, midnight());
    let noon = model.expected_counts(x, midnight() + chrono::Duration::hours(12));
    let base = default_model().expected_counts(x, midnight());
    // only the stray-light floor remains after dark
    for i in 0..CHANNEL_COUNT {
        assert!((night[i] - base[i] - ambient.constant[i]).abs() < 1e-9);
        assert!(noon[i] >= night[i]);
    }
    assert!(noon[Channel::Clear.index()] >= 65535.0);
}

fn setting() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(0.0f64..=1.0)
}

fn add(a: &ChannelVector, b: &ChannelVector) -> ChannelVector {
    let mut out = [0.0; CHANNEL_COUNT];
    for i in 0..CHANNEL_COUNT {
        out[i] = a[i] + b[i];
    }
    out
}

proptest! {
    #[test]
    fn expected_counts_are_affine(a in setting(), b in setting(), t in 0.0f64..=1.0) {
        let m = default_model();
        let at = |x: [f64; 3]| m.expected_counts(RgbSetting::from_array(x), midnight());
        let mix: [f64; 3] = std::array::from_fn(|i| t * a[i] + (1.0 - t) * b[i]);
        let lhs = at(mix);
        let ya = at(a);
        let yb = at(b);
        for i in 0..CHANNEL_COUNT {
            let rhs = t * ya[i] + (1.0 - t) * yb[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }
        // superposition around the dark offset
        let zero = at([0.0; 3]);
        let sum: [f64; 3] = std::array::from_fn(|i| (a[i] + b[i]) / 2.0);
        let left = add(&at(sum), &at(sum));
        let right = add(&ya, &yb);
        for i in 0..CHANNEL_COUNT {
            prop_assert!((left[i] - right[i]).abs() <= 1e-9 * right[i].abs().max(1.0));
            prop_assert!(zero[i] >= 0.0);
        }
    }

    #[test]
    fn expected_counts_are_monotone(a in setting(), d in setting()) {
        let m = default_model();
        let hi: [f64; 3] = std::array::from_fn(|i| (a[i] + d[i] * (1.0 - a[i])).min(1.0));
        let lo = m.expected_counts(RgbSetting::from_array(a), midnight());
        let up = m.expected_counts(RgbSetting::from_array(hi), midnight());
        for i in 0..CHANNEL_COUNT {
            prop_assert!(up[i] >= lo[i]);
        }
    }

    #[test]
    fn measurement_never_panics_and_stays_in_range(
        r in prop::num::f64::ANY,
        g in prop::num::f64::ANY,
        b in prop::num::f64::ANY,
        secs in -1e10f64..1e10,
        seed in any::<u64>(),
        noisy in any::<bool>(),
    ) {
        let mut model = default_model().with_seed(seed).with_ambient(AmbientModel::daylight());
        if noisy {
            model = model.with_noise(1e6);
        }
        let x = RgbSetting::new(r, g, b);
        prop_assert!(x.as_array().iter().all(|v| (0.0..=1.0).contains(v)));
        let t = DateTime::from_timestamp(secs as i64, 0).unwrap_or_else(midnight);
        let reading = Simulator::new(model).measure(x, t);
        prop_assert_eq!(reading.counts.0.len(), CHANNEL_COUNT);
    }
}

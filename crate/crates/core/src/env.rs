//! Weather stress: speed, noise, sampling-rate, and radio-reliability scaling.
//!
//! Weather is fixed for the whole run. Clear leaves everything nominal, fog
//! slows robots and stretches the sampling period, rain halves speed, doubles
//! motion noise, samples slightly faster, nudges gradient gains up, and drops
//! a fraction of radio messages.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Message, Payload};

#[derive(Debug, Error)]
#[error("unknown weather mode {0:?} (expected clear, fog, or rain)")]
pub struct UnknownWeather(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Clear,
    Fog,
    Rain,
}

impl std::str::FromStr for Weather {
    type Err = UnknownWeather;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "clear" => Ok(Weather::Clear),
            "fog" => Ok(Weather::Fog),
            "rain" => Ok(Weather::Rain),
            other => Err(UnknownWeather(other.to_string())),
        }
    }
}

impl std::fmt::Display for Weather {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weather::Clear => write!(f, "clear"),
            Weather::Fog => write!(f, "fog"),
            Weather::Rain => write!(f, "rain"),
        }
    }
}

/// Behavior multipliers in effect for one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub mode: Weather,
    /// Multiplier on maximum and commanded speeds, in (0, 1].
    pub speed_scale: f64,
    /// Multiplier on kinematic slip noise.
    pub motion_noise_scale: f64,
    /// Multiplier on the controller sampling period (<1 samples faster).
    pub sample_period_scale: f64,
    /// Multiplier on gradient-following gains in BLOB mode.
    pub gradient_gain_scale: f64,
    /// Per-message probability of a radio drop, in [0, 1).
    pub drop_prob: f64,
}

/// The fixed parameter set for each weather mode.
pub fn env_params(mode: Weather) -> EnvState {
    match mode {
        Weather::Clear => EnvState {
            mode,
            speed_scale: 1.0,
            motion_noise_scale: 1.0,
            sample_period_scale: 1.0,
            gradient_gain_scale: 1.0,
            drop_prob: 0.0,
        },
        Weather::Fog => EnvState {
            mode,
            speed_scale: 0.78,
            motion_noise_scale: 1.5,
            sample_period_scale: 1.4,
            gradient_gain_scale: 1.0,
            drop_prob: 0.0,
        },
        Weather::Rain => EnvState {
            mode,
            speed_scale: 0.5,
            motion_noise_scale: 2.0,
            sample_period_scale: 0.8,
            gradient_gain_scale: 1.1,
            drop_prob: 0.15,
        },
    }
}

/// Decide whether a message survives the radio. STOP_ALL is exempt so that
/// termination is always observed; everything else is an independent
/// Bernoulli draw.
pub fn maybe_drop(message: &Message, env: &EnvState, rng: &mut ChaCha8Rng) -> bool {
    if matches!(message.payload, Payload::StopAll) {
        return true;
    }
    if env.drop_prob <= 0.0 {
        return true;
    }
    rng.random::<f64>() >= env.drop_prob
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Endpoint;
    use crate::rng::{derive_rng, Stream};

    fn msg(payload: Payload) -> Message {
        Message {
            payload,
            sender: Endpoint::Supervisor,
            recipient: Endpoint::Robot(0),
            tick_sent: 0,
            delivered: false,
        }
    }

    #[test]
    fn clear_is_nominal() {
        let e = env_params(Weather::Clear);
        assert_eq!(e.speed_scale, 1.0);
        assert_eq!(e.motion_noise_scale, 1.0);
        assert_eq!(e.sample_period_scale, 1.0);
        assert_eq!(e.gradient_gain_scale, 1.0);
        assert_eq!(e.drop_prob, 0.0);
    }

    #[test]
    fn rain_halves_speed_fog_in_band() {
        assert_eq!(env_params(Weather::Rain).speed_scale, 0.5);
        let fog = env_params(Weather::Fog).speed_scale;
        assert!((0.75..=0.80).contains(&fog), "fog speed scale {fog}");
    }

    #[test]
    fn zero_drop_prob_always_delivers() {
        let env = env_params(Weather::Clear);
        let mut rng = derive_rng(1, Stream::Drops(0));
        for _ in 0..100 {
            assert!(maybe_drop(&msg(Payload::Telemetry(Default::default())), &env, &mut rng));
        }
    }

    #[test]
    fn stop_all_is_exempt_from_drops() {
        let mut env = env_params(Weather::Rain);
        env.drop_prob = 0.999;
        let mut rng = derive_rng(2, Stream::Drops(0));
        for _ in 0..100 {
            assert!(maybe_drop(&msg(Payload::StopAll), &env, &mut rng));
        }
    }

    #[test]
    fn empirical_drop_rate_matches() {
        let env = env_params(Weather::Rain);
        let mut rng = derive_rng(3, Stream::Drops(0));
        let n = 10_000;
        let mut dropped = 0;
        for _ in 0..n {
            if !maybe_drop(&msg(Payload::SampleRequest { x: 0.0, y: 0.0 }), &env, &mut rng) {
                dropped += 1;
            }
        }
        let rate = dropped as f64 / n as f64;
        assert!((rate - 0.15).abs() < 0.01, "drop rate {rate}");
    }

    #[test]
    fn weather_parses_and_rejects() {
        assert_eq!("fog".parse::<Weather>().unwrap(), Weather::Fog);
        assert_eq!("CLEAR".parse::<Weather>().unwrap(), Weather::Clear);
        assert!("hail".parse::<Weather>().is_err());
    }
}

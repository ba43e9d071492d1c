//! Day forecasts and their realizations.
//!
//! The forecast is the noiseless profile. The realization draws, per hour,
//! `z_pv` then `z_load` from a standard normal on a ChaCha8 stream keyed by
//! `tagged_hash("vdg/forecast-noise", seed, name, day)`, and sets
//! `realized = max(0, round(forecast * (1 + forecast_error * z)))`.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::profile::{DayTrace, HouseholdProfile};
use crate::crypto::tagged_hash;
use crate::units::{SignedWh, Wh, SLOTS_PER_DAY};

pub fn noise_rng(seed: u64, name: &str, day: u32) -> ChaCha8Rng {
    let key = tagged_hash("vdg/forecast-noise", &[&seed.to_be_bytes(), name.as_bytes(), &day.to_be_bytes()]);
    ChaCha8Rng::from_seed(key.0)
}

fn perturb(forecast: Wh, sigma: f64, z: f64) -> Wh {
    let v = libm::round(forecast as f64 * (1.0 + sigma * z));
    if v <= 0.0 {
        0
    } else {
        v as Wh
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastDay {
    pub forecast: DayTrace,
    pub realized: DayTrace,
}

pub fn forecast_day(profile: &HouseholdProfile, name: &str, day: u32, seed: u64) -> ForecastDay {
    let n = SLOTS_PER_DAY as usize;
    let forecast = DayTrace {
        pv: (0..n).map(|h| profile.pv_forecast(h)).collect(),
        load: profile.base_load.clone(),
    };
    let mut rng = noise_rng(seed, name, day);
    let mut realized = DayTrace { pv: Vec::with_capacity(n), load: Vec::with_capacity(n) };
    for h in 0..n {
        let z_pv: f64 = StandardNormal.sample(&mut rng);
        let z_load: f64 = StandardNormal.sample(&mut rng);
        realized.pv.push(perturb(forecast.pv[h], profile.forecast_error, z_pv));
        realized.load.push(perturb(forecast.load[h], profile.forecast_error, z_load));
    }
    ForecastDay { forecast, realized }
}

/// Surplus (+) or deficit (-) per hour after scheduling.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetPositionForecast {
    pub net: Vec<SignedWh>,
}

/// The intraday estimate: halfway from the day-ahead forecast to what will
/// actually happen.
pub fn intraday_estimate(forecast: SignedWh, realized: SignedWh) -> SignedWh {
    forecast + (realized - forecast) / 2
}

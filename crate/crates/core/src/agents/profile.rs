use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::units::{PricePerKwh, SignedWh, Wh, SLOTS_PER_DAY};

/// Clear-sky PV output per hour, in thousandths of the peak.
pub const DEFAULT_PV_SHAPE: [u32; 24] = [
    0, 0, 0, 0, 0, 0, 50, 150, 350, 600, 850, 1000, 1000, 850, 600, 350, 150, 50, 0, 0, 0, 0, 0, 0,
];

fn default_pv_shape() -> Vec<u32> {
    DEFAULT_PV_SHAPE.to_vec()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlexibleAppliance {
    pub appliance_id: String,
    pub energy_per_run: Wh,
    /// Slots the run occupies.
    pub duration: u32,
    pub earliest: u32,
    pub latest: u32,
    #[serde(default)]
    pub interruptible: bool,
}

impl FlexibleAppliance {
    pub fn window(&self) -> u32 {
        self.latest + 1 - self.earliest
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Storage {
    pub capacity: Wh,
    /// Per slot, each direction.
    pub max_rate: Wh,
    /// Percent of charged energy that comes back out.
    pub efficiency_pct: u32,
    #[serde(default)]
    pub initial: Wh,
}

/// A curtailable device, e.g. a heat pump: draws `load` every slot and can
/// be switched down for a flexibility contract.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlexDevice {
    pub load: Wh,
    pub ask_price: PricePerKwh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdProfile {
    /// Wh per hour of the day.
    pub base_load: Vec<Wh>,
    #[serde(default)]
    pub pv_peak: Wh,
    #[serde(default = "default_pv_shape")]
    pub pv_shape: Vec<u32>,
    /// Standard deviation of the realized/forecast ratio.
    #[serde(default)]
    pub forecast_error: f64,
    #[serde(default)]
    pub appliances: Vec<FlexibleAppliance>,
    #[serde(default)]
    pub storage: Option<Storage>,
    #[serde(default)]
    pub flex_device: Option<FlexDevice>,
    pub retail_price: PricePerKwh,
    pub feed_in_tariff: PricePerKwh,
}

impl HouseholdProfile {
    pub fn flat(base: Wh, retail: PricePerKwh, feed_in: PricePerKwh) -> Self {
        HouseholdProfile {
            base_load: alloc::vec![base; SLOTS_PER_DAY as usize],
            pv_peak: 0,
            pv_shape: default_pv_shape(),
            forecast_error: 0.0,
            appliances: Vec::new(),
            storage: None,
            flex_device: None,
            retail_price: retail,
            feed_in_tariff: feed_in,
        }
    }

    pub fn pv_forecast(&self, hour: usize) -> Wh {
        self.pv_peak * self.pv_shape[hour] as u64 / 1000
    }

    pub fn device_load(&self) -> Wh {
        self.flex_device.as_ref().map_or(0, |d| d.load)
    }

    /// Per-slot volume this household may register for sale.
    pub fn injection_capacity(&self) -> Wh {
        let pv_max = (0..SLOTS_PER_DAY as usize).map(|h| self.pv_forecast(h)).max().unwrap_or(0);
        pv_max + self.storage.as_ref().map_or(0, |s| s.max_rate)
    }

    /// Every rule violation, as (field path relative to the profile, message).
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        let n = SLOTS_PER_DAY as usize;
        if self.base_load.len() != n {
            v.push(("base_load".into(), format!("needs {n} hourly values, got {}", self.base_load.len())));
        }
        if self.pv_shape.len() != n {
            v.push(("pv_shape".into(), format!("needs {n} hourly values, got {}", self.pv_shape.len())));
        } else if self.pv_shape.iter().any(|&s| s > 1000) {
            v.push(("pv_shape".into(), "values are thousandths of peak, at most 1000".into()));
        }
        if !(self.forecast_error.is_finite() && (0.0..=1.0).contains(&self.forecast_error)) {
            v.push(("forecast_error".into(), "must be within [0, 1]".into()));
        }
        if self.feed_in_tariff > self.retail_price {
            v.push(("feed_in_tariff".into(), "exceeds retail_price".into()));
        }
        let mut ids = alloc::collections::BTreeSet::new();
        for (i, a) in self.appliances.iter().enumerate() {
            let at = format!("appliances[{i}]");
            if !ids.insert(a.appliance_id.as_str()) {
                v.push((at.clone(), format!("duplicate appliance id {}", a.appliance_id)));
            }
            if a.duration == 0 || a.energy_per_run == 0 {
                v.push((at.clone(), format!("appliance {} has an empty run", a.appliance_id)));
            }
            if a.latest >= SLOTS_PER_DAY || a.earliest > a.latest {
                v.push((at.clone(), format!("appliance {} window {}..={} outside the day", a.appliance_id, a.earliest, a.latest)));
            } else if a.earliest + a.duration > a.latest + 1 {
                v.push((at, format!("appliance {} does not fit its window", a.appliance_id)));
            }
        }
        if let Some(s) = &self.storage {
            if s.efficiency_pct == 0 || s.efficiency_pct > 100 {
                v.push(("storage.efficiency_pct".into(), "must be within 1..=100".into()));
            }
            if s.initial > s.capacity {
                v.push(("storage.initial".into(), "exceeds capacity".into()));
            }
        }
        v
    }
}

/// Splits `total` over `parts` as evenly as integers allow, remainder to the
/// first parts.
pub fn spread(total: Wh, parts: usize) -> Vec<Wh> {
    if parts == 0 {
        return Vec::new();
    }
    let base = total / parts as u64;
    let rem = (total % parts as u64) as usize;
    (0..parts).map(|i| base + u64::from(i < rem)).collect()
}

/// One day of production and base consumption per hour.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayTrace {
    pub pv: Vec<Wh>,
    pub load: Vec<Wh>,
}

impl DayTrace {
    /// Production minus base and device consumption.
    pub fn base_net(&self, device: Wh) -> Vec<SignedWh> {
        self.pv.iter().zip(&self.load).map(|(&p, &l)| p as SignedWh - l as SignedWh - device as SignedWh).collect()
    }
}

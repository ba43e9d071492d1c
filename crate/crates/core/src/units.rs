//! Integer units used throughout: energy in Wh, money in centi-units, prices
//! in centi-units per kWh.

use core::fmt;

use serde::{Deserialize, Serialize};

/// Energy in watt-hours.
pub type Wh = u64;
/// Signed energy, positive for surplus and negative for deficit.
pub type SignedWh = i64;
/// Money in centi-units.
pub type Centi = u64;
/// Price in centi-units per kWh.
pub type PricePerKwh = u64;
/// Simulated time; one tick is one simulated second.
pub type Tick = u64;

/// Smallest tradable energy block.
pub const TRADE_UNIT_WH: Wh = 100;

pub const SLOTS_PER_DAY: u32 = 24;

/// Delivery hour, counted from the first delivery day of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeSlot(pub u32);

impl TimeSlot {
    pub fn new(day: u32, hour: u32) -> Self {
        debug_assert!(hour < SLOTS_PER_DAY);
        TimeSlot(day * SLOTS_PER_DAY + hour)
    }

    pub fn day(self) -> u32 {
        self.0 / SLOTS_PER_DAY
    }

    pub fn hour(self) -> u32 {
        self.0 % SLOTS_PER_DAY
    }

    pub fn next(self) -> Self {
        TimeSlot(self.0 + 1)
    }
}

impl fmt::Display for TimeSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}h{:02}", self.day(), self.hour())
    }
}

/// Divides with round-half-to-even.
pub fn div_round_half_even(num: u128, den: u128) -> u128 {
    assert!(den > 0, "division by zero");
    let q = num / den;
    let r = num % den;
    let twice = r * 2;
    if twice > den || (twice == den && q % 2 == 1) {
        q + 1
    } else {
        q
    }
}

/// Money owed for `volume` Wh at `price` centi-units/kWh, banker's-rounded to
/// the nearest centi-unit.
pub fn amount(volume: Wh, price: PricePerKwh) -> Centi {
    div_round_half_even(volume as u128 * price as u128, 1000) as Centi
}

/// Number of whole trade units in `volume`.
pub fn units_in(volume: Wh) -> u64 {
    volume / TRADE_UNIT_WH
}

/// `volume` rounded down to a whole number of trade units.
pub fn floor_to_unit(volume: Wh) -> Wh {
    units_in(volume) * TRADE_UNIT_WH
}

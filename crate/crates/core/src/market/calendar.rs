//! Session calendar. Simulated day `d` of the scenario is delivered during
//! clock day `d + 1`; clock day 0 hosts the first day-ahead round. Wall-clock
//! offsets are given in minutes of the simulated day and scaled to ticks by
//! `ticks_per_day` (86 400 by default, one tick per second).

use serde::{Deserialize, Serialize};

use crate::units::{Tick, TimeSlot, SLOTS_PER_DAY};

/// Real-time verification ticks per delivery slot.
pub const RT_TICKS_PER_SLOT: u32 = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Calendar {
    pub ticks_per_day: u64,
    /// Wholesale gate closure on the day before delivery.
    pub wholesale_gate_min: u64,
    pub day_ahead_open_min: u64,
    /// Day-ahead books close this long before the wholesale gate.
    pub day_ahead_close_lead_min: u64,
    pub intraday_open_lead_min: u64,
    pub intraday_close_lead_min: u64,
    /// Proof-of-flow submission after the slot ends.
    pub pof_delay_min: u64,
    pub settle_delay_min: u64,
    /// Contracts still unverified this long after the slot are defaulted.
    pub verify_timeout_min: u64,
}

impl Default for Calendar {
    fn default() -> Self {
        Calendar {
            ticks_per_day: 86_400,
            wholesale_gate_min: 12 * 60,
            day_ahead_open_min: 9 * 60,
            day_ahead_close_lead_min: 30,
            intraday_open_lead_min: 120,
            intraday_close_lead_min: 60,
            pof_delay_min: 5,
            settle_delay_min: 30,
            verify_timeout_min: 120,
        }
    }
}

impl Calendar {
    pub fn minutes(&self, m: u64) -> Tick {
        m * self.ticks_per_day / 1440
    }

    pub fn slot_ticks(&self) -> Tick {
        self.ticks_per_day / SLOTS_PER_DAY as u64
    }

    /// Length of one real-time tick.
    pub fn rt_tick(&self) -> Tick {
        self.slot_ticks() / RT_TICKS_PER_SLOT as u64
    }

    pub fn day_start(&self, day: u32) -> Tick {
        (day as u64 + 1) * self.ticks_per_day
    }

    pub fn slot_start(&self, slot: TimeSlot) -> Tick {
        self.day_start(slot.day()) + slot.hour() as u64 * self.slot_ticks()
    }

    pub fn slot_end(&self, slot: TimeSlot) -> Tick {
        self.slot_start(slot) + self.slot_ticks()
    }

    /// Start of real-time tick `k` (0..12) of `slot`.
    pub fn rt_tick_start(&self, slot: TimeSlot, k: u32) -> Tick {
        self.slot_start(slot) + k as u64 * self.rt_tick()
    }

    pub fn wholesale_gate(&self, day: u32) -> Tick {
        self.day_start(day) - self.ticks_per_day + self.minutes(self.wholesale_gate_min)
    }

    pub fn day_ahead_open(&self, day: u32) -> Tick {
        self.day_start(day) - self.ticks_per_day + self.minutes(self.day_ahead_open_min)
    }

    pub fn day_ahead_close(&self, day: u32) -> Tick {
        self.wholesale_gate(day) - self.minutes(self.day_ahead_close_lead_min)
    }

    pub fn intraday_open(&self, slot: TimeSlot) -> Tick {
        self.slot_start(slot) - self.minutes(self.intraday_open_lead_min)
    }

    pub fn intraday_close(&self, slot: TimeSlot) -> Tick {
        self.slot_start(slot) - self.minutes(self.intraday_close_lead_min)
    }

    pub fn pof_time(&self, slot: TimeSlot) -> Tick {
        self.slot_end(slot) + self.minutes(self.pof_delay_min)
    }

    pub fn settle_time(&self, slot: TimeSlot) -> Tick {
        self.slot_end(slot) + self.minutes(self.settle_delay_min)
    }

    pub fn verify_deadline(&self, slot: TimeSlot) -> Tick {
        self.slot_end(slot) + self.minutes(self.verify_timeout_min)
    }

    /// Ticks at which the calendar itself is well formed, checked at
    /// scenario load. Returns a description of the first broken ordering.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.ticks_per_day < 1440 || !self.ticks_per_day.is_multiple_of(SLOTS_PER_DAY as u64 * RT_TICKS_PER_SLOT as u64) {
            return Err("ticks_per_day must be a multiple of 288 and at least 1440");
        }
        if self.wholesale_gate_min >= 1440 || self.day_ahead_open_min >= 1440 {
            return Err("session times must fall within the day");
        }
        if self.day_ahead_close_lead_min == 0 {
            return Err("day-ahead must close strictly before the wholesale gate");
        }
        if self.day_ahead_open_min + self.day_ahead_close_lead_min >= self.wholesale_gate_min {
            return Err("day-ahead must open before it closes");
        }
        if self.intraday_close_lead_min == 0 || self.intraday_open_lead_min <= self.intraday_close_lead_min {
            return Err("intraday session must open before it closes, and close before delivery");
        }
        // Intraday for the first slot of a day must open after day-ahead closed.
        if self.intraday_open_lead_min >= 1440 - self.wholesale_gate_min + self.day_ahead_close_lead_min {
            return Err("intraday opens before the day-ahead round has closed");
        }
        if self.pof_delay_min == 0 || self.settle_delay_min <= self.pof_delay_min {
            return Err("proof of flow must follow delivery and precede settlement");
        }
        if self.verify_timeout_min < self.settle_delay_min {
            return Err("verification timeout must not precede settlement");
        }
        Ok(())
    }
}

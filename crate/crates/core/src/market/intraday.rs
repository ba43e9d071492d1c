//! Intraday deviation handling: the part of the gap between the updated
//! forecast and the day-ahead position that storage cannot absorb becomes
//! an intraday order.

use serde::{Deserialize, Serialize};

use crate::units::{floor_to_unit, SignedWh, Wh};

/// Extra storage movement still available in a slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageHeadroom {
    pub charge: Wh,
    pub discharge: Wh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Absorption {
    /// Positive: extra charging; negative: extra discharging.
    pub storage: SignedWh,
    /// Deviation left after storage.
    pub residual: SignedWh,
    /// Volume to sell on the intraday market, in whole trade units.
    pub ask: Wh,
    /// Volume to buy on the intraday market, in whole trade units.
    pub bid: Wh,
}

/// `deviation` is updated net position minus day-ahead position: positive
/// means more surplus than sold, negative more deficit than bought.
pub fn absorb_deviation(deviation: SignedWh, headroom: StorageHeadroom) -> Absorption {
    let storage = if deviation >= 0 {
        deviation.min(headroom.charge as i64)
    } else {
        -((-deviation).min(headroom.discharge as i64))
    };
    let residual = deviation - storage;
    let (ask, bid) = if residual >= 0 {
        (floor_to_unit(residual as Wh), 0)
    } else {
        (0, floor_to_unit(residual.unsigned_abs()))
    };
    Absorption { storage, residual, ask, bid }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_absorbed_by_battery() {
        let a = absorb_deviation(-800, StorageHeadroom { charge: 0, discharge: 1000 });
        assert_eq!(a.storage, -800);
        assert_eq!((a.ask, a.bid, a.residual), (0, 0, 0));
    }

    #[test]
    fn beyond_budget_becomes_bid() {
        let a = absorb_deviation(-1500, StorageHeadroom { charge: 0, discharge: 500 });
        assert_eq!(a.storage, -500);
        assert_eq!(a.residual, -1000);
        assert_eq!(a.bid, 1000);
        assert_eq!(a.ask, 0);
    }

    #[test]
    fn zero_deviation_no_action() {
        let a = absorb_deviation(0, StorageHeadroom { charge: 300, discharge: 300 });
        assert_eq!(a, Absorption { storage: 0, residual: 0, ask: 0, bid: 0 });
    }

    #[test]
    fn surplus_charges_then_sells_whole_units() {
        let a = absorb_deviation(1290, StorageHeadroom { charge: 200, discharge: 0 });
        assert_eq!(a.storage, 200);
        assert_eq!(a.ask, 1000);
    }
}

//! The utility boundary: whatever a meter imports or exports that is not
//! covered by local contracts is bought at retail or sold at feed-in.

use serde::{Deserialize, Serialize};

use crate::units::{amount, Centi, PricePerKwh, SignedWh, Wh};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFlow {
    pub import: Wh,
    pub export: Wh,
    /// Paid to the utility for `import`.
    pub import_cost: Centi,
    /// Received from the utility for `export`.
    pub export_revenue: Centi,
}

/// `realized_net` is measured injection minus extraction for the slot.
/// `sold` is the local volume credited to this meter as delivered, `bought`
/// the volume delivered to it by local sellers.
pub fn boundary_flow(
    realized_net: SignedWh,
    sold: Wh,
    bought: Wh,
    retail: PricePerKwh,
    feed_in: PricePerKwh,
) -> BoundaryFlow {
    let residual = realized_net - sold as i64 + bought as i64;
    if residual >= 0 {
        let export = residual as Wh;
        BoundaryFlow { import: 0, export, import_cost: 0, export_revenue: amount(export, feed_in) }
    } else {
        let import = residual.unsigned_abs();
        BoundaryFlow { import, export: 0, import_cost: amount(import, retail), export_revenue: 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_market_is_plain_net_metering() {
        let f = boundary_flow(-1000, 0, 0, 15, 5);
        assert_eq!((f.import, f.import_cost), (1000, 15));
        let f = boundary_flow(2000, 0, 0, 15, 5);
        assert_eq!((f.export, f.export_revenue), (2000, 10));
    }

    #[test]
    fn local_trades_net_out() {
        // seller injected 1500, sold 1000 locally: 500 to the utility
        let f = boundary_flow(1500, 1000, 0, 15, 5);
        assert_eq!(f.export, 500);
        // buyer extracted 1200, 1000 delivered locally: 200 from the utility
        let f = boundary_flow(-1200, 0, 1000, 15, 5);
        assert_eq!(f.import, 200);
    }
}

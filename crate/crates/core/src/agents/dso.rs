//! The distribution operator's side of verification: turning meter
//! readings into proofs of flow.

use core::ops::Range;

use alloc::vec::Vec;

use crate::crypto::AgentId;
use crate::ledger::ProofOfFlow;
use crate::market::{baseline_reference, track_realtime, DeliveryAssessment, ObjectiveKind, RealTimeObjective};
use crate::units::{SignedWh, TimeSlot, Wh};

/// Ticks before an event that make up the baseline: half an hour.
pub const BASELINE_WINDOW: usize = 6;

/// Slot totals from per-tick net consumption (positive draws from the grid).
pub fn proof_of_flow(meter: AgentId, slot: TimeSlot, ticks: &[SignedWh], reduction_delivered: Wh) -> ProofOfFlow {
    let net: SignedWh = ticks.iter().sum();
    ProofOfFlow {
        meter,
        slot,
        measured_injection: if net < 0 { net.unsigned_abs() } else { 0 },
        measured_extraction: if net > 0 { net as Wh } else { 0 },
        reduction_delivered,
    }
}

/// Reduction delivered by one meter in the slot covering `slot_ticks`.
///
/// `history` is the meter's tick series; `event` is the contiguous run of
/// contracted ticks containing the slot, excluded from the baseline. With a
/// curve contract among the meter's contracts, the target is the baseline
/// lowered evenly by the contracted volume.
pub fn assess_reduction(
    history: &[SignedWh],
    event: Range<usize>,
    slot_ticks: Range<usize>,
    contracted: Wh,
    kind: ObjectiveKind,
    tolerance: Wh,
) -> DeliveryAssessment {
    let base = baseline_reference(history, event.clone(), BASELINE_WINDOW);
    let off = slot_ticks.start - event.start;
    let mut reference: Vec<SignedWh> = base[off..off + slot_ticks.len()].to_vec();
    if kind == ObjectiveKind::DsoCurve {
        let cuts = crate::agents::profile::spread(contracted, reference.len());
        for (r, c) in reference.iter_mut().zip(cuts) {
            *r -= c as SignedWh;
        }
    }
    let objective = RealTimeObjective { kind, reference, tolerance };
    track_realtime(&objective, contracted, &history[slot_ticks])
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn pass_through_injection() {
        let p = proof_of_flow(AgentId([3; 20]), TimeSlot(4), &[-200; 10], 0);
        assert_eq!((p.measured_injection, p.measured_extraction), (2000, 0));
    }

    #[test]
    fn curve_followed_exactly() {
        let mut h = vec![100i64; 6];
        h.extend(vec![50i64; 12]);
        let a = assess_reduction(&h, 6..18, 6..18, 600, ObjectiveKind::DsoCurve, 50);
        assert!(a.fulfilled);
        assert_eq!((a.delivered, a.deviation), (600, 0));
    }

    #[test]
    fn second_slot_of_event_keeps_pre_event_baseline() {
        let mut h = vec![100i64; 6];
        h.extend(vec![50i64; 24]);
        let a = assess_reduction(&h, 6..30, 18..30, 600, ObjectiveKind::BaselineReduction, 50);
        assert_eq!(a.delivered, 600);
    }
}

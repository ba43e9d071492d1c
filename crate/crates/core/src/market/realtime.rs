//! Real-time objectives attached to flexibility contracts, assessed over the
//! 5-minute ticks of the delivery slot.

use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::units::{SignedWh, Wh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// Reduce consumption relative to the preceding half hour.
    BaselineReduction,
    /// Follow a per-tick target supplied by the DSO.
    DsoCurve,
}

impl ObjectiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::BaselineReduction => "baseline-reduction",
            ObjectiveKind::DsoCurve => "dso-curve",
        }
    }
}

impl Encode for ObjectiveKind {
    fn encode(&self, w: &mut Writer) {
        w.u8(match self {
            ObjectiveKind::BaselineReduction => 0,
            ObjectiveKind::DsoCurve => 1,
        });
    }
}

impl Decode for ObjectiveKind {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(ObjectiveKind::BaselineReduction),
            1 => Ok(ObjectiveKind::DsoCurve),
            tag => Err(DecodeError::BadTag { what: "objective", tag }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealTimeObjective {
    pub kind: ObjectiveKind,
    /// Per-tick reference: the baseline for reduction objectives, the
    /// target for curve objectives. Net consumption, Wh per tick.
    pub reference: Vec<SignedWh>,
    pub tolerance: Wh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryAssessment {
    /// Reduction measured against the baseline, or contracted volume less
    /// the deviation beyond tolerance for curves. Never above `contracted`.
    pub delivered: Wh,
    /// Σ|measured − target| for curves, 0 for baselines.
    pub deviation: Wh,
    pub shortfall: Wh,
    pub fulfilled: bool,
}

/// Baseline per event tick: the mean net consumption of the `window` most
/// recent ticks before it that are not themselves inside the event. Ticks
/// before the start of `history` are simply absent; an empty window gives 0.
pub fn baseline_reference(history: &[SignedWh], event: Range<usize>, window: usize) -> Vec<SignedWh> {
    let mut out = Vec::with_capacity(event.len());
    for k in event.clone() {
        let mut sum = 0i64;
        let mut n = 0i64;
        let mut j = k.min(history.len());
        while j > 0 && (n as usize) < window {
            j -= 1;
            if event.contains(&j) {
                continue;
            }
            sum += history[j];
            n += 1;
        }
        out.push(if n == 0 { 0 } else { sum.div_euclid(n) });
    }
    out
}

/// Assesses one slot of measured net consumption against an objective.
pub fn track_realtime(objective: &RealTimeObjective, contracted: Wh, measured: &[SignedWh]) -> DeliveryAssessment {
    debug_assert_eq!(objective.reference.len(), measured.len());
    let tol = objective.tolerance;
    match objective.kind {
        ObjectiveKind::BaselineReduction => {
            let reduction: i64 = objective.reference.iter().zip(measured).map(|(r, m)| r - m).sum();
            let achieved = (reduction.max(0) as Wh).min(contracted);
            let gap = contracted - achieved;
            let fulfilled = gap <= tol;
            let delivered = if fulfilled { contracted } else { achieved };
            DeliveryAssessment { delivered, deviation: 0, shortfall: contracted - delivered, fulfilled }
        }
        ObjectiveKind::DsoCurve => {
            let deviation: Wh = objective.reference.iter().zip(measured).map(|(t, m)| (t - m).unsigned_abs()).sum();
            let fulfilled = deviation <= tol;
            let shortfall = deviation.saturating_sub(tol).min(contracted);
            DeliveryAssessment { delivered: contracted - shortfall, deviation, shortfall, fulfilled }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn baseline(reference: Vec<SignedWh>) -> RealTimeObjective {
        RealTimeObjective { kind: ObjectiveKind::BaselineReduction, reference, tolerance: 50 }
    }

    #[test]
    fn half_hour_baseline_exact_reduction() {
        // 3000 Wh over the preceding half hour, 1000 Wh contracted, 2000 measured
        let history = vec![500i64; 6];
        let mut all = history.clone();
        let measured = vec![333, 333, 334, 333, 333, 334];
        all.extend_from_slice(&measured);
        let reference = baseline_reference(&all, 6..12, 6);
        assert_eq!(reference, vec![500; 6]);
        let a = track_realtime(&baseline(reference), 1000, &measured);
        assert!(a.fulfilled);
        assert_eq!(a.delivered, 1000);
        assert_eq!(a.shortfall, 0);
    }

    #[test]
    fn consumption_above_baseline_delivers_nothing() {
        let a = track_realtime(&baseline(vec![100; 12]), 600, &[150; 12]);
        assert_eq!(a.delivered, 0);
        assert_eq!(a.shortfall, 600);
        assert!(!a.fulfilled);
    }

    #[test]
    fn within_tolerance_counts_as_full() {
        let a = track_realtime(&baseline(vec![100; 2]), 200, &[20, 20]);
        assert!(a.fulfilled);
        assert_eq!(a.delivered, 200);
        let a = track_realtime(&baseline(vec![100; 2]), 200, &[50, 50]);
        assert!(!a.fulfilled);
        assert_eq!(a.delivered, 100);
        assert_eq!(a.shortfall, 100);
    }

    #[test]
    fn baseline_skips_event_ticks_and_rolls_forward() {
        let history = vec![10, 20, 30, 40, 50, 60, 70, 0, 0];
        let r = baseline_reference(&history, 7..9, 3);
        assert_eq!(r, vec![60, 60]);
        let r = baseline_reference(&history, 2..4, 6);
        assert_eq!(r, vec![15, 15]);
        assert_eq!(baseline_reference(&history, 0..1, 6), vec![0]);
    }

    #[test]
    fn curve_identical_to_measured() {
        let target = vec![120i64, -40, 0, 75];
        let o = RealTimeObjective { kind: ObjectiveKind::DsoCurve, reference: target.clone(), tolerance: 50 };
        let a = track_realtime(&o, 400, &target);
        assert!(a.fulfilled);
        assert_eq!(a.deviation, 0);
        assert_eq!(a.delivered, 400);
    }

    #[test]
    fn curve_deviation_beyond_tolerance_is_shortfall() {
        let o = RealTimeObjective { kind: ObjectiveKind::DsoCurve, reference: vec![0, 0, 0], tolerance: 50 };
        let a = track_realtime(&o, 400, &[100, -100, 50]);
        assert_eq!(a.deviation, 250);
        assert_eq!(a.shortfall, 200);
        assert_eq!(a.delivered, 200);
        let a = track_realtime(&o, 100, &[1000, 0, 0]);
        assert_eq!(a.delivered, 0);
    }

    #[test]
    fn codec_roundtrip() {
        for k in [ObjectiveKind::BaselineReduction, ObjectiveKind::DsoCurve] {
            assert_eq!(ObjectiveKind::from_bytes(&k.to_bytes()).unwrap(), k);
        }
    }
}

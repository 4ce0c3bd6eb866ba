//! Intent estimation: body-cue window -> probability over maneuvers.
//!
//! The estimator sits behind [`IntentEstimator`] so a learned model can
//! replace the rule-based scorer without touching the rest of the pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensing::{CueSample, FusedEstimate};
use crate::world::Maneuver;

pub const DEFAULT_FLOOR: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntentError {
    #[error("cue window is empty")]
    EmptyWindow,
    #[error("cue timestamps must be strictly increasing")]
    UnorderedWindow,
    #[error("invalid probabilities: {0}")]
    InvalidProbs(&'static str),
}

/// Probability for every maneuver, indexed in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentDistribution {
    probs: [f64; 5],
}

impl IntentDistribution {
    /// Builds a distribution from non-negative scores: normalize, then raise
    /// every entry to at least `floor` while keeping the total at one.
    pub fn from_scores(scores: [f64; 5], floor: f64) -> Result<Self, IntentError> {
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(IntentError::InvalidProbs("scores must be finite and >= 0"));
        }
        if !(0.0..0.2).contains(&floor) {
            return Err(IntentError::InvalidProbs("floor must lie in [0, 0.2)"));
        }
        let total = mirror_sum(&scores);
        let mut p = if total > 0.0 {
            scores.map(|s| s / total)
        } else {
            [0.2; 5]
        };
        apply_floor(&mut p, floor);
        Ok(Self { probs: p })
    }

    /// All mass on `m` except the floor on the other four maneuvers.
    pub fn concentrated(m: Maneuver, floor: f64) -> Self {
        let mut probs = [floor; 5];
        probs[m.index()] = 1.0 - 4.0 * floor;
        Self { probs }
    }

    pub fn uniform() -> Self {
        Self { probs: [0.2; 5] }
    }

    /// Wraps raw probabilities that already satisfy the invariants up to
    /// `floor_tolerance` (used for decoded wire values).
    pub fn from_probs(probs: [f64; 5], floor: f64, floor_tolerance: f64) -> Result<Self, IntentError> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(IntentError::InvalidProbs("probability outside [0, 1]"));
        }
        if probs.iter().any(|p| *p < floor - floor_tolerance) {
            return Err(IntentError::InvalidProbs("probability below floor"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(IntentError::InvalidProbs("probabilities do not sum to one"));
        }
        Ok(Self { probs })
    }

    pub fn prob(&self, m: Maneuver) -> f64 {
        self.probs[m.index()]
    }

    pub fn probs(&self) -> &[f64; 5] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (Maneuver, f64)> + '_ {
        Maneuver::ALL.iter().map(move |m| (*m, self.probs[m.index()]))
    }

    /// Most likely maneuver; ties go to the earlier canonical entry.
    pub fn argmax(&self) -> Maneuver {
        let mut best = 0;
        for i in 1..5 {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        Maneuver::ALL[best]
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

/// Sum that is bit-identical when the two turn entries are swapped.
fn mirror_sum(v: &[f64; 5]) -> f64 {
    ((v[0] + (v[1] + v[2])) + v[3]) + v[4]
}

/// Water-filling floor: entries below `floor` are pinned to it and the rest
/// are rescaled proportionally until no entry is below the floor.
fn apply_floor(p: &mut [f64; 5], floor: f64) {
    let mut pinned = [false; 5];
    loop {
        let pinned_mass = floor * pinned.iter().filter(|x| **x).count() as f64;
        let mut free = *p;
        for i in 0..5 {
            if pinned[i] {
                free[i] = 0.0;
            }
        }
        let free_sum = mirror_sum(&free);
        let scale = if free_sum > 0.0 {
            (1.0 - pinned_mass) / free_sum
        } else {
            0.0
        };
        let mut changed = false;
        for i in 0..5 {
            if !pinned[i] && p[i] * scale < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            for i in 0..5 {
                p[i] = if pinned[i] { floor } else { p[i] * scale };
            }
            return;
        }
    }
}

/// The most recent cue samples, oldest first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CueWindow {
    samples: Vec<CueSample>,
}

impl CueWindow {
    pub fn new(samples: Vec<CueSample>) -> Result<Self, IntentError> {
        if samples.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(IntentError::UnorderedWindow);
        }
        Ok(Self { samples })
    }

    /// Appends a sample and drops those older than `span` seconds before it.
    pub fn push(&mut self, sample: CueSample, span: f64) -> Result<(), IntentError> {
        if let Some(last) = self.samples.last() {
            if sample.time <= last.time {
                return Err(IntentError::UnorderedWindow);
            }
        }
        let cutoff = sample.time - span + 1e-9;
        self.samples.push(sample);
        self.samples.retain(|s| s.time > cutoff);
        Ok(())
    }

    pub fn samples(&self) -> &[CueSample] {
        &self.samples
    }

    pub fn latest(&self) -> Option<&CueSample> {
        self.samples.last()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub trait IntentEstimator {
    fn estimate(&self, window: &CueWindow, est: &FusedEstimate) -> Result<IntentDistribution, IntentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntentWeights {
    pub head_weight: f64,
    pub wrist_weight: f64,
    pub decel_weight: f64,
    pub maintain_prior: f64,
    pub accelerate_baseline: f64,
    pub floor: f64,
    /// Cue window span, seconds.
    pub window: f64,
}

pub const INTENT_WEIGHTS_JSON: &str = include_str!("../assets/intent_weights.json");

impl Default for IntentWeights {
    fn default() -> Self {
        Self {
            head_weight: 3.0,
            wrist_weight: 2.0,
            decel_weight: 2.5,
            maintain_prior: 1.0,
            accelerate_baseline: 0.0,
            floor: DEFAULT_FLOOR,
            window: 0.5,
        }
    }
}

impl IntentWeights {
    /// Multiplies every score weight (not the floor or window) by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            head_weight: self.head_weight * k,
            wrist_weight: self.wrist_weight * k,
            decel_weight: self.decel_weight * k,
            maintain_prior: self.maintain_prior * k,
            accelerate_baseline: self.accelerate_baseline * k,
            ..*self
        }
    }
}

/// Deterministic cue scoring with fixed weights.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RuleBasedEstimator {
    pub weights: IntentWeights,
}

impl RuleBasedEstimator {
    pub fn new(weights: IntentWeights) -> Self {
        Self { weights }
    }

    pub fn scores(&self, window: &CueWindow) -> Result<[f64; 5], IntentError> {
        let s = window.samples();
        if s.is_empty() {
            return Err(IntentError::EmptyWindow);
        }
        let n = s.len() as f64;
        let head = s.iter().map(|c| c.head_yaw_delta).sum::<f64>() / n;
        let wrist = s.iter().map(|c| c.wrist_flexion).sum::<f64>() / n;
        let decel = s.iter().filter(|c| c.decel_cue).count() as f64 / n;
        let w = &self.weights;
        let mut scores = [0.0; 5];
        scores[Maneuver::MaintainCourse.index()] = w.maintain_prior;
        scores[Maneuver::TurnLeft.index()] = w.head_weight * head.max(0.0) + w.wrist_weight * wrist.max(0.0);
        scores[Maneuver::TurnRight.index()] = w.head_weight * (-head).max(0.0) + w.wrist_weight * (-wrist).max(0.0);
        scores[Maneuver::Brake.index()] = w.decel_weight * decel;
        scores[Maneuver::Accelerate.index()] = w.accelerate_baseline;
        Ok(scores)
    }
}

impl IntentEstimator for RuleBasedEstimator {
    fn estimate(&self, window: &CueWindow, _est: &FusedEstimate) -> Result<IntentDistribution, IntentError> {
        IntentDistribution::from_scores(self.scores(window)?, self.weights.floor)
    }
}

/// Convenience wrapper around the default rule-based estimator.
pub fn estimate_intent(window: &CueWindow, est: &FusedEstimate) -> Result<IntentDistribution, IntentError> {
    RuleBasedEstimator::default().estimate(window, est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::world::KinematicState;
    use proptest::prelude::*;

    fn est() -> FusedEstimate {
        FusedEstimate {
            time: 0.0,
            mean: KinematicState::new(Vec2::ZERO, 0.0, 5.0),
            pos_std: 1.0,
            speed_std: 0.1,
        }
    }

    fn window(head: f64, wrist: f64, decel: bool) -> CueWindow {
        CueWindow::new(
            (0..5)
                .map(|i| CueSample {
                    time: i as f64 * 0.1,
                    head_yaw_delta: head,
                    wrist_flexion: wrist,
                    decel_cue: decel,
                    gaze_covers_conflict: false,
                })
                .collect(),
        )
        .unwrap()
    }

    fn check_invariants(d: &IntentDistribution) {
        let sum: f64 = d.probs().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "sum {sum}");
        assert!(d.probs().iter().all(|p| *p >= DEFAULT_FLOOR - 1e-15));
    }

    #[test]
    fn neutral_window_prefers_maintain() {
        // scores (1, 0, 0, 0, 0): four floors at 0.01 leave 0.96 on MaintainCourse
        let d = estimate_intent(&window(0.0, 0.0, false), &est()).unwrap();
        assert_eq!(d.argmax(), Maneuver::MaintainCourse);
        assert!((d.prob(Maneuver::MaintainCourse) - 0.96).abs() < 1e-12);
        assert!(d.prob(Maneuver::MaintainCourse) >= 0.8);
        check_invariants(&d);
    }

    #[test]
    fn left_cues_give_turn_left() {
        // TurnLeft score 3*0.3 + 2*0.8 = 2.5 against the MaintainCourse prior 1.0
        let d = estimate_intent(&window(0.3, 0.8, false), &est()).unwrap();
        assert_eq!(d.argmax(), Maneuver::TurnLeft);
        assert!((d.prob(Maneuver::TurnLeft) - 0.97 * 2.5 / 3.5).abs() < 1e-12);
        check_invariants(&d);
    }

    #[test]
    fn decel_cue_raises_brake() {
        let d = estimate_intent(&window(0.0, 0.0, true), &est()).unwrap();
        assert_eq!(d.argmax(), Maneuver::Brake);
    }

    #[test]
    fn empty_window_rejected() {
        assert_eq!(
            estimate_intent(&CueWindow::default(), &est()),
            Err(IntentError::EmptyWindow)
        );
    }

    #[test]
    fn window_push_keeps_span() {
        let mut w = CueWindow::default();
        for i in 0..20 {
            let c = CueSample {
                time: i as f64 * 0.1,
                ..Default::default()
            };
            w.push(c, 0.5).unwrap();
        }
        assert_eq!(w.samples().len(), 5);
        let span = w.samples().last().unwrap().time - w.samples()[0].time;
        assert!(span <= 0.5);
        assert!(w.push(CueSample::default(), 0.5).is_err());
    }

    #[test]
    fn weights_asset_matches_defaults() {
        let parsed: IntentWeights = serde_json::from_str(INTENT_WEIGHTS_JSON).unwrap();
        assert_eq!(parsed, IntentWeights::default());
    }

    #[test]
    fn floor_water_filling() {
        let d = IntentDistribution::from_scores([1.0, 0.0, 0.0, 0.0, 0.0], 0.01).unwrap();
        assert_eq!(d.probs()[1..], [0.01; 4]);
        let d = IntentDistribution::from_scores([0.0; 5], 0.01).unwrap();
        assert_eq!(d, IntentDistribution::uniform());
        let d = IntentDistribution::from_scores([100.0, 1.0, 0.0, 0.0, 0.0], 0.01).unwrap();
        check_invariants(&d);
        assert!(d.prob(Maneuver::TurnLeft) >= 0.01);
    }

    fn arb_window() -> impl Strategy<Value = CueWindow> {
        proptest::collection::vec((-0.6..0.6f64, -1.0..1.0f64, any::<bool>()), 1..8).prop_map(|v| {
            CueWindow::new(
                v.into_iter()
                    .enumerate()
                    .map(|(i, (h, w, d))| CueSample {
                        time: i as f64 * 0.1,
                        head_yaw_delta: h,
                        wrist_flexion: w,
                        decel_cue: d,
                        gaze_covers_conflict: false,
                    })
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn output_invariants(w in arb_window()) {
            let d = estimate_intent(&w, &est()).unwrap();
            let sum: f64 = d.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(d.probs().iter().all(|p| *p >= 0.01 - 1e-15));
        }

        #[test]
        fn weight_scaling_invariance(w in arb_window(), k in 0.01..100.0f64) {
            let base = RuleBasedEstimator::default().estimate(&w, &est()).unwrap();
            let scaled = RuleBasedEstimator::new(IntentWeights::default().scaled(k))
                .estimate(&w, &est())
                .unwrap();
            for (a, b) in base.probs().iter().zip(scaled.probs()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn mirror_swaps_turns(w in arb_window()) {
            let mirrored = CueWindow::new(
                w.samples()
                    .iter()
                    .map(|c| CueSample { head_yaw_delta: -c.head_yaw_delta, wrist_flexion: -c.wrist_flexion, ..*c })
                    .collect(),
            )
            .unwrap();
            let a = estimate_intent(&w, &est()).unwrap();
            let b = estimate_intent(&mirrored, &est()).unwrap();
            prop_assert_eq!(a.prob(Maneuver::TurnLeft), b.prob(Maneuver::TurnRight));
            prop_assert_eq!(a.prob(Maneuver::TurnRight), b.prob(Maneuver::TurnLeft));
            prop_assert_eq!(a.prob(Maneuver::MaintainCourse), b.prob(Maneuver::MaintainCourse));
            prop_assert_eq!(a.prob(Maneuver::Brake), b.prob(Maneuver::Brake));
            prop_assert_eq!(a.prob(Maneuver::Accelerate), b.prob(Maneuver::Accelerate));
        }

        #[test]
        fn deterministic(w in arb_window()) {
            let a = estimate_intent(&w, &est()).unwrap();
            let b = estimate_intent(&w, &est()).unwrap();
            prop_assert_eq!(a.probs().map(f64::to_bits), b.probs().map(f64::to_bits));
        }
    }
}

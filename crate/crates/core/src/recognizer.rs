//! Windowed three-segment gesture recognizer.
//!
//! A repetition is Down, Up, Down. The first Down is the entry into
//! `AwaitUp`; the Up and the closing Down each have to arrive within
//! `window_size` frames of the segment start. Up to `grace_frames`
//! consecutive frames that fit neither pose are tolerated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{classify_pose, Arm, ConstantsError, ExerciseKind, PoseClass, RuleConstants};
use crate::skeleton::SkeletonFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Idle,
    AwaitUp,
    AwaitDownAgain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    Timeout,
    InvalidMovement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum GestureEvent {
    InProgress,
    Completed,
    Aborted(AbortReason),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RecognizerError {
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error("frame {index}: timestamp {timestamp} does not follow {previous}")]
    OutOfOrder { index: usize, timestamp: f64, previous: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recognizer {
    exercise: ExerciseKind,
    arm: Arm,
    consts: RuleConstants,
    segment: Segment,
    frames_in_segment: u32,
    invalid_run: u32,
}

impl Recognizer {
    pub fn new(exercise: ExerciseKind, arm: Arm, consts: RuleConstants) -> Result<Self, RecognizerError> {
        consts.validate()?;
        Ok(Self { exercise, arm, consts, segment: Segment::Idle, frames_in_segment: 0, invalid_run: 0 })
    }

    pub fn exercise(&self) -> ExerciseKind {
        self.exercise
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn constants(&self) -> &RuleConstants {
        &self.consts
    }

    pub fn segment(&self) -> Segment {
        self.segment
    }

    pub fn frames_in_segment(&self) -> u32 {
        self.frames_in_segment
    }

    pub fn invalid_run(&self) -> u32 {
        self.invalid_run
    }

    pub fn classify(&self, frame: &SkeletonFrame) -> PoseClass {
        classify_pose(frame, self.exercise, self.arm, &self.consts)
    }

    pub fn feed(&mut self, frame: &SkeletonFrame) -> GestureEvent {
        let pose = self.classify(frame);
        self.feed_pose(pose)
    }

    /// Advances the state machine by one already-classified frame.
    pub fn feed_pose(&mut self, pose: PoseClass) -> GestureEvent {
        let (advance_on, hold_on) = match self.segment {
            Segment::Idle => {
                if pose == PoseClass::Down {
                    self.enter(Segment::AwaitUp);
                }
                return GestureEvent::InProgress;
            }
            Segment::AwaitUp => (PoseClass::Up, PoseClass::Down),
            Segment::AwaitDownAgain => (PoseClass::Down, PoseClass::Up),
        };

        if pose == advance_on {
            return match self.segment {
                Segment::AwaitUp => {
                    self.enter(Segment::AwaitDownAgain);
                    GestureEvent::InProgress
                }
                _ => {
                    self.enter(Segment::Idle);
                    GestureEvent::Completed
                }
            };
        }

        if pose == hold_on {
            self.invalid_run = 0;
        } else {
            self.invalid_run += 1;
            if self.invalid_run > self.consts.grace_frames {
                self.enter(Segment::Idle);
                return GestureEvent::Aborted(AbortReason::InvalidMovement);
            }
        }
        self.frames_in_segment += 1;
        if self.frames_in_segment >= self.consts.window_size {
            self.enter(Segment::Idle);
            return GestureEvent::Aborted(AbortReason::Timeout);
        }
        GestureEvent::InProgress
    }

    pub fn reset(&mut self) {
        self.enter(Segment::Idle);
    }

    fn enter(&mut self, segment: Segment) {
        self.segment = segment;
        self.frames_in_segment = 0;
        self.invalid_run = 0;
    }
}

/// Folds a stream through a fresh recognizer and returns the non-trivial
/// events with their frame indices.
pub fn run_stream(
    exercise: ExerciseKind,
    arm: Arm,
    consts: RuleConstants,
    frames: &[SkeletonFrame],
) -> Result<Vec<(usize, GestureEvent)>, RecognizerError> {
    let mut recognizer = Recognizer::new(exercise, arm, consts)?;
    let mut events = Vec::new();
    let mut previous: Option<f64> = None;
    for (index, frame) in frames.iter().enumerate() {
        if let Some(prev) = previous {
            if frame.timestamp <= prev {
                return Err(RecognizerError::OutOfOrder { index, timestamp: frame.timestamp, previous: prev });
            }
        }
        previous = Some(frame.timestamp);
        match recognizer.feed(frame) {
            GestureEvent::InProgress => {}
            event => events.push((index, event)),
        }
    }
    Ok(events)
}

pub fn count_completed(events: &[(usize, GestureEvent)]) -> usize {
    events.iter().filter(|(_, e)| *e == GestureEvent::Completed).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PoseClass::{Down, Invalid, Up};

    fn recognizer(window: u32, grace: u32) -> Recognizer {
        let consts = RuleConstants { window_size: window, grace_frames: grace, ..Default::default() };
        Recognizer::new(ExerciseKind::ElbowFlexExt, Arm::Right, consts).unwrap()
    }

    fn run(r: &mut Recognizer, poses: &[PoseClass]) -> Vec<(usize, GestureEvent)> {
        poses
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| match r.feed_pose(p) {
                GestureEvent::InProgress => None,
                e => Some((i, e)),
            })
            .collect()
    }

    #[test]
    fn constructors() {
        for (ex, arm) in [(ExerciseKind::ElbowFlexExt, Arm::Right), (ExerciseKind::ShoulderFlex, Arm::Left)] {
            let r = Recognizer::new(ex, arm, RuleConstants::default()).unwrap();
            assert_eq!((r.segment(), r.frames_in_segment(), r.invalid_run()), (Segment::Idle, 0, 0));
        }
        let zero = RuleConstants { window_size: 0, ..Default::default() };
        assert!(Recognizer::new(ExerciseKind::ElbowFlexExt, Arm::Right, zero).is_err());
    }

    #[test]
    fn down_up_down_completes() {
        let mut r = recognizer(100, 5);
        let events = run(&mut r, &[Invalid, Down, Down, Up, Up, Down]);
        assert_eq!(events, vec![(5, GestureEvent::Completed)]);
        assert_eq!(r.segment(), Segment::Idle);
    }

    #[test]
    fn resting_down_times_out_every_window_after_entry() {
        let mut r = recognizer(100, 5);
        let events = run(&mut r, &vec![Down; 1000]);
        let frames: Vec<usize> = events.iter().map(|(i, _)| *i).collect();
        // entry at 0, timeout 100 frames later, re-entry on the next frame
        let expected: Vec<usize> = (0..).map(|k| 100 + 101 * k).take_while(|&i| i < 1000).collect();
        assert_eq!(frames, expected);
        assert!(events.iter().all(|(_, e)| *e == GestureEvent::Aborted(AbortReason::Timeout)));
    }

    #[test]
    fn up_segment_longer_than_window_times_out() {
        for (up_frames, completes) in [(99, true), (100, true), (101, false), (120, false)] {
            let mut r = recognizer(100, 5);
            let mut poses = vec![Down; 15];
            poses.extend(vec![Up; up_frames]);
            poses.extend(vec![Down; 38]);
            let events = run(&mut r, &poses);
            assert_eq!(count_completed(&events) == 1, completes, "{up_frames}");
            if !completes {
                assert_eq!(events[0], (15 + 100, GestureEvent::Aborted(AbortReason::Timeout)));
            }
        }
    }

    #[test]
    fn grace_budget() {
        let mut r = recognizer(100, 2);
        let ok = run(&mut r, &[Down, Invalid, Invalid, Down, Up, Invalid, Invalid, Up, Down]);
        assert_eq!(ok, vec![(8, GestureEvent::Completed)]);

        let mut r = recognizer(100, 2);
        let bad = run(&mut r, &[Down, Up, Invalid, Invalid, Invalid, Down]);
        assert_eq!(bad, vec![(4, GestureEvent::Aborted(AbortReason::InvalidMovement))]);
        assert_eq!(r.segment(), Segment::AwaitUp);
    }

    #[test]
    fn invalid_frames_count_toward_window() {
        let mut r = recognizer(10, 100);
        let mut poses = vec![Down, Up];
        poses.extend(vec![Invalid; 10]);
        let events = run(&mut r, &poses);
        assert_eq!(events, vec![(11, GestureEvent::Aborted(AbortReason::Timeout))]);
    }

    #[test]
    fn run_stream_rejects_out_of_order() {
        use crate::skeleton::tests::frame_with;
        use crate::skeleton::Vec3;
        let frames = vec![frame_with(1.0, |_| Vec3::default()), frame_with(1.0, |_| Vec3::default())];
        let err = run_stream(ExerciseKind::ElbowFlexExt, Arm::Right, RuleConstants::default(), &frames).unwrap_err();
        assert!(matches!(err, RecognizerError::OutOfOrder { index: 1, .. }));
        assert_eq!(run_stream(ExerciseKind::ElbowFlexExt, Arm::Right, RuleConstants::default(), &[]).unwrap(), vec![]);
    }

    fn poses() -> impl Strategy<Value = Vec<PoseClass>> {
        prop::collection::vec(prop_oneof![3 => Just(Down), 3 => Just(Up), 1 => Just(Invalid)], 0..600)
    }

    proptest! {
        #[test]
        fn reachable_states_respect_bounds(seq in poses(), window in 1u32..40, grace in 0u32..6) {
            let mut r = recognizer(window, grace);
            for p in seq {
                r.feed_pose(p);
                prop_assert!(r.frames_in_segment() <= window);
                prop_assert!(r.invalid_run() <= grace);
                if r.segment() == Segment::Idle {
                    prop_assert_eq!((r.frames_in_segment(), r.invalid_run()), (0, 0));
                }
            }
        }

        #[test]
        fn completions_are_separated_by_up(seq in poses()) {
            let mut r = recognizer(30, 3);
            let mut seen_up = false;
            for p in seq {
                seen_up |= p == Up;
                if r.feed_pose(p) == GestureEvent::Completed {
                    prop_assert!(seen_up);
                    seen_up = false;
                }
            }
        }

        #[test]
        fn long_invalid_run_aborts(prefix in poses(), grace in 0u32..6) {
            let mut r = recognizer(1000, grace);
            for p in prefix {
                r.feed_pose(p);
            }
            if r.segment() != Segment::Idle {
                let mut aborted = false;
                for _ in 0..=grace {
                    if r.feed_pose(Invalid) == GestureEvent::Aborted(AbortReason::InvalidMovement) {
                        aborted = true;
                    }
                }
                prop_assert!(aborted, "run of {} invalid frames did not abort", grace + 1);
            }
        }
    }
}

//! Headless session driver: frames feed the recognizer, gesture events feed
//! the game, and the hook ticks once per frame on the same clock.
//!
//! The CLI `simulate` command and the network service both run sessions
//! through [`SessionDriver`], so a stream replayed through either produces
//! the same [`SessionReport`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Advance, GameError, GameSession, Jewel, Outcome, SubLevelId, TickReport};
use crate::recognizer::{GestureEvent, Recognizer, RecognizerError};
use crate::rules::{Arm, ExerciseKind, RuleConstants};
use crate::skeleton::{validate_frame, FrameDefect, SkeletonFrame, ValidationStatus};

/// Hook ticks allowed per pending drop when settling at stream end.
const SETTLE_TICKS_PER_DROP: u64 = 2 * crate::game::MAX_EXTENSION_STEPS as u64 + 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub exercise: ExerciseKind,
    pub arm: Arm,
    pub repetitions: u32,
    #[serde(default)]
    pub constants: RuleConstants,
    pub session_seed: u64,
    /// First sub-level played.
    pub start: SubLevelId,
}

impl SessionConfig {
    pub fn new(exercise: ExerciseKind, arm: Arm, repetitions: u32, session_seed: u64) -> Self {
        Self { exercise, arm, repetitions, constants: RuleConstants::default(), session_seed, start: SubLevelId::FIRST }
    }
}

/// Where a profile resumes: the sub-level after its best one.
pub fn resume_point(progress: Option<SubLevelId>) -> SubLevelId {
    match progress {
        None => SubLevelId::FIRST,
        Some(best) => best.next().unwrap_or(SubLevelId::LAST),
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Recognizer(#[from] RecognizerError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("frame {index}: {defect}")]
    BadFrame { index: usize, defect: FrameDefect },
    #[error("frame {index}: timestamp {timestamp} does not follow {previous}")]
    OutOfOrder { index: usize, timestamp: f64, previous: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub frame: usize,
    #[serde(flatten)]
    pub event: GestureEvent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub level: u8,
    pub stage: u8,
    pub outcome: Outcome,
    pub score: u32,
    pub nofer: u32,
}

/// Everything one processed frame caused.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub event: GestureEvent,
    pub tick: TickReport,
    /// Set when this frame's tick decided the attempt.
    pub decided: Option<(AttemptRecord, Advance)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub level: u8,
    pub stage: u8,
    pub outcome: Outcome,
    pub score: u32,
    pub nofer: u32,
    pub game_complete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionReport {
    pub exercise: ExerciseKind,
    pub arm: Arm,
    pub n: u32,
    pub seed: u64,
    pub frames: usize,
    pub events: Vec<EventRecord>,
    pub attempts: Vec<AttemptRecord>,
    #[serde(rename = "final")]
    pub final_: FinalSummary,
}

impl SessionReport {
    pub fn to_machine(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug)]
pub struct SessionDriver {
    config: SessionConfig,
    recognizer: Recognizer,
    game: GameSession,
    frames: usize,
    previous_timestamp: Option<f64>,
    events: Vec<EventRecord>,
    attempts: Vec<AttemptRecord>,
    best_won: Option<SubLevelId>,
}

impl SessionDriver {
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        let recognizer = Recognizer::new(config.exercise, config.arm, config.constants)?;
        let game = GameSession::new(config.repetitions, config.start, config.session_seed)?;
        Ok(Self {
            config,
            recognizer,
            game,
            frames: 0,
            previous_timestamp: None,
            events: Vec::new(),
            attempts: Vec::new(),
            best_won: None,
        })
    }

    /// Replaces the first attempt's generated layout.
    pub fn with_layout(mut self, jewels: Vec<Jewel>) -> Self {
        self.game = self.game.with_layout(jewels);
        self
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
    pub fn recognizer(&self) -> &Recognizer {
        &self.recognizer
    }
    pub fn game(&self) -> &GameSession {
        &self.game
    }
    pub fn frames_processed(&self) -> usize {
        self.frames
    }
    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }
    pub fn attempts(&self) -> &[AttemptRecord] {
        &self.attempts
    }
    /// Highest sub-level won in this session.
    pub fn best_won(&self) -> Option<SubLevelId> {
        self.best_won
    }

    /// Checks a frame without consuming it.
    pub fn admit(&self, frame: &SkeletonFrame) -> Result<(), SessionError> {
        frame.check().map_err(|defect| SessionError::BadFrame { index: self.frames, defect })?;
        if let Some(previous) = self.previous_timestamp {
            if frame.timestamp <= previous {
                return Err(SessionError::OutOfOrder { index: self.frames, timestamp: frame.timestamp, previous });
            }
        }
        Ok(())
    }

    /// One frame: recognizer feed, event injection, one hook tick.
    pub fn step(&mut self, frame: &SkeletonFrame) -> Result<StepOutput, SessionError> {
        self.admit(frame)?;
        let index = self.frames;
        self.frames += 1;
        self.previous_timestamp = Some(frame.timestamp);

        let event = self.recognizer.feed(frame);
        if event != GestureEvent::InProgress {
            self.events.push(EventRecord { frame: index, event });
        }
        if self.game.is_game_complete() {
            return Ok(StepOutput { event, tick: TickReport::default(), decided: None });
        }
        self.game.on_gesture_event(event)?;
        let tick = self.game.tick_hook()?;
        let decided = match tick.decided {
            Some(_) => Some(self.conclude_attempt()?),
            None => None,
        };
        Ok(StepOutput { event, tick, decided })
    }

    fn conclude_attempt(&mut self) -> Result<(AttemptRecord, Advance), SessionError> {
        let sub = self.game.sublevel();
        let record = AttemptRecord {
            level: sub.level,
            stage: sub.stage,
            outcome: self.game.outcome(),
            score: self.game.collected_score(),
            nofer: self.game.nofer(),
        };
        if record.outcome == Outcome::Won {
            self.best_won = Some(self.best_won.map_or(sub, |b| b.max(sub)));
        }
        self.attempts.push(record);
        let advance = self.game.advance_after_outcome()?;
        Ok((record, advance))
    }

    /// Lets queued drops finish once the stream has ended. The clock keeps
    /// running without new frames; no recognizer input is consumed.
    pub fn finish(&mut self) -> Result<Vec<(AttemptRecord, Advance)>, SessionError> {
        let mut decided = Vec::new();
        if self.game.is_game_complete() {
            return Ok(decided);
        }
        let budget = SETTLE_TICKS_PER_DROP * (self.game.pending_drops() as u64 + 1);
        for _ in 0..budget {
            if self.game.hook_idle() {
                break;
            }
            if self.game.tick_hook()?.decided.is_some() {
                decided.push(self.conclude_attempt()?);
                break;
            }
        }
        Ok(decided)
    }

    /// The attempt a reader cares about: the running one if anything has
    /// happened in it, otherwise the last decided one.
    pub fn final_summary(&self) -> FinalSummary {
        let game_complete = self.game.is_game_complete();
        let running_active = self.game.nofer() > 0 || self.game.collected_score() > 0;
        match self.attempts.last() {
            Some(last) if game_complete || !running_active => FinalSummary {
                level: last.level,
                stage: last.stage,
                outcome: last.outcome,
                score: last.score,
                nofer: last.nofer,
                game_complete,
            },
            _ => {
                let sub = self.game.sublevel();
                FinalSummary {
                    level: sub.level,
                    stage: sub.stage,
                    outcome: self.game.outcome(),
                    score: self.game.collected_score(),
                    nofer: self.game.nofer(),
                    game_complete,
                }
            }
        }
    }

    pub fn report(&self) -> SessionReport {
        SessionReport {
            exercise: self.config.exercise,
            arm: self.config.arm,
            n: self.config.repetitions,
            seed: self.config.session_seed,
            frames: self.frames,
            events: self.events.clone(),
            attempts: self.attempts.clone(),
            final_: self.final_summary(),
        }
    }
}

/// Runs a whole stream and settles outstanding drops.
pub fn simulate(
    config: SessionConfig,
    layout: Option<Vec<Jewel>>,
    frames: &[SkeletonFrame],
) -> Result<SessionDriver, SessionError> {
    let mut driver = SessionDriver::new(config)?;
    if let Some(jewels) = layout {
        driver = driver.with_layout(jewels);
    }
    for frame in frames {
        driver.step(frame)?;
    }
    driver.finish()?;
    Ok(driver)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    /// Frame on which the repetition completed.
    pub frame: usize,
    /// First frame of the opening down segment.
    pub start_frame: usize,
    pub down: f64,
    pub up: f64,
    pub down_return: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub frame: usize,
    pub reason: crate::recognizer::AbortReason,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningSummary {
    pub status: ValidationStatus,
    pub note: String,
    pub count: usize,
    pub first_frame: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub exercise: ExerciseKind,
    pub arm: Arm,
    pub frames: usize,
    pub repetitions: Vec<Repetition>,
    pub aborts: Vec<AbortRecord>,
    pub warnings: Vec<WarningSummary>,
}

impl RecognitionReport {
    pub fn to_machine(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Recognizes a stream and measures each repetition's segments.
///
/// Durations run from the first frame of a segment to the first frame of
/// the next one. The closing down segment lasts while the pose stays Down
/// after completion; past the last frame, one more frame period is assumed.
pub fn recognize(
    exercise: ExerciseKind,
    arm: Arm,
    consts: RuleConstants,
    frames: &[SkeletonFrame],
) -> Result<RecognitionReport, RecognizerError> {
    use crate::recognizer::Segment;
    use crate::rules::PoseClass;

    let mut recognizer = Recognizer::new(exercise, arm, consts)?;
    let time_at = |i: usize| -> f64 {
        if i < frames.len() {
            frames[i].timestamp
        } else {
            let last = frames.len() - 1;
            let period = if last > 0 { frames[last].timestamp - frames[last - 1].timestamp } else { 0.0 };
            frames[last].timestamp + period * (i - last) as f64
        }
    };

    let mut poses = Vec::with_capacity(frames.len());
    let mut events = Vec::new();
    let mut seg_starts: Vec<(usize, usize)> = Vec::new();
    let mut down_start = 0;
    let mut up_start = 0;
    let mut previous: Option<f64> = None;
    let mut warnings: Vec<WarningSummary> = Vec::new();

    for (index, frame) in frames.iter().enumerate() {
        if let Some(prev) = previous {
            if frame.timestamp <= prev {
                return Err(RecognizerError::OutOfOrder { index, timestamp: frame.timestamp, previous: prev });
            }
        }
        previous = Some(frame.timestamp);

        let validation = validate_frame(frame);
        for note in validation.notes {
            match warnings.iter_mut().find(|w| w.note == note && w.status == validation.status) {
                Some(w) => w.count += 1,
                None => warnings.push(WarningSummary { status: validation.status, note, count: 1, first_frame: index }),
            }
        }

        let pose = recognizer.classify(frame);
        poses.push(pose);
        let before = recognizer.segment();
        let event = recognizer.feed_pose(pose);
        match (before, recognizer.segment()) {
            (Segment::Idle, Segment::AwaitUp) => down_start = index,
            (Segment::AwaitUp, Segment::AwaitDownAgain) => up_start = index,
            _ => {}
        }
        if event == GestureEvent::Completed {
            seg_starts.push((down_start, up_start));
        }
        if event != GestureEvent::InProgress {
            events.push((index, event));
        }
    }

    let mut repetitions = Vec::new();
    let mut aborts = Vec::new();
    let mut completed = seg_starts.into_iter();
    for (index, event) in events {
        match event {
            GestureEvent::Completed => {
                let (start, up) = completed.next().expect("one start per completion");
                let end = (index..frames.len()).find(|&i| poses[i] != PoseClass::Down).unwrap_or(frames.len());
                let down = time_at(up) - time_at(start);
                let upd = time_at(index) - time_at(up);
                let ret = time_at(end) - time_at(index);
                repetitions.push(Repetition {
                    frame: index,
                    start_frame: start,
                    down,
                    up: upd,
                    down_return: ret,
                    t: down + upd + ret,
                });
            }
            GestureEvent::Aborted(reason) => aborts.push(AbortRecord { frame: index, reason }),
            GestureEvent::InProgress => {}
        }
    }

    Ok(RecognitionReport { exercise, arm, frames: frames.len(), repetitions, aborts, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Jewel;
    use crate::synth::{synthesize, SynthSpec};

    fn reps(n: u32) -> Vec<SkeletonFrame> {
        let mut spec = SynthSpec::new(ExerciseKind::ElbowFlexExt, Arm::Right);
        spec.repetitions = n;
        synthesize(&spec).unwrap()
    }

    fn centered_layout() -> Vec<Jewel> {
        // one jewel under every swing position the hook can drop from
        (0..=20).map(|i| Jewel::new(0, 2, -1.0 + 0.1 * i as f64, 0.6).unwrap()).collect()
    }

    #[test]
    fn table_six_repetition_measures_three_point_two_seven() {
        let report = recognize(ExerciseKind::ElbowFlexExt, Arm::Right, RuleConstants::default(), &reps(1)).unwrap();
        assert_eq!(report.repetitions.len(), 1);
        let rep = &report.repetitions[0];
        assert!((rep.t - 3.27).abs() < 0.01, "t = {}", rep.t);
        assert!((rep.down - 0.5).abs() < 1e-9);
        assert!((rep.up - 1.5).abs() < 1e-9);
        assert!(report.aborts.is_empty());
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn empty_stream_reports_nothing() {
        let report = recognize(ExerciseKind::ShoulderFlex, Arm::Left, RuleConstants::default(), &[]).unwrap();
        assert_eq!((report.frames, report.repetitions.len(), report.aborts.len()), (0, 0, 0));
    }

    #[test]
    fn three_hits_win_at_n_three() {
        let config = SessionConfig::new(ExerciseKind::ElbowFlexExt, Arm::Right, 3, 7);
        let driver = simulate(config, Some(centered_layout()), &reps(3)).unwrap();
        let summary = driver.final_summary();
        assert_eq!((summary.outcome, summary.nofer), (Outcome::Won, 3));
        assert!(summary.score >= 30);
        assert_eq!(driver.best_won(), Some(SubLevelId::FIRST));
        assert_eq!(driver.game().sublevel(), SubLevelId::new(1, 2).unwrap());
    }

    #[test]
    fn two_of_three_reps_stay_ongoing() {
        let config = SessionConfig::new(ExerciseKind::ElbowFlexExt, Arm::Right, 3, 7);
        let driver = simulate(config, None, &reps(2)).unwrap();
        let summary = driver.final_summary();
        assert_eq!((summary.outcome, summary.nofer), (Outcome::Ongoing, 2));
        assert!(driver.attempts().is_empty());
    }

    #[test]
    fn frames_must_advance_in_time() {
        let frames = reps(1);
        let mut driver = SessionDriver::new(SessionConfig::new(ExerciseKind::ElbowFlexExt, Arm::Right, 1, 0)).unwrap();
        driver.step(&frames[1]).unwrap();
        assert!(matches!(driver.step(&frames[0]), Err(SessionError::OutOfOrder { index: 1, .. })));
        assert_eq!(driver.frames_processed(), 1);
    }

    #[test]
    fn resume_point_follows_progress() {
        assert_eq!(resume_point(None), SubLevelId::FIRST);
        assert_eq!(resume_point(Some(SubLevelId::new(1, 12).unwrap())), SubLevelId::new(2, 1).unwrap());
        assert_eq!(resume_point(Some(SubLevelId::LAST)), SubLevelId::LAST);
    }

    #[test]
    fn report_is_stable() {
        let config = SessionConfig::new(ExerciseKind::ElbowFlexExt, Arm::Right, 2, 11);
        let a = simulate(config.clone(), None, &reps(4)).unwrap().report().to_machine();
        let b = simulate(config, None, &reps(4)).unwrap().report().to_machine();
        assert_eq!(a, b);
    }
}

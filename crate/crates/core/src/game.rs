//! Game core: jewel scoring and layouts, the pendulum hook, exercise
//! counting and the win/lose decision for one sub-level attempt.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recognizer::GestureEvent;

pub const JEWEL_INDEX_MAX: u8 = 5;
pub const JEWEL_SIZE_MAX: u8 = 2;
pub const JEWELS_PER_LAYOUT: usize = 8;
/// Total layout value floor: covers N = 20 at minimum-value hits.
pub const LAYOUT_VALUE_FLOOR: u32 = 20 * 10;

pub const ANCHOR_Y: f64 = 2.5;
pub const EXTENSION_STEP: f64 = 0.01;
pub const MAX_EXTENSION_STEPS: u32 = 200;
pub const SWING_AMPLITUDE: f64 = 1.0;
pub const SWING_PERIOD_TICKS: u64 = 120;
/// Horizontal hit radius by jewel size.
pub const HIT_RADIUS: [f64; 3] = [0.15, 0.25, 0.35];

/// Horizontal band jewels are generated in; at the swing extremes the hook
/// is out of range of every jewel.
const LAYOUT_X_RANGE: (f64, f64) = (-0.6, 0.6);
/// The hook tip bottoms out at ANCHOR_Y - 2.0, so generated jewels sit in
/// the band it can reach.
const LAYOUT_Y_RANGE: (f64, f64) = (0.5, 0.6);

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GameError {
    #[error("jewel index {0} outside 0..=5")]
    JewelIndex(u8),
    #[error("jewel size {0} outside 0..=2")]
    JewelSize(u8),
    #[error("sub-level {level}-{stage} does not exist")]
    SubLevel { level: u8, stage: u8 },
    #[error("repetition count must be at least 1")]
    Repetitions,
    #[error("attempt already decided ({0})")]
    Decided(Outcome),
    #[error("attempt still ongoing")]
    NotDecided,
    #[error("game already complete")]
    GameComplete,
}

/// Points for a jewel: (size + 1) * 10 + index * 10.
pub fn jewel_value(index: u8, size: u8) -> Result<u32, GameError> {
    if index > JEWEL_INDEX_MAX {
        return Err(GameError::JewelIndex(index));
    }
    if size > JEWEL_SIZE_MAX {
        return Err(GameError::JewelSize(size));
    }
    Ok((size as u32 + 1) * 10 + index as u32 * 10)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jewel {
    pub index: u8,
    pub size: u8,
    pub x: f64,
    pub y: f64,
    pub collected: bool,
}

impl Jewel {
    pub fn new(index: u8, size: u8, x: f64, y: f64) -> Result<Self, GameError> {
        jewel_value(index, size)?;
        Ok(Self { index, size, x, y, collected: false })
    }

    pub fn value(&self) -> u32 {
        (self.size as u32 + 1) * 10 + self.index as u32 * 10
    }

    pub fn hit_radius(&self) -> f64 {
        HIT_RADIUS[self.size as usize]
    }

    pub fn is_valid(&self) -> bool {
        self.index <= JEWEL_INDEX_MAX
            && self.size <= JEWEL_SIZE_MAX
            && (-1.0..=1.0).contains(&self.x)
            && (0.0..=0.6).contains(&self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubLevelId {
    pub level: u8,
    pub stage: u8,
}

impl SubLevelId {
    pub const FIRST: SubLevelId = SubLevelId { level: 1, stage: 1 };
    pub const LAST: SubLevelId = SubLevelId { level: 2, stage: 12 };

    pub fn new(level: u8, stage: u8) -> Result<Self, GameError> {
        if (1..=2).contains(&level) && (1..=12).contains(&stage) {
            Ok(Self { level, stage })
        } else {
            Err(GameError::SubLevel { level, stage })
        }
    }

    pub fn next(self) -> Option<SubLevelId> {
        match (self.level, self.stage) {
            (_, s) if s < 12 => Some(SubLevelId { level: self.level, stage: s + 1 }),
            (1, 12) => Some(SubLevelId { level: 2, stage: 1 }),
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = SubLevelId> {
        (1..=2).flat_map(|level| (1..=12).map(move |stage| SubLevelId { level, stage }))
    }
}

impl fmt::Display for SubLevelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.level, self.stage)
    }
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn round_mm(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Deterministic layout of eight jewels. Level 1 ignores `session_seed`
/// so its stages look the same in every session.
pub fn generate_layout(sublevel: SubLevelId, session_seed: u64) -> Vec<Jewel> {
    let mut seed = mix(((sublevel.level as u64) << 8) | sublevel.stage as u64);
    if sublevel.level >= 2 {
        seed = mix(seed ^ mix(session_seed));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut jewels: Vec<Jewel> = (0..JEWELS_PER_LAYOUT)
        .map(|_| Jewel {
            index: rng.gen_range(0..=JEWEL_INDEX_MAX),
            size: rng.gen_range(0..=JEWEL_SIZE_MAX),
            x: round_mm(rng.gen_range(LAYOUT_X_RANGE.0..=LAYOUT_X_RANGE.1)),
            y: round_mm(rng.gen_range(LAYOUT_Y_RANGE.0..=LAYOUT_Y_RANGE.1)),
            collected: false,
        })
        .collect();

    // Raise the cheapest jewel until the floor is met.
    while jewels.iter().map(Jewel::value).sum::<u32>() < LAYOUT_VALUE_FLOOR {
        let cheapest = jewels.iter_mut().min_by_key(|j| j.value()).expect("layout is never empty");
        if cheapest.size < JEWEL_SIZE_MAX {
            cheapest.size += 1;
        } else {
            cheapest.index += 1;
        }
    }
    jewels
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HookPhase {
    Swinging,
    Extending,
    Retracting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HookState {
    pub anchor_x: f64,
    pub anchor_y: f64,
    /// Extension in whole steps of `EXTENSION_STEP`.
    pub steps: u32,
    pub phase: HookPhase,
    pub tick: u64,
}

impl Default for HookState {
    fn default() -> Self {
        Self { anchor_x: 0.0, anchor_y: ANCHOR_Y, steps: 0, phase: HookPhase::Swinging, tick: 0 }
    }
}

impl HookState {
    pub fn extension(&self) -> f64 {
        self.steps as f64 * EXTENSION_STEP
    }

    pub fn tip_y(&self) -> f64 {
        self.anchor_y - self.extension()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ongoing,
    Won,
    Lost,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ongoing => "ongoing",
            Outcome::Won => "won",
            Outcome::Lost => "lost",
        })
    }
}

/// Win needs at least N exercises and N * 10 points; losing needs all 2N
/// exercises spent below that score.
pub fn evaluate_outcome(nofer: u32, collected_score: u32, n: u32) -> Outcome {
    let required = n * 10;
    if nofer >= n && collected_score >= required {
        Outcome::Won
    } else if nofer == 2 * n && collected_score < required {
        Outcome::Lost
    } else {
        Outcome::Ongoing
    }
}

/// What happened during one hook tick.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TickReport {
    /// Index of the jewel collected on this tick.
    pub hit: Option<usize>,
    /// A drop finished its retract on this tick.
    pub drop_resolved: bool,
    /// The attempt was decided on this tick.
    pub decided: Option<Outcome>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Advance {
    NextSubLevel(SubLevelId),
    Retry(SubLevelId),
    GameComplete,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSession {
    repetitions: u32,
    session_seed: u64,
    sublevel: SubLevelId,
    attempt: u32,
    jewels: Vec<Jewel>,
    hook: HookState,
    collected_score: u32,
    nofer: u32,
    pending_drops: u32,
    outcome: Outcome,
    game_complete: bool,
    last_note: Option<String>,
}

impl GameSession {
    pub fn new(repetitions: u32, sublevel: SubLevelId, session_seed: u64) -> Result<Self, GameError> {
        if repetitions < 1 {
            return Err(GameError::Repetitions);
        }
        Ok(Self {
            repetitions,
            session_seed,
            sublevel,
            attempt: 0,
            jewels: generate_layout(sublevel, session_seed),
            hook: HookState::default(),
            collected_score: 0,
            nofer: 0,
            pending_drops: 0,
            outcome: Outcome::Ongoing,
            game_complete: false,
            last_note: None,
        })
    }

    /// Replaces the generated layout of the current attempt.
    pub fn with_layout(mut self, jewels: Vec<Jewel>) -> Self {
        self.jewels = jewels;
        self
    }

    pub fn repetitions(&self) -> u32 {
        self.repetitions
    }
    pub fn required_score(&self) -> u32 {
        self.repetitions * 10
    }
    pub fn session_seed(&self) -> u64 {
        self.session_seed
    }
    pub fn sublevel(&self) -> SubLevelId {
        self.sublevel
    }
    pub fn attempt(&self) -> u32 {
        self.attempt
    }
    pub fn jewels(&self) -> &[Jewel] {
        &self.jewels
    }
    pub fn hook(&self) -> &HookState {
        &self.hook
    }
    pub fn collected_score(&self) -> u32 {
        self.collected_score
    }
    pub fn nofer(&self) -> u32 {
        self.nofer
    }
    pub fn pending_drops(&self) -> u32 {
        self.pending_drops
    }
    pub fn outcome(&self) -> Outcome {
        self.outcome
    }
    pub fn is_game_complete(&self) -> bool {
        self.game_complete
    }
    pub fn last_note(&self) -> Option<&str> {
        self.last_note.as_deref()
    }
    pub fn hook_idle(&self) -> bool {
        self.hook.phase == HookPhase::Swinging && self.pending_drops == 0
    }

    fn ensure_ongoing(&self) -> Result<(), GameError> {
        if self.game_complete {
            return Err(GameError::GameComplete);
        }
        match self.outcome {
            Outcome::Ongoing => Ok(()),
            decided => Err(GameError::Decided(decided)),
        }
    }

    pub fn on_gesture_event(&mut self, event: GestureEvent) -> Result<(), GameError> {
        self.ensure_ongoing()?;
        match event {
            GestureEvent::InProgress => {}
            GestureEvent::Completed if self.nofer < 2 * self.repetitions => {
                self.nofer += 1;
                self.pending_drops += 1;
                self.last_note = None;
            }
            GestureEvent::Completed => {
                self.last_note = Some("exercise budget used up; waiting for the hook".into());
            }
            GestureEvent::Aborted(reason) => {
                self.last_note = Some(format!("repetition aborted: {reason:?}"));
            }
        }
        Ok(())
    }

    /// One simulation tick of the hook.
    pub fn tick_hook(&mut self) -> Result<TickReport, GameError> {
        self.ensure_ongoing()?;
        let mut report = TickReport::default();
        let hook = &mut self.hook;
        match hook.phase {
            HookPhase::Swinging => {
                let angle = 2.0 * PI * (hook.tick % SWING_PERIOD_TICKS) as f64 / SWING_PERIOD_TICKS as f64;
                hook.anchor_x = SWING_AMPLITUDE * angle.sin();
                hook.tick += 1;
                if self.pending_drops > 0 {
                    hook.phase = HookPhase::Extending;
                    hook.steps = 0;
                }
            }
            HookPhase::Extending => {
                hook.steps += 1;
                let (ax, tip) = (hook.anchor_x, hook.tip_y());
                // Among jewels touched on this tick, take the closest one.
                let hit = self
                    .jewels
                    .iter()
                    .enumerate()
                    .filter(|(_, j)| !j.collected && (ax - j.x).abs() <= j.hit_radius() && tip <= j.y)
                    .min_by(|(_, a), (_, b)| (ax - a.x).abs().total_cmp(&(ax - b.x).abs()))
                    .map(|(i, _)| i);
                if let Some(i) = hit {
                    self.jewels[i].collected = true;
                    self.collected_score += self.jewels[i].value();
                    report.hit = Some(i);
                    hook.phase = HookPhase::Retracting;
                } else if hook.steps >= MAX_EXTENSION_STEPS {
                    hook.phase = HookPhase::Retracting;
                }
            }
            HookPhase::Retracting => {
                hook.steps -= 1;
                if hook.steps == 0 {
                    hook.phase = HookPhase::Swinging;
                    self.pending_drops -= 1;
                    report.drop_resolved = true;
                    report.decided = self.decide();
                }
            }
        }
        Ok(report)
    }

    /// Applies the win/lose rule after a drop resolves. A losing verdict
    /// waits until every queued drop has had its chance to score.
    fn decide(&mut self) -> Option<Outcome> {
        match evaluate_outcome(self.nofer, self.collected_score, self.repetitions) {
            Outcome::Won => self.outcome = Outcome::Won,
            Outcome::Lost if self.pending_drops == 0 => self.outcome = Outcome::Lost,
            _ => return None,
        }
        Some(self.outcome)
    }

    pub fn advance_after_outcome(&mut self) -> Result<Advance, GameError> {
        if self.game_complete {
            return Err(GameError::GameComplete);
        }
        let advance = match self.outcome {
            Outcome::Ongoing => return Err(GameError::NotDecided),
            Outcome::Won => match self.sublevel.next() {
                Some(next) => {
                    self.sublevel = next;
                    self.attempt = 0;
                    Advance::NextSubLevel(next)
                }
                None => {
                    self.game_complete = true;
                    return Ok(Advance::GameComplete);
                }
            },
            Outcome::Lost => {
                self.attempt += 1;
                Advance::Retry(self.sublevel)
            }
        };
        let layout_seed = self.session_seed.wrapping_add(self.attempt as u64);
        self.jewels = generate_layout(self.sublevel, layout_seed);
        self.hook = HookState { tick: self.hook.tick, ..HookState::default() };
        self.collected_score = 0;
        self.nofer = 0;
        self.pending_drops = 0;
        self.outcome = Outcome::Ongoing;
        self.last_note = None;
        Ok(advance)
    }
}

//! Deterministic synthetic exercise streams.
//!
//! Each repetition is built from three segments whose boundaries sit on the
//! Down/Up classification crossings:
//!
//! 1. down-hold: rest with the arm hanging, then the rise up to the
//!    horizontal crossing (every frame is a Down pose);
//! 2. up-transition+hold: above the crossing, rise to the peak, hold, and
//!    come back to the crossing (every frame is an Up pose);
//! 3. down-return: from the crossing back to rest (Down poses).
//!
//! So segment 1 is what the recognizer's `AwaitUp` window sees and segment
//! 2 is its `AwaitDownAgain` window. Frames are sampled at segment
//! mid-points and never land exactly on a crossing.
//!
//! Left-arm streams are the mirror image of the right-arm stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{Arm, ExerciseKind, PoseClass, RuleConstants};
use crate::skeleton::{mirror_frame, JointId, SkeletonFrame, Vec3};

/// Upper-arm abduction of the exercising arm, degrees.
const UPPER_ARM_ABDUCTION_DEG: f64 = 5.0;
/// Outward forearm angle at full extension, degrees. Stays inside the
/// default 15 degree carrying-angle cone.
const FOREARM_CARRY_DEG: f64 = 8.0;
/// Outward tilt of the straight arm during shoulder flexion, degrees.
const SHOULDER_PLANE_TILT_DEG: f64 = 5.0;
const ELBOW_PEAK_DEG: f64 = 140.0;
const SHOULDER_PEAK_DEG: f64 = 165.0;
/// Fraction of segment 1 spent at rest before the rise.
const REST_FRACTION: f64 = 0.5;
/// Fraction of segment 2 spent rising to (and descending from) the peak.
const PEAK_RAMP_FRACTION: f64 = 0.3;
const WRIST_RATIO: f64 = 0.8;
const STANDING_DISTANCE: f64 = 1.4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyScale {
    pub upper_arm: f64,
    pub forearm: f64,
}

impl Default for BodyScale {
    fn default() -> Self {
        Self { upper_arm: 0.28, forearm: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Defect {
    /// Hand pushed outside the allowed X window for frames `start..end`
    /// (stream frame indices).
    TooWideX { start: usize, end: usize },
    /// Elbow exercise only: the hand is held above shoulder height + k
    /// during the peak hold of every repetition.
    OverheadBeyondK,
    /// Extra time held at the peak in every repetition.
    StallInUp { seconds: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub exercise: ExerciseKind,
    pub arm: Arm,
    pub fps: f64,
    /// (down-hold, up-transition+hold, down-return) in seconds.
    pub segment_durations: [f64; 3],
    pub repetitions: u32,
    pub body: BodyScale,
    /// Uniform jitter amplitude applied to every coordinate (m).
    pub noise_amp: f64,
    pub defects: Vec<Defect>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(exercise: ExerciseKind, arm: Arm) -> Self {
        Self {
            exercise,
            arm,
            fps: 30.0,
            segment_durations: [0.5, 1.5, 1.27],
            repetitions: 1,
            body: BodyScale::default(),
            noise_amp: 0.0,
            defects: Vec::new(),
            seed: 0,
        }
    }

    /// Frame counts of the three segments, including any stall.
    pub fn segment_frames(&self) -> [usize; 3] {
        let frames = |secs: f64| ((secs * self.fps).round() as usize).max(1);
        let stall: f64 = self
            .defects
            .iter()
            .map(|d| match d {
                Defect::StallInUp { seconds } => *seconds,
                _ => 0.0,
            })
            .sum();
        let [d1, d2, d3] = self.segment_durations;
        let up = frames(d2) + if stall > 0.0 { (stall * self.fps).round() as usize } else { 0 };
        [frames(d1), up, frames(d3)]
    }

    pub fn total_frames(&self) -> usize {
        self.segment_frames().iter().sum::<usize>() * self.repetitions as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(SynthError::Invalid(format!("fps must be positive, got {}", self.fps)));
        }
        if self.segment_durations.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(SynthError::Invalid("segment durations must be positive".into()));
        }
        if !(self.body.upper_arm > 0.0 && self.body.forearm > 0.0) {
            return Err(SynthError::Invalid("body segment lengths must be positive".into()));
        }
        if !(self.noise_amp >= 0.0 && self.noise_amp.is_finite()) {
            return Err(SynthError::Invalid("noise amplitude must be non-negative".into()));
        }

        let mut ranges: Vec<(usize, usize)> = Vec::new();
        let (mut overhead, mut stalls) = (0, 0);
        for d in &self.defects {
            match *d {
                Defect::TooWideX { start, end } => {
                    if start >= end {
                        return Err(SynthError::Contradictory(format!("empty frame range {start}..{end}")));
                    }
                    if ranges.iter().any(|&(s, e)| start < e && s < end) {
                        return Err(SynthError::Contradictory("overlapping TooWideX ranges".into()));
                    }
                    ranges.push((start, end));
                }
                Defect::OverheadBeyondK => {
                    if self.exercise != ExerciseKind::ElbowFlexExt {
                        return Err(SynthError::Contradictory(
                            "OverheadBeyondK only applies to the elbow exercise".into(),
                        ));
                    }
                    overhead += 1;
                }
                Defect::StallInUp { seconds } => {
                    if !(seconds > 0.0 && seconds.is_finite()) {
                        return Err(SynthError::Invalid("stall duration must be positive".into()));
                    }
                    stalls += 1;
                }
            }
        }
        if overhead > 1 || stalls > 1 {
            return Err(SynthError::Contradictory("defect listed more than once".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error("contradictory defects: {0}")]
    Contradictory(String),
}

fn ease(s: f64) -> f64 {
    (1.0 - (std::f64::consts::PI * s.clamp(0.0, 1.0)).cos()) / 2.0
}

/// Where a frame sits within its repetition.
#[derive(Clone, Copy, Debug)]
struct Phase {
    segment: usize,
    /// Normalized position within the segment, strictly inside (0, 1).
    u: f64,
}

impl Phase {
    /// Exercise angle in degrees: 0 hanging, 90 at the crossing.
    fn angle(&self, peak: f64) -> f64 {
        let u = self.u;
        match self.segment {
            0 => 90.0 * ease((u - REST_FRACTION) / (1.0 - REST_FRACTION)),
            1 => {
                let ramp = (u / PEAK_RAMP_FRACTION).min((1.0 - u) / PEAK_RAMP_FRACTION).min(1.0);
                90.0 + (peak - 90.0) * ease(ramp)
            }
            _ => 90.0 * (1.0 - ease(u / REST_FRACTION)),
        }
    }

    fn at_peak(&self) -> bool {
        self.segment == 1 && self.u >= PEAK_RAMP_FRACTION && self.u <= 1.0 - PEAK_RAMP_FRACTION
    }
}

fn phases(spec: &SynthSpec) -> Vec<Phase> {
    let counts = spec.segment_frames();
    let mut out = Vec::with_capacity(spec.total_frames());
    for _ in 0..spec.repetitions {
        for (segment, &n) in counts.iter().enumerate() {
            out.extend((0..n).map(|i| Phase { segment, u: (i as f64 + 0.5) / n as f64 }));
        }
    }
    out
}

fn side_arm(shoulder: Vec3, body: &BodyScale, sign: f64) -> (Vec3, Vec3, Vec3) {
    let a = UPPER_ARM_ABDUCTION_DEG.to_radians();
    let elbow = shoulder + Vec3::new(sign * a.sin(), -a.cos(), 0.0) * body.upper_arm;
    let c = FOREARM_CARRY_DEG.to_radians();
    let dir = Vec3::new(sign * c.sin(), -c.cos(), 0.0);
    (elbow, elbow + dir * (body.forearm * WRIST_RATIO), elbow + dir * body.forearm)
}

/// Neutral standing pose, symmetric about x = 0, hips at 1.4 m.
fn neutral_pose(body: &BodyScale) -> [Vec3; JointId::COUNT] {
    use JointId::*;
    let z = STANDING_DISTANCE;
    let mut j = [Vec3::default(); JointId::COUNT];
    let mut set = |id: JointId, x: f64, y: f64| j[id.index()] = Vec3::new(x, y, z);
    set(HipCenter, 0.0, 0.0);
    set(Spine, 0.0, 0.12);
    set(ShoulderCenter, 0.0, 0.42);
    set(Head, 0.0, 0.60);
    for (sign, hip, knee, ankle, foot) in
        [(-1.0, HipLeft, KneeLeft, AnkleLeft, FootLeft), (1.0, HipRight, KneeRight, AnkleRight, FootRight)]
    {
        set(hip, sign * 0.08, -0.03);
        set(knee, sign * 0.09, -0.38);
        set(ankle, sign * 0.09, -0.72);
        set(foot, sign * 0.10, -0.78);
    }
    for (sign, shoulder, elbow, wrist, hand) in
        [(-1.0, ShoulderLeft, ElbowLeft, WristLeft, HandLeft), (1.0, ShoulderRight, ElbowRight, WristRight, HandRight)]
    {
        let s = Vec3::new(sign * 0.17, 0.38, z);
        let (e, w, h) = side_arm(s, body, sign);
        j[shoulder.index()] = s;
        j[elbow.index()] = e;
        j[wrist.index()] = w;
        j[hand.index()] = h;
    }
    j
}

/// Right-arm (elbow, wrist, hand) for the given exercise angle.
fn right_arm_pose(spec: &SynthSpec, shoulder: Vec3, angle_deg: f64) -> (Vec3, Vec3, Vec3) {
    let body = &spec.body;
    let t = angle_deg.to_radians();
    match spec.exercise {
        ExerciseKind::ElbowFlexExt => {
            let a = UPPER_ARM_ABDUCTION_DEG.to_radians();
            let elbow = shoulder + Vec3::new(a.sin(), -a.cos(), 0.0) * body.upper_arm;
            // Forearm swings from the carried rest direction toward the
            // sensor (-z) and up; the hand crosses the elbow inward above
            // the horizontal.
            let c = FOREARM_CARRY_DEG.to_radians();
            let dir = Vec3::new(c.sin() * t.cos(), -c.cos() * t.cos(), -t.sin());
            (elbow, elbow + dir * (body.forearm * WRIST_RATIO), elbow + dir * body.forearm)
        }
        ExerciseKind::ShoulderFlex => {
            let b = SHOULDER_PLANE_TILT_DEG.to_radians();
            let dir = Vec3::new(b.sin(), -b.cos() * t.cos(), b.cos() * t.sin());
            let elbow = shoulder + dir * body.upper_arm;
            (
                elbow,
                shoulder + dir * (body.upper_arm + body.forearm * WRIST_RATIO),
                shoulder + dir * (body.upper_arm + body.forearm),
            )
        }
    }
}

fn too_wide_active(spec: &SynthSpec, frame: usize) -> bool {
    spec.defects.iter().any(|d| matches!(*d, Defect::TooWideX { start, end } if (start..end).contains(&frame)))
}

fn overhead_active(spec: &SynthSpec, phase: &Phase) -> bool {
    phase.at_peak() && spec.defects.iter().any(|d| matches!(d, Defect::OverheadBeyondK))
}

pub fn synthesize(spec: &SynthSpec) -> Result<Vec<SkeletonFrame>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = neutral_pose(&spec.body);
    let shoulder = base[JointId::ShoulderRight.index()];
    let peak = match spec.exercise {
        ExerciseKind::ElbowFlexExt => ELBOW_PEAK_DEG,
        ExerciseKind::ShoulderFlex => SHOULDER_PEAK_DEG,
    };
    let k = RuleConstants::default().k_offset;

    let frames = phases(spec)
        .iter()
        .enumerate()
        .map(|(i, phase)| {
            let mut frame = SkeletonFrame::new(i as f64 / spec.fps, base);
            let (elbow, wrist, mut hand) = right_arm_pose(spec, shoulder, phase.angle(peak));
            if too_wide_active(spec, i) {
                hand.x = match spec.exercise {
                    ExerciseKind::ElbowFlexExt => hand.x + 0.8 * spec.body.forearm,
                    ExerciseKind::ShoulderFlex => elbow.x - 0.3 * spec.body.forearm,
                };
            }
            if overhead_active(spec, phase) {
                hand.y = shoulder.y + k + 0.05;
            }
            frame.set_joint(JointId::ElbowRight, elbow);
            frame.set_joint(JointId::WristRight, wrist);
            frame.set_joint(JointId::HandRight, hand);
            if spec.noise_amp > 0.0 {
                for j in JointId::ALL {
                    let p = frame.joint(j);
                    let mut jitter = || rng.gen_range(-spec.noise_amp..=spec.noise_amp);
                    frame.set_joint(j, Vec3::new(p.x + jitter(), p.y + jitter(), p.z + jitter()));
                }
            }
            match spec.arm {
                Arm::Right => frame,
                Arm::Left => mirror_frame(&frame),
            }
        })
        .collect();
    Ok(frames)
}

/// The pose each frame was built to show, derived from the trajectory
/// parameters alone.
pub fn classify_synth_frames(spec: &SynthSpec) -> Vec<PoseClass> {
    phases(spec)
        .iter()
        .enumerate()
        .map(|(i, phase)| {
            if too_wide_active(spec, i) || overhead_active(spec, phase) {
                PoseClass::Invalid
            } else if phase.segment == 1 {
                PoseClass::Up
            } else {
                PoseClass::Down
            }
        })
        .collect()
}

//! Per-frame production rules for the two supported AROM exercises.
//!
//! Every check here is strict and pure: no smoothing, no tolerance. Noise
//! handling belongs to the recognizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{JointId, SkeletonFrame, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub fn opposite(self) -> Arm {
        match self {
            Arm::Left => Arm::Right,
            Arm::Right => Arm::Left,
        }
    }

    pub fn shoulder(self) -> JointId {
        match self {
            Arm::Left => JointId::ShoulderLeft,
            Arm::Right => JointId::ShoulderRight,
        }
    }

    pub fn elbow(self) -> JointId {
        match self {
            Arm::Left => JointId::ElbowLeft,
            Arm::Right => JointId::ElbowRight,
        }
    }

    pub fn hand(self) -> JointId {
        match self {
            Arm::Left => JointId::HandLeft,
            Arm::Right => JointId::HandRight,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Left => "left",
            Arm::Right => "right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExerciseKind {
    #[serde(rename = "elbow")]
    ElbowFlexExt,
    #[serde(rename = "shoulder")]
    ShoulderFlex,
}

impl ExerciseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExerciseKind::ElbowFlexExt => "elbow",
            ExerciseKind::ShoulderFlex => "shoulder",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConstants {
    /// Carrying angle in degrees.
    pub carrying_angle_deg: f64,
    /// How far the hand may rise above the shoulder in the elbow up pose (m).
    pub k_offset: f64,
    /// Per-segment frame budget.
    pub window_size: u32,
    /// Consecutive rule-violating frames tolerated before aborting.
    pub grace_frames: u32,
    /// Reserved; not applied by any rule.
    pub boundary_epsilon: f64,
}

impl Default for RuleConstants {
    fn default() -> Self {
        Self { carrying_angle_deg: 15.0, k_offset: 0.2, window_size: 100, grace_frames: 5, boundary_epsilon: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConstantsError {
    #[error("carrying angle must lie in (0, 45) degrees, got {0}")]
    CarryingAngle(f64),
    #[error("k offset must be positive, got {0}")]
    KOffset(f64),
    #[error("window size must be at least 1 frame")]
    WindowSize,
    #[error("boundary epsilon must be finite and non-negative, got {0}")]
    BoundaryEpsilon(f64),
}

impl RuleConstants {
    pub fn validate(&self) -> Result<(), ConstantsError> {
        let a = self.carrying_angle_deg;
        if !(a > 0.0 && a < 45.0) {
            return Err(ConstantsError::CarryingAngle(a));
        }
        if !(self.k_offset > 0.0 && self.k_offset.is_finite()) {
            return Err(ConstantsError::KOffset(self.k_offset));
        }
        if self.window_size < 1 {
            return Err(ConstantsError::WindowSize);
        }
        if !(self.boundary_epsilon >= 0.0 && self.boundary_epsilon.is_finite()) {
            return Err(ConstantsError::BoundaryEpsilon(self.boundary_epsilon));
        }
        Ok(())
    }
}

/// Upper-arm tilt and the lateral hand allowance derived from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElbowGeometry {
    /// Upper-arm deviation from vertical, degrees in [0, 90].
    pub tilt_deg: f64,
    /// Hand to elbow distance (m).
    pub forearm_len: f64,
    /// Largest allowed |Hand.X - Elbow.X| (m).
    pub max_deflect: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandPhase {
    Down,
    Up,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseClass {
    Down,
    Up,
    Invalid,
}

struct ArmJoints {
    shoulder: Vec3,
    elbow: Vec3,
    hand: Vec3,
}

fn arm_joints(frame: &SkeletonFrame, arm: Arm) -> ArmJoints {
    ArmJoints { shoulder: frame.joint(arm.shoulder()), elbow: frame.joint(arm.elbow()), hand: frame.joint(arm.hand()) }
}

/// Upper-arm tilt C = atan(|dx| / |dy|) between shoulder and elbow, and
/// M = L * sin(A + C) with L the current forearm length.
///
/// M equals the |Elbow.Y - Y3| * tan(A + C) construction exactly, since the
/// hand at maximum deflection sits L * cos(A + C) below the elbow. A zero
/// vertical separation gives C = 90 degrees; once A + C reaches 90 the
/// allowance is capped at L.
pub fn compute_elbow_geometry(frame: &SkeletonFrame, arm: Arm, consts: &RuleConstants) -> ElbowGeometry {
    let j = arm_joints(frame, arm);
    let dx = (j.shoulder.x - j.elbow.x).abs();
    let dy = (j.shoulder.y - j.elbow.y).abs();
    let tilt_deg = if dy == 0.0 { 90.0 } else { dx.atan2(dy).to_degrees() };
    let forearm_len = j.hand.distance(&j.elbow);
    let total = consts.carrying_angle_deg + tilt_deg;
    let max_deflect = if total < 90.0 { forearm_len * total.to_radians().sin() } else { forearm_len };
    ElbowGeometry { tilt_deg, forearm_len, max_deflect }
}

/// Elbow flexion/extension rules. The up phase also requires the hand to be
/// above the elbow.
pub fn check_elbow_rules(frame: &SkeletonFrame, arm: Arm, phase: HandPhase, consts: &RuleConstants) -> bool {
    let ArmJoints { shoulder, elbow, hand } = arm_joints(frame, arm);
    let m = compute_elbow_geometry(frame, arm, consts).max_deflect;

    // Left-arm windows are written as the exact negation of the right-arm
    // ones so that mirrored frames evaluate bit-identically.
    let outward = |h: f64, e: f64| match arm {
        Arm::Right => e <= h && h <= e + m,
        Arm::Left => e - m <= h && h <= e,
    };
    let inward = |h: f64, e: f64| match arm {
        Arm::Right => e - m <= h && h <= e,
        Arm::Left => e <= h && h <= e + m,
    };

    match phase {
        HandPhase::Down => hand.y < elbow.y && outward(hand.x, elbow.x) && hand.z <= elbow.z,
        HandPhase::Up => {
            hand.y > elbow.y
                && inward(hand.x, elbow.x)
                && elbow.z <= shoulder.z
                && hand.y <= shoulder.y + consts.k_offset
        }
    }
}

/// Shoulder flexion rules.
pub fn check_shoulder_rules(frame: &SkeletonFrame, arm: Arm, phase: HandPhase) -> bool {
    let ArmJoints { shoulder, elbow, hand } = arm_joints(frame, arm);
    let x_ok = match arm {
        Arm::Right => hand.x >= elbow.x && hand.x >= shoulder.x && elbow.x >= shoulder.x,
        Arm::Left => hand.x <= elbow.x && hand.x <= shoulder.x && elbow.x <= shoulder.x,
    };
    let y_ok = match phase {
        HandPhase::Down => hand.y <= elbow.y && hand.y <= shoulder.y && elbow.y <= shoulder.y,
        HandPhase::Up => hand.y > elbow.y && hand.y > shoulder.y && elbow.y > shoulder.y,
    };
    x_ok && y_ok && hand.z >= elbow.z
}

pub fn check_rules(
    frame: &SkeletonFrame,
    exercise: ExerciseKind,
    arm: Arm,
    phase: HandPhase,
    consts: &RuleConstants,
) -> bool {
    match exercise {
        ExerciseKind::ElbowFlexExt => check_elbow_rules(frame, arm, phase, consts),
        ExerciseKind::ShoulderFlex => check_shoulder_rules(frame, arm, phase),
    }
}

pub fn classify_pose(frame: &SkeletonFrame, exercise: ExerciseKind, arm: Arm, consts: &RuleConstants) -> PoseClass {
    if check_rules(frame, exercise, arm, HandPhase::Down, consts) {
        PoseClass::Down
    } else if check_rules(frame, exercise, arm, HandPhase::Up, consts) {
        PoseClass::Up
    } else {
        PoseClass::Invalid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::mirror_frame;
    use crate::skeleton::tests::{arb_frame, frame_with};
    use proptest::prelude::*;

    fn right_arm(shoulder: Vec3, elbow: Vec3, hand: Vec3) -> SkeletonFrame {
        frame_with(0.0, |j| match j {
            JointId::ShoulderRight => shoulder,
            JointId::ElbowRight => elbow,
            JointId::HandRight => hand,
            _ => Vec3::new(0.0, 0.0, 2.0),
        })
    }

    const S: Vec3 = Vec3::new(0.20, 0.50, 2.0);
    const E: Vec3 = Vec3::new(0.20, 0.25, 2.0);

    #[test]
    fn vertical_upper_arm_has_zero_tilt() {
        let f = right_arm(S, E, Vec3::new(0.20, 0.00, 2.0));
        let g = compute_elbow_geometry(&f, Arm::Right, &RuleConstants::default());
        assert_eq!(g.tilt_deg, 0.0);
        assert!((g.forearm_len - 0.25).abs() < 1e-12);
        // 0.25 * sin(15 deg); cross-checked against |Elbow.Y - Y3| * tan(A + C)
        // with Y3 = Elbow.Y - L cos(A + C).
        let a = 15f64.to_radians();
        let via_tan = (0.25 * a.cos()) * a.tan();
        assert!((g.max_deflect - 0.064705).abs() < 1e-6);
        assert!((g.max_deflect - via_tan).abs() < 1e-12);
    }

    #[test]
    fn coincident_shoulder_and_elbow_is_singular_but_total() {
        let f = right_arm(E, E, Vec3::new(0.20, 0.00, 2.0));
        let g = compute_elbow_geometry(&f, Arm::Right, &RuleConstants::default());
        assert_eq!(g.tilt_deg, 90.0);
        assert_eq!(g.max_deflect, g.forearm_len);

        let all_same = right_arm(E, E, E);
        let g = compute_elbow_geometry(&all_same, Arm::Right, &RuleConstants::default());
        assert_eq!((g.tilt_deg, g.forearm_len, g.max_deflect), (90.0, 0.0, 0.0));
    }

    #[test]
    fn tilt_follows_arctangent() {
        let f = right_arm(Vec3::new(0.0, 0.5, 2.0), Vec3::new(0.1, 0.4, 2.0), Vec3::new(0.1, 0.1, 2.0));
        let g = compute_elbow_geometry(&f, Arm::Right, &RuleConstants::default());
        assert!((g.tilt_deg - 45.0).abs() < 1e-9);
        assert!((g.max_deflect - 0.3 * 60f64.to_radians().sin()).abs() < 1e-12);
    }

    #[test]
    fn elbow_down_example() {
        let f = right_arm(S, E, Vec3::new(0.20, 0.00, 1.95));
        assert!(check_elbow_rules(&f, Arm::Right, HandPhase::Down, &RuleConstants::default()));
        assert!(!check_elbow_rules(&f, Arm::Right, HandPhase::Up, &RuleConstants::default()));
        assert_eq!(
            classify_pose(&f, ExerciseKind::ElbowFlexExt, Arm::Right, &RuleConstants::default()),
            PoseClass::Down
        );
    }

    #[test]
    fn elbow_up_example() {
        let f = right_arm(S, E, Vec3::new(0.15, 0.45, 1.95));
        assert!(check_elbow_rules(&f, Arm::Right, HandPhase::Up, &RuleConstants::default()));
        assert_eq!(classify_pose(&f, ExerciseKind::ElbowFlexExt, Arm::Right, &RuleConstants::default()), PoseClass::Up);
    }

    #[test]
    fn elbow_up_fails_above_k_band() {
        let f = right_arm(S, E, Vec3::new(0.19, 0.71, 1.95));
        assert!(!check_elbow_rules(&f, Arm::Right, HandPhase::Up, &RuleConstants::default()));
        let relaxed = RuleConstants { k_offset: 0.3, ..RuleConstants::default() };
        assert!(check_elbow_rules(&f, Arm::Right, HandPhase::Up, &relaxed));
    }

    #[test]
    fn hand_level_with_elbow_is_invalid() {
        let f = right_arm(S, E, Vec3::new(0.20, 0.25, 1.80));
        assert_eq!(
            classify_pose(&f, ExerciseKind::ElbowFlexExt, Arm::Right, &RuleConstants::default()),
            PoseClass::Invalid
        );
    }

    #[test]
    fn shoulder_examples() {
        let s = Vec3::new(0.20, 0.50, 2.0);
        let down = right_arm(s, Vec3::new(0.22, 0.25, 2.0), Vec3::new(0.24, 0.00, 2.05));
        assert!(check_shoulder_rules(&down, Arm::Right, HandPhase::Down));
        let up = right_arm(s, Vec3::new(0.22, 0.70, 2.02), Vec3::new(0.24, 0.90, 2.05));
        assert!(check_shoulder_rules(&up, Arm::Right, HandPhase::Up));
        let c = RuleConstants::default();
        assert_eq!(classify_pose(&up, ExerciseKind::ShoulderFlex, Arm::Right, &c), PoseClass::Up);
        assert_eq!(classify_pose(&down, ExerciseKind::ShoulderFlex, Arm::Right, &c), PoseClass::Down);

        let mut behind = up.clone();
        behind.set_joint(JointId::HandRight, Vec3::new(0.24, 0.90, 2.01));
        assert!(!check_shoulder_rules(&behind, Arm::Right, HandPhase::Up));
        assert!(!check_shoulder_rules(&behind, Arm::Right, HandPhase::Down));
    }

    #[test]
    fn horizontal_arm_counts_as_shoulder_down() {
        let f = right_arm(Vec3::new(0.2, 0.5, 2.0), Vec3::new(0.2, 0.5, 2.28), Vec3::new(0.2, 0.5, 2.53));
        assert_eq!(
            classify_pose(&f, ExerciseKind::ShoulderFlex, Arm::Right, &RuleConstants::default()),
            PoseClass::Down
        );
    }

    #[test]
    fn constants_validation() {
        assert!(RuleConstants::default().validate().is_ok());
        let bad = [
            RuleConstants { carrying_angle_deg: 0.0, ..Default::default() },
            RuleConstants { carrying_angle_deg: 45.0, ..Default::default() },
            RuleConstants { k_offset: 0.0, ..Default::default() },
            RuleConstants { window_size: 0, ..Default::default() },
            RuleConstants { boundary_epsilon: -1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    fn exercises() -> impl Strategy<Value = ExerciseKind> {
        prop_oneof![Just(ExerciseKind::ElbowFlexExt), Just(ExerciseKind::ShoulderFlex)]
    }

    proptest! {
        #[test]
        fn down_and_up_are_exclusive(f in arb_frame(), ex in exercises(), right in any::<bool>()) {
            let arm = if right { Arm::Right } else { Arm::Left };
            let c = RuleConstants::default();
            prop_assert!(!(check_rules(&f, ex, arm, HandPhase::Down, &c) && check_rules(&f, ex, arm, HandPhase::Up, &c)));
        }

        #[test]
        fn rules_are_mirror_equivariant(f in arb_frame(), ex in exercises(), up in any::<bool>()) {
            let phase = if up { HandPhase::Up } else { HandPhase::Down };
            let c = RuleConstants::default();
            let m = mirror_frame(&f);
            prop_assert_eq!(check_rules(&f, ex, Arm::Right, phase, &c), check_rules(&m, ex, Arm::Left, phase, &c));
            prop_assert_eq!(check_rules(&f, ex, Arm::Left, phase, &c), check_rules(&m, ex, Arm::Right, phase, &c));
        }

        #[test]
        fn deflection_scales_with_body(f in arb_frame(), s in 0.1f64..10.0) {
            let c = RuleConstants::default();
            let mut scaled = f.clone();
            for j in JointId::ALL {
                scaled.set_joint(j, f.joint(j) * s);
            }
            let a = compute_elbow_geometry(&f, Arm::Right, &c);
            let b = compute_elbow_geometry(&scaled, Arm::Right, &c);
            prop_assert!((b.max_deflect - s * a.max_deflect).abs() <= 1e-9 * (1.0 + s * a.max_deflect));
            prop_assert!(b.tilt_deg.is_finite() && (0.0..=90.0).contains(&b.tilt_deg));
        }
    }
}

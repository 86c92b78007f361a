//! Skeleton joint model, the line-oriented stream format, placement
//! validation and left/right mirroring.
//!
//! All positions live in the analysis frame: +y up, +z pointing from the
//! sensor toward the user, +x toward the user's right-hand side.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The twenty tracked joints of a Kinect v1 skeleton.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JointId {
    HipCenter,
    Spine,
    ShoulderCenter,
    Head,
    ShoulderLeft,
    ElbowLeft,
    WristLeft,
    HandLeft,
    ShoulderRight,
    ElbowRight,
    WristRight,
    HandRight,
    HipLeft,
    KneeLeft,
    AnkleLeft,
    FootLeft,
    HipRight,
    KneeRight,
    AnkleRight,
    FootRight,
}

impl JointId {
    pub const COUNT: usize = 20;

    pub const ALL: [JointId; JointId::COUNT] = [
        JointId::HipCenter,
        JointId::Spine,
        JointId::ShoulderCenter,
        JointId::Head,
        JointId::ShoulderLeft,
        JointId::ElbowLeft,
        JointId::WristLeft,
        JointId::HandLeft,
        JointId::ShoulderRight,
        JointId::ElbowRight,
        JointId::WristRight,
        JointId::HandRight,
        JointId::HipLeft,
        JointId::KneeLeft,
        JointId::AnkleLeft,
        JointId::FootLeft,
        JointId::HipRight,
        JointId::KneeRight,
        JointId::AnkleRight,
        JointId::FootRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::HipCenter => "HipCenter",
            JointId::Spine => "Spine",
            JointId::ShoulderCenter => "ShoulderCenter",
            JointId::Head => "Head",
            JointId::ShoulderLeft => "ShoulderLeft",
            JointId::ElbowLeft => "ElbowLeft",
            JointId::WristLeft => "WristLeft",
            JointId::HandLeft => "HandLeft",
            JointId::ShoulderRight => "ShoulderRight",
            JointId::ElbowRight => "ElbowRight",
            JointId::WristRight => "WristRight",
            JointId::HandRight => "HandRight",
            JointId::HipLeft => "HipLeft",
            JointId::KneeLeft => "KneeLeft",
            JointId::AnkleLeft => "AnkleLeft",
            JointId::FootLeft => "FootLeft",
            JointId::HipRight => "HipRight",
            JointId::KneeRight => "KneeRight",
            JointId::AnkleRight => "AnkleRight",
            JointId::FootRight => "FootRight",
        }
    }

    /// The joint on the opposite side of the body; midline joints map to
    /// themselves.
    pub fn mirrored(self) -> JointId {
        use JointId::*;
        match self {
            ShoulderLeft => ShoulderRight,
            ElbowLeft => ElbowRight,
            WristLeft => WristRight,
            HandLeft => HandRight,
            HipLeft => HipRight,
            KneeLeft => KneeRight,
            AnkleLeft => AnkleRight,
            FootLeft => FootRight,
            ShoulderRight => ShoulderLeft,
            ElbowRight => ElbowLeft,
            WristRight => WristLeft,
            HandRight => HandLeft,
            HipRight => HipLeft,
            KneeRight => KneeLeft,
            AnkleRight => AnkleLeft,
            FootRight => FootLeft,
            HipCenter | Spine | ShoulderCenter | Head => self,
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointId {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL.iter().copied().find(|j| j.name() == s).ok_or(())
    }
}

/// A position in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// One timestamped skeleton sample with all twenty joints.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonFrame {
    /// Seconds since the start of the stream.
    pub timestamp: f64,
    joints: [Vec3; JointId::COUNT],
}

impl SkeletonFrame {
    pub fn new(timestamp: f64, joints: [Vec3; JointId::COUNT]) -> Self {
        Self { timestamp, joints }
    }

    pub fn joint(&self, id: JointId) -> Vec3 {
        self.joints[id.index()]
    }

    pub fn set_joint(&mut self, id: JointId, position: Vec3) {
        self.joints[id.index()] = position;
    }

    pub fn joints(&self) -> impl Iterator<Item = (JointId, Vec3)> + '_ {
        JointId::ALL.iter().map(move |&j| (j, self.joints[j.index()]))
    }

    /// Checks the structural invariants a frame must satisfy on its own.
    pub fn check(&self) -> Result<(), FrameDefect> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(FrameDefect::BadTimestamp(self.timestamp));
        }
        for (joint, pos) in self.joints() {
            if !pos.is_finite() {
                return Err(FrameDefect::NonFinite(joint));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FrameDefect {
    #[error("timestamp {0} is negative or not finite")]
    BadTimestamp(f64),
    #[error("joint {0} has a non-finite coordinate")]
    NonFinite(JointId),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum StreamError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown joint `{name}`")]
    UnknownJoint { line: usize, name: String },
    #[error("line {line}: joint {joint} given more than once")]
    DuplicateJoint { line: usize, joint: JointId },
    #[error("line {line}: missing joint {joint}")]
    MissingJoint { line: usize, joint: JointId },
    #[error("line {line}: joint {joint} has a non-finite coordinate")]
    NonFinite { line: usize, joint: JointId },
    #[error("line {line}: timestamp {timestamp} does not follow {previous}")]
    TimestampRegression { line: usize, timestamp: f64, previous: f64 },
}

impl StreamError {
    pub fn line(&self) -> usize {
        match self {
            StreamError::Malformed { line, .. }
            | StreamError::UnknownJoint { line, .. }
            | StreamError::DuplicateJoint { line, .. }
            | StreamError::MissingJoint { line, .. }
            | StreamError::NonFinite { line, .. }
            | StreamError::TimestampRegression { line, .. } => *line,
        }
    }
}

/// Parses a skeleton stream. Blank lines and lines starting with `#` are
/// skipped; line numbers in errors are 1-based.
pub fn parse_stream(bytes: &[u8]) -> Result<Vec<SkeletonFrame>, StreamError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        // report the line the invalid byte sits on
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        StreamError::Malformed { line, reason: "invalid UTF-8".into() }
    })?;

    let mut frames: Vec<SkeletonFrame> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let record = raw.trim_end_matches('\r');
        if record.trim().is_empty() || record.starts_with('#') {
            continue;
        }
        let frame = parse_record(record, line)?;
        if let Some(prev) = frames.last() {
            if frame.timestamp <= prev.timestamp {
                return Err(StreamError::TimestampRegression {
                    line,
                    timestamp: frame.timestamp,
                    previous: prev.timestamp,
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

fn parse_record(record: &str, line: usize) -> Result<SkeletonFrame, StreamError> {
    let malformed = |reason: String| StreamError::Malformed { line, reason };

    let mut fields = record.split(' ');
    let head = fields.next().unwrap_or_default();
    let ts_text =
        head.strip_prefix("t=").ok_or_else(|| malformed(format!("expected `t=<seconds>`, found `{head}`")))?;
    let timestamp: f64 = ts_text.parse().map_err(|_| malformed(format!("bad timestamp `{ts_text}`")))?;
    if !timestamp.is_finite() || timestamp < 0.0 {
        return Err(malformed(format!("timestamp `{ts_text}` must be finite and non-negative")));
    }

    let mut joints = [Vec3::default(); JointId::COUNT];
    let mut seen = [false; JointId::COUNT];
    for field in fields {
        let (name, coords) = field
            .split_once('=')
            .ok_or_else(|| malformed(format!("expected `<Joint>=<x>,<y>,<z>`, found `{field}`")))?;
        let joint: JointId = name.parse().map_err(|_| StreamError::UnknownJoint { line, name: name.to_string() })?;
        if seen[joint.index()] {
            return Err(StreamError::DuplicateJoint { line, joint });
        }
        let mut parts = coords.split(',');
        let mut next = || -> Result<f64, StreamError> {
            let text = parts.next().ok_or_else(|| malformed(format!("joint {joint} needs three coordinates")))?;
            text.parse::<f64>().map_err(|_| malformed(format!("joint {joint}: bad coordinate `{text}`")))
        };
        let pos = Vec3::new(next()?, next()?, next()?);
        if parts.next().is_some() {
            return Err(malformed(format!("joint {joint} has more than three coordinates")));
        }
        if !pos.is_finite() {
            return Err(StreamError::NonFinite { line, joint });
        }
        joints[joint.index()] = pos;
        seen[joint.index()] = true;
    }
    if let Some(missing) = JointId::ALL.iter().find(|j| !seen[j.index()]) {
        return Err(StreamError::MissingJoint { line, joint: *missing });
    }
    Ok(SkeletonFrame::new(timestamp, joints))
}

/// Writes one record without the trailing newline. Numbers use the
/// shortest representation that parses back to the same value.
pub fn format_record(frame: &SkeletonFrame) -> String {
    let mut out = String::with_capacity(640);
    let _ = write!(out, "t={}", frame.timestamp);
    for (joint, p) in frame.joints() {
        let _ = write!(out, " {}={},{},{}", joint, p.x, p.y, p.z);
    }
    out
}

pub fn serialize_stream(frames: &[SkeletonFrame]) -> String {
    let mut out = String::with_capacity(frames.len() * 640);
    for frame in frames {
        out.push_str(&format_record(frame));
        out.push('\n');
    }
    out
}

/// Sensor working range in meters.
pub const SENSOR_RANGE: (f64, f64) = (0.8, 4.0);
/// Recommended standing distance band in meters.
pub const RECOMMENDED_RANGE: (f64, f64) = (1.3, 1.5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationStatus {
    Ok,
    Warn,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameValidation {
    pub status: ValidationStatus,
    pub notes: Vec<String>,
}

pub const NOTE_DISTANCE: &str = "distance";
pub const NOTE_DISTANCE_RECOMMENDED: &str = "distance-recommended";

/// Advisory placement check. Structural defects are reported as `Reject`
/// so the function is total, but parsed frames never hit that branch.
pub fn validate_frame(frame: &SkeletonFrame) -> FrameValidation {
    if let Err(defect) = frame.check() {
        return FrameValidation { status: ValidationStatus::Reject, notes: vec![defect.to_string()] };
    }
    let z = frame.joint(JointId::HipCenter).z;
    let within = |(lo, hi): (f64, f64)| (lo..=hi).contains(&z);
    if !within(SENSOR_RANGE) {
        FrameValidation { status: ValidationStatus::Warn, notes: vec![NOTE_DISTANCE.into()] }
    } else if !within(RECOMMENDED_RANGE) {
        FrameValidation { status: ValidationStatus::Warn, notes: vec![NOTE_DISTANCE_RECOMMENDED.into()] }
    } else {
        FrameValidation { status: ValidationStatus::Ok, notes: Vec::new() }
    }
}

/// Reflects a frame through the x = 0 plane and swaps left/right labels.
pub fn mirror_frame(frame: &SkeletonFrame) -> SkeletonFrame {
    let mut joints = [Vec3::default(); JointId::COUNT];
    for (joint, p) in frame.joints() {
        joints[joint.mirrored().index()] = Vec3::new(-p.x, p.y, p.z);
    }
    SkeletonFrame::new(frame.timestamp, joints)
}

pub fn mirror_stream(frames: &[SkeletonFrame]) -> Vec<SkeletonFrame> {
    frames.iter().map(mirror_frame).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn frame_with(timestamp: f64, f: impl Fn(JointId) -> Vec3) -> SkeletonFrame {
        let mut joints = [Vec3::default(); JointId::COUNT];
        for j in JointId::ALL {
            joints[j.index()] = f(j);
        }
        SkeletonFrame::new(timestamp, joints)
    }

    fn sample_frame(t: f64) -> SkeletonFrame {
        frame_with(t, |j| {
            let i = j.index() as f64;
            Vec3::new(0.01 * i - 0.1, 0.5 - 0.03 * i, 1.4 + 0.001 * i)
        })
    }

    #[test]
    fn joint_set_is_closed_under_mirroring() {
        let mut names: Vec<_> = JointId::ALL.iter().map(|j| j.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 20);
        for j in JointId::ALL {
            assert_eq!(j.mirrored().mirrored(), j);
            let name = j.name();
            if let Some(stem) = name.strip_suffix("Left") {
                assert_eq!(j.mirrored().name(), format!("{stem}Right"));
            } else if let Some(stem) = name.strip_suffix("Right") {
                assert_eq!(j.mirrored().name(), format!("{stem}Left"));
            } else {
                assert_eq!(j.mirrored(), j);
            }
        }
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert_eq!(parse_stream(b"").unwrap(), vec![]);
        assert_eq!(parse_stream(b"# only a comment\n\n").unwrap(), vec![]);
    }

    #[test]
    fn single_record_round_trips() {
        let f = sample_frame(0.25);
        let text = serialize_stream(std::slice::from_ref(&f));
        assert_eq!(text.lines().count(), 1);
        assert_eq!(parse_stream(text.as_bytes()).unwrap(), vec![f]);
    }

    #[test]
    fn joints_may_come_in_any_order() {
        let f = sample_frame(1.0);
        let record = format_record(&f);
        let mut fields: Vec<&str> = record.split(' ').collect();
        fields[1..].reverse();
        let parsed = parse_stream(fields.join(" ").as_bytes()).unwrap();
        assert_eq!(parsed, vec![f]);
    }

    #[test]
    fn missing_hand_right_names_joint_and_line() {
        let good = format_record(&sample_frame(0.0));
        let full = format_record(&sample_frame(0.1));
        let bad: Vec<&str> = full.split(' ').filter(|f| !f.starts_with("HandRight=")).collect();
        let text = format!("# header\n{good}\n{}\n", bad.join(" "));
        let err = parse_stream(text.as_bytes()).unwrap_err();
        assert_eq!(err, StreamError::MissingJoint { line: 3, joint: JointId::HandRight });
        assert!(err.to_string().contains("HandRight"));
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn rejects_structural_defects() {
        let rec = format_record(&sample_frame(0.0));
        let head = sample_frame(0.0).joint(JointId::Head);
        for bad in ["inf", "NaN"] {
            let text = rec.replacen(&format!("Head={},", head.x), &format!("Head={bad},"), 1);
            assert_eq!(
                parse_stream(text.as_bytes()).unwrap_err(),
                StreamError::NonFinite { line: 1, joint: JointId::Head }
            );
        }

        let dup = format!("{rec} Head=0,0,0");
        assert!(matches!(
            parse_stream(dup.as_bytes()).unwrap_err(),
            StreamError::DuplicateJoint { line: 1, joint: JointId::Head }
        ));

        let unknown = format!("{rec} Tail=0,0,0");
        assert!(matches!(parse_stream(unknown.as_bytes()).unwrap_err(), StreamError::UnknownJoint { .. }));

        let no_t = rec.replacen("t=0", "x=0", 1);
        assert!(matches!(parse_stream(no_t.as_bytes()).unwrap_err(), StreamError::Malformed { line: 1, .. }));

        let two_coords = rec.replacen("Head=", "Head=1,", 1);
        assert!(matches!(parse_stream(two_coords.as_bytes()).unwrap_err(), StreamError::Malformed { .. }));
    }

    #[test]
    fn rejects_timestamp_regression() {
        let text = serialize_stream(&[sample_frame(0.5), sample_frame(0.5)]);
        assert!(matches!(parse_stream(text.as_bytes()).unwrap_err(), StreamError::TimestampRegression { line: 2, .. }));
        let text = serialize_stream(&[sample_frame(0.5), sample_frame(0.4)]);
        assert!(parse_stream(text.as_bytes()).is_err());
    }

    fn at_distance(z: f64) -> SkeletonFrame {
        frame_with(0.0, |j| if j == JointId::HipCenter { Vec3::new(0.0, 0.0, z) } else { Vec3::new(0.0, 0.3, z) })
    }

    #[test]
    fn placement_validation() {
        assert_eq!(validate_frame(&at_distance(1.4)).status, ValidationStatus::Ok);
        let near = validate_frame(&at_distance(0.5));
        assert_eq!((near.status, near.notes), (ValidationStatus::Warn, vec!["distance".to_string()]));
        let far = validate_frame(&at_distance(2.0));
        assert_eq!((far.status, far.notes), (ValidationStatus::Warn, vec!["distance-recommended".to_string()]));
        assert_eq!(validate_frame(&at_distance(4.5)).notes, vec!["distance".to_string()]);
        assert_eq!(validate_frame(&at_distance(1.3)).status, ValidationStatus::Ok);
        assert_eq!(validate_frame(&at_distance(1.5)).status, ValidationStatus::Ok);
    }

    #[test]
    fn mirror_moves_right_hand_to_left() {
        let f = frame_with(3.0, |j| if j == JointId::HandRight { Vec3::new(0.3, 0.1, 2.0) } else { Vec3::default() });
        let m = mirror_frame(&f);
        assert_eq!(m.joint(JointId::HandLeft), Vec3::new(-0.3, 0.1, 2.0));
        assert_eq!(m.timestamp, 3.0);
    }

    #[test]
    fn symmetric_frame_is_fixed_point() {
        let f = frame_with(0.0, |j| {
            let side = match j.name() {
                n if n.ends_with("Left") => -1.0,
                n if n.ends_with("Right") => 1.0,
                _ => 0.0,
            };
            let row = j.index().min(j.mirrored().index()) as f64;
            Vec3::new(side * (0.1 + 0.01 * row), 1.0 - 0.05 * row, 1.4)
        });
        assert_eq!(mirror_frame(&f), f);
    }

    pub(crate) fn arb_frame() -> impl Strategy<Value = SkeletonFrame> {
        (0.0f64..100.0, prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0.0f64..5.0), 20)).prop_map(|(t, coords)| {
            let mut joints = [Vec3::default(); JointId::COUNT];
            for (i, (x, y, z)) in coords.into_iter().enumerate() {
                joints[i] = Vec3::new(x, y, z);
            }
            SkeletonFrame::new(t, joints)
        })
    }

    proptest! {
        #[test]
        fn mirror_is_involution_preserving_y_z(f in arb_frame()) {
            let m = mirror_frame(&f);
            prop_assert_eq!(mirror_frame(&m), f.clone());
            for j in JointId::ALL {
                let a = f.joint(j);
                let b = m.joint(j.mirrored());
                prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
                prop_assert_eq!(a.z.to_bits(), b.z.to_bits());
            }
        }

        #[test]
        fn serialize_parse_identity(mut frames in prop::collection::vec(arb_frame(), 0..12)) {
            for (i, f) in frames.iter_mut().enumerate() {
                f.timestamp = i as f64 * 0.0333 + f.timestamp * 1e-6;
            }
            let text = serialize_stream(&frames);
            prop_assert_eq!(parse_stream(text.as_bytes()).unwrap(), frames);
        }
    }
}

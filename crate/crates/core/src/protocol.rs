//! Session protocol, version 1.
//!
//! Every message is one JSON object tagged by `"type"`; field names are
//! camelCase. A connection must open with `hello`, then `startSession`,
//! then any number of `frame`/`pause`/`resume`, and `endSession`.
//!
//! [`Connection`] is the transport-free state machine: the service feeds it
//! decoded client messages and forwards whatever it returns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::game::{Advance, HookPhase, Jewel, Outcome, SubLevelId};
use crate::profile::{ProfileError, ProfileStore};
use crate::recognizer::{GestureEvent, Segment};
use crate::rules::{Arm, ExerciseKind, PoseClass, RuleConstants};
use crate::session::{
    resume_point, AttemptRecord, EventRecord, FinalSummary, SessionConfig, SessionDriver, SessionError, SessionReport,
};
use crate::skeleton::{JointId, SkeletonFrame, Vec3};

pub const PROTOCOL_VERSION: u32 = 1;

/// Joint positions keyed by joint name, each `[x, y, z]` in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub t: f64,
    pub joints: BTreeMap<String, [f64; 3]>,
}

impl From<&SkeletonFrame> for WireFrame {
    fn from(frame: &SkeletonFrame) -> Self {
        let joints = frame.joints().map(|(j, p)| (j.name().to_string(), [p.x, p.y, p.z])).collect();
        WireFrame { t: frame.timestamp, joints }
    }
}

impl WireFrame {
    pub fn to_frame(&self) -> Result<SkeletonFrame, String> {
        let mut joints = [Vec3::default(); JointId::COUNT];
        let mut seen = [false; JointId::COUNT];
        for (name, [x, y, z]) in &self.joints {
            let joint: JointId = name.parse().map_err(|_| format!("unknown joint `{name}`"))?;
            joints[joint.index()] = Vec3::new(*x, *y, *z);
            seen[joint.index()] = true;
        }
        if let Some(missing) = JointId::ALL.iter().find(|j| !seen[j.index()]) {
            return Err(format!("missing joint {missing}"));
        }
        let frame = SkeletonFrame::new(self.t, joints);
        frame.check().map_err(|e| e.to_string())?;
        Ok(frame)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InlineConfig {
    pub exercise: ExerciseKind,
    pub arm: Arm,
    pub repetitions: u32,
    #[serde(default)]
    pub constants: Option<RuleConstants>,
    #[serde(default)]
    pub start: Option<SubLevelId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ClientMessage {
    Hello {
        protocol_version: u32,
    },
    StartSession {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile_id: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<InlineConfig>,
        #[serde(default)]
        session_seed: u64,
    },
    Frame {
        frame: WireFrame,
    },
    Pause,
    Resume,
    EndSession,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ServerMessage {
    Welcome {
        protocol_version: u32,
        server_version: String,
    },
    SessionStarted {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        profile_id: Option<String>,
        exercise: ExerciseKind,
        arm: Arm,
        repetitions: u32,
        session_seed: u64,
        level: u8,
        stage: u8,
        layout: Vec<Jewel>,
        required_score: u32,
    },
    /// A new attempt began after a decided one; carries its layout.
    AttemptStarted {
        level: u8,
        stage: u8,
        layout: Vec<Jewel>,
        required_score: u32,
    },
    State {
        frame: usize,
        pose: PoseClass,
        segment: Segment,
        frames_in_segment: u32,
        anchor_x: f64,
        anchor_y: f64,
        extension: f64,
        phase: HookPhase,
        collected_score: u32,
        nofer: u32,
        pending_drops: u32,
        outcome: Outcome,
        level: u8,
        stage: u8,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        hit: Option<usize>,
    },
    GestureFeedback {
        frame: usize,
        event: GestureEvent,
    },
    OutcomeBanner {
        level: u8,
        stage: u8,
        outcome: Outcome,
        score: u32,
        nofer: u32,
        game_complete: bool,
    },
    SessionEnded {
        frames: usize,
        #[serde(rename = "final")]
        final_: FinalSummary,
    },
    Error {
        code: String,
        text: String,
    },
}

impl ServerMessage {
    pub fn error(code: &str, text: impl Into<String>) -> Self {
        ServerMessage::Error { code: code.to_string(), text: text.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

pub mod codes {
    pub const DECODE: &str = "decode";
    pub const HANDSHAKE: &str = "handshake";
    pub const VERSION: &str = "version";
    pub const PROTOCOL: &str = "protocol";
    pub const NO_SESSION: &str = "no-session";
    pub const PAUSED: &str = "paused";
    pub const BAD_FRAME: &str = "bad-frame";
    pub const CONFIG: &str = "config";
    pub const UNKNOWN_PROFILE: &str = "unknown-profile";
    pub const STORE: &str = "store";
}

/// Messages to send, and whether the connection should close afterwards.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    pub close: bool,
}

impl Reply {
    fn one(message: ServerMessage) -> Self {
        Reply { messages: vec![message], close: false }
    }

    fn closing(message: ServerMessage) -> Self {
        Reply { messages: vec![message], close: true }
    }
}

#[derive(Debug)]
struct ActiveSession {
    driver: SessionDriver,
    profile_id: Option<String>,
    paused: bool,
}

#[derive(Debug)]
enum Phase {
    AwaitHello,
    Ready,
    Active(Box<ActiveSession>),
    Closed,
}

#[derive(Debug)]
pub struct Connection {
    store: Option<ProfileStore>,
    phase: Phase,
}

impl Connection {
    pub fn new(store: Option<ProfileStore>) -> Self {
        Self { store, phase: Phase::AwaitHello }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.phase, Phase::Closed)
    }

    pub fn handle_text(&mut self, text: &str) -> Reply {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => Reply::one(ServerMessage::error(codes::DECODE, e.to_string())),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Reply {
        match (&mut self.phase, msg) {
            (Phase::Closed, _) => Reply { messages: Vec::new(), close: true },
            (Phase::AwaitHello, ClientMessage::Hello { protocol_version }) => {
                if protocol_version != PROTOCOL_VERSION {
                    self.phase = Phase::Closed;
                    return Reply::closing(ServerMessage::error(
                        codes::VERSION,
                        format!(
                            "protocol version {protocol_version} not supported; this server speaks {PROTOCOL_VERSION}"
                        ),
                    ));
                }
                self.phase = Phase::Ready;
                Reply::one(ServerMessage::Welcome {
                    protocol_version: PROTOCOL_VERSION,
                    server_version: env!("CARGO_PKG_VERSION").to_string(),
                })
            }
            (Phase::AwaitHello, _) => Reply::one(ServerMessage::error(codes::HANDSHAKE, "send hello first")),
            (_, ClientMessage::Hello { .. }) => {
                Reply::one(ServerMessage::error(codes::PROTOCOL, "hello already received"))
            }
            (Phase::Ready, ClientMessage::StartSession { profile_id, config, session_seed }) => {
                self.start(profile_id, config, session_seed)
            }
            (Phase::Ready, _) => Reply::one(ServerMessage::error(codes::NO_SESSION, "no session started")),
            (Phase::Active(_), ClientMessage::StartSession { .. }) => {
                Reply::one(ServerMessage::error(codes::PROTOCOL, "a session is already running on this connection"))
            }
            (Phase::Active(active), ClientMessage::Pause) => {
                active.paused = true;
                Reply::default()
            }
            (Phase::Active(active), ClientMessage::Resume) => {
                active.paused = false;
                Reply::default()
            }
            (Phase::Active(active), ClientMessage::Frame { frame }) => {
                if active.paused {
                    return Reply::one(ServerMessage::error(codes::PAUSED, "paused"));
                }
                match frame.to_frame() {
                    Ok(frame) => step(&mut active.driver, &frame),
                    Err(text) => Reply::one(ServerMessage::error(codes::BAD_FRAME, text)),
                }
            }
            (Phase::Active(_), ClientMessage::EndSession) => self.end(),
        }
    }

    fn start(&mut self, profile_id: Option<String>, inline: Option<InlineConfig>, session_seed: u64) -> Reply {
        let config = match (&profile_id, inline) {
            (Some(_), Some(_)) => {
                return Reply::one(ServerMessage::error(codes::CONFIG, "give either profileId or config, not both"))
            }
            (None, None) => return Reply::one(ServerMessage::error(codes::CONFIG, "profileId or config required")),
            (None, Some(c)) => SessionConfig {
                exercise: c.exercise,
                arm: c.arm,
                repetitions: c.repetitions,
                constants: c.constants.unwrap_or_default(),
                session_seed,
                start: c.start.unwrap_or(SubLevelId::FIRST),
            },
            (Some(id), None) => {
                let Some(store) = &self.store else {
                    return Reply::one(ServerMessage::error(codes::STORE, "this server has no profile store"));
                };
                match store.get(id) {
                    Ok(p) => SessionConfig {
                        exercise: p.exercise,
                        arm: p.arm,
                        repetitions: p.repetitions,
                        constants: RuleConstants::default(),
                        session_seed,
                        start: resume_point(p.progress),
                    },
                    Err(ProfileError::UnknownId(id)) => {
                        return Reply::one(ServerMessage::error(
                            codes::UNKNOWN_PROFILE,
                            format!("no profile with id `{id}`"),
                        ))
                    }
                    Err(e) => return Reply::one(ServerMessage::error(codes::STORE, e.to_string())),
                }
            }
        };
        let driver = match SessionDriver::new(config) {
            Ok(d) => d,
            Err(e) => return Reply::one(ServerMessage::error(codes::CONFIG, e.to_string())),
        };
        let c = driver.config().clone();
        let game = driver.game();
        let started = ServerMessage::SessionStarted {
            profile_id: profile_id.clone(),
            exercise: c.exercise,
            arm: c.arm,
            repetitions: c.repetitions,
            session_seed: c.session_seed,
            level: game.sublevel().level,
            stage: game.sublevel().stage,
            layout: game.jewels().to_vec(),
            required_score: game.required_score(),
        };
        self.phase = Phase::Active(Box::new(ActiveSession { driver, profile_id, paused: false }));
        Reply::one(started)
    }

    fn end(&mut self) -> Reply {
        let Phase::Active(mut active) = std::mem::replace(&mut self.phase, Phase::Closed) else {
            unreachable!("end called without a session");
        };
        let mut reply = Reply { messages: Vec::new(), close: true };
        match active.driver.finish() {
            Ok(decided) => {
                for (record, advance) in decided {
                    push_decision(&mut reply.messages, &active.driver, record, advance);
                }
            }
            Err(e) => reply.messages.push(ServerMessage::error(codes::PROTOCOL, e.to_string())),
        }
        if let Err(e) = persist_progress(self.store.as_ref(), &active) {
            reply.messages.push(ServerMessage::error(codes::STORE, e.to_string()));
        }
        reply.messages.push(ServerMessage::SessionEnded {
            frames: active.driver.frames_processed(),
            final_: active.driver.final_summary(),
        });
        reply
    }

    /// Called when the transport goes away without `endSession`.
    pub fn disconnect(&mut self) {
        if let Phase::Active(active) = std::mem::replace(&mut self.phase, Phase::Closed) {
            // nobody is listening for a store error at this point
            let _ = persist_progress(self.store.as_ref(), &active);
        }
    }
}

fn persist_progress(store: Option<&ProfileStore>, active: &ActiveSession) -> Result<(), ProfileError> {
    match (store, &active.profile_id, active.driver.best_won()) {
        (Some(store), Some(id), Some(best)) => store.record_progress(id, best).map(|_| ()),
        _ => Ok(()),
    }
}

fn push_decision(out: &mut Vec<ServerMessage>, driver: &SessionDriver, record: AttemptRecord, advance: Advance) {
    out.push(ServerMessage::OutcomeBanner {
        level: record.level,
        stage: record.stage,
        outcome: record.outcome,
        score: record.score,
        nofer: record.nofer,
        game_complete: advance == Advance::GameComplete,
    });
    if advance != Advance::GameComplete {
        let game = driver.game();
        out.push(ServerMessage::AttemptStarted {
            level: game.sublevel().level,
            stage: game.sublevel().stage,
            layout: game.jewels().to_vec(),
            required_score: game.required_score(),
        });
    }
}

fn step(driver: &mut SessionDriver, frame: &SkeletonFrame) -> Reply {
    let pose = driver.recognizer().classify(frame);
    let out = match driver.step(frame) {
        Ok(out) => out,
        Err(e @ (SessionError::BadFrame { .. } | SessionError::OutOfOrder { .. })) => {
            return Reply::one(ServerMessage::error(codes::BAD_FRAME, e.to_string()))
        }
        Err(e) => return Reply::one(ServerMessage::error(codes::PROTOCOL, e.to_string())),
    };
    let index = driver.frames_processed() - 1;
    let mut messages = Vec::new();
    if out.event != GestureEvent::InProgress {
        messages.push(ServerMessage::GestureFeedback { frame: index, event: out.event });
    }
    // State shows the attempt the frame was played in, so a deciding tick
    // is reported before the banner and the next layout.
    let (collected_score, nofer, outcome, level, stage) = match out.decided {
        Some((record, _)) => (record.score, record.nofer, record.outcome, record.level, record.stage),
        None => {
            let game = driver.game();
            (game.collected_score(), game.nofer(), game.outcome(), game.sublevel().level, game.sublevel().stage)
        }
    };
    let game = driver.game();
    let hook = game.hook();
    let recognizer = driver.recognizer();
    messages.push(ServerMessage::State {
        frame: index,
        pose,
        segment: recognizer.segment(),
        frames_in_segment: recognizer.frames_in_segment(),
        anchor_x: hook.anchor_x,
        anchor_y: hook.anchor_y,
        extension: hook.extension(),
        phase: hook.phase,
        collected_score,
        nofer,
        pending_drops: game.pending_drops(),
        outcome,
        level,
        stage,
        hit: out.tick.hit,
    });
    if let Some((record, advance)) = out.decided {
        push_decision(&mut messages, driver, record, advance);
    }
    Reply { messages, close: false }
}

/// Rebuilds the session report from what a client received.
pub fn report_from_trace(trace: &[ServerMessage]) -> Option<SessionReport> {
    let mut header = None;
    let mut events = Vec::new();
    let mut attempts = Vec::new();
    let mut ended = None;
    for msg in trace {
        match msg {
            ServerMessage::SessionStarted { exercise, arm, repetitions, session_seed, .. } => {
                header = Some((*exercise, *arm, *repetitions, *session_seed));
            }
            ServerMessage::GestureFeedback { frame, event } => {
                events.push(EventRecord { frame: *frame, event: *event })
            }
            ServerMessage::OutcomeBanner { level, stage, outcome, score, nofer, .. } => attempts.push(AttemptRecord {
                level: *level,
                stage: *stage,
                outcome: *outcome,
                score: *score,
                nofer: *nofer,
            }),
            ServerMessage::SessionEnded { frames, final_ } => ended = Some((*frames, final_.clone())),
            _ => {}
        }
    }
    let (exercise, arm, n, seed) = header?;
    let (frames, final_) = ended?;
    Some(SessionReport { exercise, arm, n, seed, frames, events, attempts, final_ })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::NewProfile;
    use crate::synth::{synthesize, SynthSpec};

    fn hello() -> ClientMessage {
        ClientMessage::Hello { protocol_version: PROTOCOL_VERSION }
    }

    fn inline(n: u32) -> ClientMessage {
        ClientMessage::StartSession {
            profile_id: None,
            config: Some(InlineConfig {
                exercise: ExerciseKind::ElbowFlexExt,
                arm: Arm::Right,
                repetitions: n,
                constants: None,
                start: None,
            }),
            session_seed: 5,
        }
    }

    fn codes_of(reply: &Reply) -> Vec<&str> {
        reply
            .messages
            .iter()
            .filter_map(|m| match m {
                ServerMessage::Error { code, .. } => Some(code.as_str()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn messages_use_camel_case_tags() {
        let json = serde_json::to_value(hello()).unwrap();
        assert_eq!(json, serde_json::json!({"type": "hello", "protocolVersion": 1}));
        let msg: ClientMessage = serde_json::from_str(r#"{"type":"endSession"}"#).unwrap();
        assert_eq!(msg, ClientMessage::EndSession);
    }

    #[test]
    fn wire_frames_round_trip_exactly() {
        let frames = synthesize(&SynthSpec::new(ExerciseKind::ShoulderFlex, Arm::Left)).unwrap();
        for f in &frames {
            let text = serde_json::to_string(&WireFrame::from(f)).unwrap();
            let back: WireFrame = serde_json::from_str(&text).unwrap();
            assert_eq!(&back.to_frame().unwrap(), f);
        }
    }

    #[test]
    fn handshake_is_required() {
        let mut c = Connection::new(None);
        assert_eq!(codes_of(&c.handle(inline(1))), [codes::HANDSHAKE]);
        let bad = c.handle(ClientMessage::Hello { protocol_version: 2 });
        assert_eq!(codes_of(&bad), [codes::VERSION]);
        assert!(bad.close && c.is_closed());
    }

    #[test]
    fn start_then_end_without_frames() {
        let mut c = Connection::new(None);
        c.handle(hello());
        let started = c.handle(inline(2));
        assert!(matches!(
            started.messages[..],
            [ServerMessage::SessionStarted { level: 1, stage: 1, required_score: 20, .. }]
        ));
        let end = c.handle(ClientMessage::EndSession);
        assert!(end.close);
        assert!(matches!(end.messages[..], [ServerMessage::SessionEnded { frames: 0, .. }]));
    }

    #[test]
    fn paused_frames_are_rejected_without_state_change() {
        let frames = synthesize(&SynthSpec::new(ExerciseKind::ElbowFlexExt, Arm::Right)).unwrap();
        let mut c = Connection::new(None);
        c.handle(hello());
        c.handle(inline(1));
        c.handle(ClientMessage::Frame { frame: (&frames[0]).into() });
        c.handle(ClientMessage::Pause);
        let r = c.handle(ClientMessage::Frame { frame: (&frames[1]).into() });
        assert_eq!(codes_of(&r), [codes::PAUSED]);
        c.handle(ClientMessage::Resume);
        let r = c.handle(ClientMessage::Frame { frame: (&frames[1]).into() });
        assert!(matches!(r.messages[..], [ServerMessage::State { frame: 1, .. }]));
    }

    #[test]
    fn malformed_frame_keeps_session_alive() {
        let frames = synthesize(&SynthSpec::new(ExerciseKind::ElbowFlexExt, Arm::Right)).unwrap();
        let mut c = Connection::new(None);
        c.handle(hello());
        c.handle(inline(1));
        let mut wire = WireFrame::from(&frames[0]);
        wire.joints.remove("Head");
        assert_eq!(codes_of(&c.handle(ClientMessage::Frame { frame: wire })), [codes::BAD_FRAME]);
        assert_eq!(codes_of(&c.handle_text("{not json")), [codes::DECODE]);
        let r = c.handle(ClientMessage::Frame { frame: (&frames[0]).into() });
        assert!(matches!(r.messages[..], [ServerMessage::State { frame: 0, .. }]));
    }

    #[test]
    fn one_repetition_yields_one_completed_feedback_and_a_hook_cycle() {
        let frames = synthesize(&SynthSpec::new(ExerciseKind::ElbowFlexExt, Arm::Right)).unwrap();
        let mut c = Connection::new(None);
        c.handle(hello());
        c.handle(inline(3));
        let mut trace = Vec::new();
        for f in &frames {
            trace.extend(c.handle(ClientMessage::Frame { frame: f.into() }).messages);
        }
        // keep the clock running long enough for the drop
        let mut t = frames.last().unwrap().timestamp;
        let rest = frames.last().unwrap().clone();
        for _ in 0..420 {
            t += 1.0 / 30.0;
            let mut f = rest.clone();
            f.timestamp = t;
            trace.extend(c.handle(ClientMessage::Frame { frame: (&f).into() }).messages);
        }
        let completed = trace
            .iter()
            .filter(|m| matches!(m, ServerMessage::GestureFeedback { event: GestureEvent::Completed, .. }))
            .count();
        assert_eq!(completed, 1);
        let phases: Vec<HookPhase> = trace
            .iter()
            .filter_map(|m| match m {
                ServerMessage::State { phase, .. } => Some(*phase),
                _ => None,
            })
            .collect();
        let mut seq = phases.clone();
        seq.dedup();
        let extending = seq.iter().filter(|p| **p == HookPhase::Extending).count();
        assert_eq!(extending, 1);
        assert_eq!(*phases.last().unwrap(), HookPhase::Swinging);
    }

    #[test]
    fn unknown_profile_and_progress_persistence() {
        let dir = tempfile::tempdir().unwrap();
        let store = ProfileStore::open(dir.path().join("p.json"));
        let p = store.create(NewProfile { name: "Ali".into(), repetitions: 1, ..Default::default() }).unwrap();
        let mut c = Connection::new(Some(store.clone()));
        c.handle(hello());
        let r =
            c.handle(ClientMessage::StartSession { profile_id: Some("nope".into()), config: None, session_seed: 0 });
        assert_eq!(codes_of(&r), [codes::UNKNOWN_PROFILE]);
        c.handle(ClientMessage::StartSession { profile_id: Some(p.id.clone()), config: None, session_seed: 0 });
        c.handle(ClientMessage::EndSession);
        assert_eq!(store.get(&p.id).unwrap().progress, None);
    }

    #[test]
    fn trace_report_matches_driver_report() {
        let mut spec = SynthSpec::new(ExerciseKind::ElbowFlexExt, Arm::Right);
        spec.repetitions = 4;
        let frames = synthesize(&spec).unwrap();
        let mut c = Connection::new(None);
        let mut trace = c.handle(hello()).messages;
        trace.extend(c.handle(inline(2)).messages);
        for f in &frames {
            trace.extend(c.handle(ClientMessage::Frame { frame: f.into() }).messages);
        }
        trace.extend(c.handle(ClientMessage::EndSession).messages);

        let config = SessionConfig::new(ExerciseKind::ElbowFlexExt, Arm::Right, 2, 5);
        let direct = crate::session::simulate(config, None, &frames).unwrap().report();
        assert_eq!(report_from_trace(&trace).unwrap(), direct);
    }
}

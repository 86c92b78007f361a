//! Human-readable report text.

use std::fmt::Write;

use jcave_core::profile::Profile;
use jcave_core::recognizer::{AbortReason, GestureEvent};
use jcave_core::session::{RecognitionReport, SessionReport};

fn reason(r: AbortReason) -> &'static str {
    match r {
        AbortReason::Timeout => "timeout",
        AbortReason::InvalidMovement => "invalid movement",
    }
}

pub fn recognition(r: &RecognitionReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} exercise, {} arm, {} frames", r.exercise.as_str(), r.arm.as_str(), r.frames);
    if !r.repetitions.is_empty() {
        let _ =
            writeln!(s, "{:>3}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  status", "#", "frame", "down", "up", "return", "t");
        for (i, rep) in r.repetitions.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>3}  {:>6}  {:>6.2}  {:>6.2}  {:>6.2}  {:>6.2}  Succeeded",
                i + 1,
                rep.frame,
                rep.down,
                rep.up,
                rep.down_return,
                rep.t
            );
        }
    }
    for a in &r.aborts {
        let _ = writeln!(s, "aborted at frame {}: {}", a.frame, reason(a.reason));
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {} on {} frame(s), first at {}", w.note, w.count, w.first_frame);
    }
    let _ = writeln!(s, "repetitions: {}, aborted: {}", r.repetitions.len(), r.aborts.len());
    s
}

pub fn session(r: &SessionReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} exercise, {} arm, N = {}, seed {}, {} frames",
        r.exercise.as_str(),
        r.arm.as_str(),
        r.n,
        r.seed,
        r.frames
    );
    for e in &r.events {
        match e.event {
            GestureEvent::Completed => {
                let _ = writeln!(s, "frame {:>6}: exercise completed", e.frame);
            }
            GestureEvent::Aborted(why) => {
                let _ = writeln!(s, "frame {:>6}: aborted ({})", e.frame, reason(why));
            }
            GestureEvent::InProgress => {}
        }
    }
    for a in &r.attempts {
        let _ =
            writeln!(s, "sub-level {}-{}: {} with score {}, Nofer {}", a.level, a.stage, a.outcome, a.score, a.nofer);
    }
    let f = &r.final_;
    let _ = writeln!(
        s,
        "final: sub-level {}-{} {}, score {}, Nofer {}{}",
        f.level,
        f.stage,
        f.outcome,
        f.score,
        f.nofer,
        if f.game_complete { ", game complete" } else { "" }
    );
    s
}

fn progress(p: &Profile) -> String {
    p.progress.map_or_else(|| "-".to_string(), |sub| sub.to_string())
}

pub fn profile(p: &Profile) -> String {
    let age = p.age.map_or_else(|| "-".to_string(), |a| a.to_string());
    format!(
        "id:       {}\nname:     {}\nage:      {}\nexercise: {}\narm:      {}\nN:        {}\nprogress: {}\n",
        p.id,
        p.name,
        age,
        p.exercise.as_str(),
        p.arm.as_str(),
        p.repetitions,
        progress(p)
    )
}

pub fn profile_table(profiles: &[Profile]) -> String {
    if profiles.is_empty() {
        return "no profiles\n".to_string();
    }
    let mut s = String::new();
    let _ = writeln!(s, "{:<36}  {:<16}  {:<8}  {:<5}  {:>3}  progress", "id", "name", "exercise", "arm", "N");
    for p in profiles {
        let _ = writeln!(
            s,
            "{:<36}  {:<16}  {:<8}  {:<5}  {:>3}  {}",
            p.id,
            p.name,
            p.exercise.as_str(),
            p.arm.as_str(),
            p.repetitions,
            progress(p)
        );
    }
    s
}

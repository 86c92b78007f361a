//! Core of the JCave exergame: skeleton frames, pose rules, the gesture
//! recognizer, the jewel-hook game, synthetic motion, player profiles and
//! the session protocol.

pub mod game;
pub mod profile;
pub mod protocol;
pub mod recognizer;
pub mod rules;
pub mod session;
pub mod skeleton;
pub mod synth;

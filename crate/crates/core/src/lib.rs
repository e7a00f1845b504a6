//! Attention-driven mime character.
//!
//! A vision pipeline estimates whether a viewer is watching, a behavior
//! engine arbitrates the character's routines, and a model-based learner
//! picks routines that keep the viewer attending. A seeded simulated viewer
//! closes the loop so everything runs headless and reproducibly.

pub mod animation;
pub mod attention;
pub mod behavior;
pub mod body;
pub mod config;
pub mod face;
pub mod frame;
pub mod harness;
pub mod learning;
pub mod midi;
pub mod par;
pub mod routine;
pub mod viewer;

pub use frame::{Frame, Rect};
pub use par::Exec;
pub use routine::Routine;

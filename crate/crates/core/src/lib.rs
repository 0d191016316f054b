//! Chord/texture disentanglement for 8-beat polyphonic piano segments.
//!
//! The crate is organised bottom-up:
//!
//! - [`score`]: MIDI I/O, quantization into 32-step segments, the
//!   duration-valued piano-roll and the three augmentation operators.
//! - [`chord`]: rule-based per-beat chord recognition and the 36×8
//!   chord matrix.
//! - [`nn`]: a small reverse-mode autodiff engine with GRU, linear,
//!   attention and layer-norm building blocks plus Adam.
//! - [`vae`]: chord encoder/decoder, convolutional texture encoder,
//!   PianoTree decoder and the ELBO objective.
//! - [`trainer`]: corpus building, splits, schedules, checkpointing.
//! - [`control`]: style transfer by latent swap and texture sampling.
//! - [`arranger`]: melody-conditioned accompaniment arrangement.
//! - [`eval`]: augmentation-based disentanglement sweeps and
//!   reconstruction metrics.

pub mod arranger;
pub mod chord;
pub mod control;
pub mod error;
pub mod eval;
pub mod nn;
pub mod score;
pub mod synth;
pub mod trainer;
pub mod vae;

pub use error::{Error, Result};

/// Length of a segment in beats.
pub const BEATS_PER_SEGMENT: usize = 8;
/// Grid steps per beat (sixteenth-note resolution).
pub const STEPS_PER_BEAT: usize = 4;
/// Grid steps per segment.
pub const SEGMENT_STEPS: usize = BEATS_PER_SEGMENT * STEPS_PER_BEAT;
/// Number of MIDI pitches.
pub const NUM_PITCHES: usize = 128;

//! Engine for a Genji-ko incense matching game played by a person alongside a
//! sensor-driven partner.
//!
//! Five scents are smelled in sequence and every round after the first is
//! judged as either matching an earlier scent or being new. The judgments form
//! a set partition of the five rounds, drawn as a Genji-mon diagram.
//!
//! The crate is `no_std` (with `alloc`) so the game logic and numerics can run
//! anywhere; file formats, networking and the CLI live in the `genji` crate.
//!
//! - [`partition`]: restricted-growth strings, judgments, pattern comparison
//! - [`diagram`]: Genji-mon layout and SVG export
//! - [`session`]: the turn-based state machine with an event log and replay
//! - [`sensor`]: 9-channel recordings, rate checks, gap filling, synthetic data
//! - [`features`]: differencing, FFT high-pass, scaling, windowing
//! - [`classifier`]: transformer encoder classifier, centroid baseline, voting
//! - [`dialogue`]: BM25 retrieval, alignment, aggregates, prompt assembly

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classifier;
pub mod diagram;
pub mod dialogue;
pub mod features;
pub mod partition;
pub mod sensor;
pub mod session;

/// Number of scent rounds in a game.
pub const ROUNDS: usize = 5;
/// Number of incense classes recognised by the classifier.
pub const NUM_CLASSES: usize = 5;
/// Number of sensor channels per frame.
pub const NUM_CHANNELS: usize = 9;

pub use diagram::{render_pattern, render_prefix, PatternDiagram, Segment};
pub use partition::{
    apply_judgment, compare_patterns, enumerate_partitions, partition_from_judgments, AgreementScore, Judgment,
    Partition, PartitionError,
};

//! Measures how syntactic function correlates with prosodic realization in
//! aligned, dependency-parsed speech corpora.
//!
//! The library ingests corpora of recordings whose tokens carry word timings,
//! POS tags and dependency labels, extracts four prosodic outcomes per word
//! (mean pitch in speaker-normalized semitones, mean power in dB, duration
//! and following pause in ms), and contrasts groups of words selected by
//! their syntactic function. For each contrast it fits two nested linear
//! mixed-effects models (random intercept per recording) — one with and one
//! without the group indicator — and reports a likelihood-ratio p-value
//! together with the group effect in Cent/dB/ms.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`corpus`]: on-disk corpus model (recordings, sentences, tokens).
//! - [`frames`], [`pitch`], [`audio`]: frame tracks, the autocorrelation
//!   pitch tracker and PCM input.
//! - [`prosody`]: speaker pitch baselines and per-word outcome extraction.
//! - [`duration`]: canonical (text-only) word-duration predictor used as a
//!   length control.
//! - [`query`]: the `a~b` / `c->(a~b)` comparison language and token
//!   selection.
//! - [`lmm`]: profiled-deviance mixed-model fits, likelihood-ratio tests and
//!   effect estimation.
//! - [`pipeline`]: design assembly, per-cell analysis and report rendering.
//! - [`synth`]: synthetic corpus generator with known ground truth.

pub mod audio;
pub mod corpus;
pub mod duration;
pub mod error;
pub mod frames;
pub mod lmm;
pub mod pipeline;
pub mod pitch;
pub mod prosody;
pub mod query;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

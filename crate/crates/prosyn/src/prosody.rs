//! Per-word prosodic outcomes: mean pitch (speaker-normalized semitones),
//! mean power (dB), duration and following pause (ms).
//!
//! Pitch is measured on a semitone scale relative to a fixed 100 Hz
//! reference and normalized by subtracting the speaker's mean over all
//! voiced frames. The reference cancels under normalization; fixing it
//! keeps intermediate files comparable. The speaker mean is taken in the
//! log (semitone) domain, which makes normalization exactly invariant to
//! multiplicative f0 rescaling.

use std::collections::BTreeMap;

use crate::corpus::{Corpus, Token};
use crate::error::{Error, Result};
use crate::frames::FrameTrack;

/// Reference frequency of the semitone scale.
pub const REFERENCE_HZ: f64 = 100.0;

/// Semitones above the 100 Hz reference.
pub fn semitones(f0_hz: f64) -> f64 {
    12.0 * (f0_hz / REFERENCE_HZ).log2()
}

/// Extraction knobs; `min_pause_ms` floors shorter alignment gaps to zero
/// (default 0: any positive gap counts as pause).
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeConfig {
    pub min_pause_ms: f64,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        OutcomeConfig { min_pause_ms: 0.0 }
    }
}

/// A speaker's mean voiced pitch, pooled over all their recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerPitchBaseline {
    pub speaker_id: String,
    /// Log-domain mean of voiced f0 in semitones re 100 Hz.
    pub mean_semitones: f64,
    pub n_voiced_frames: usize,
}

/// Speakers that could not get a baseline, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineWarning {
    pub speaker_id: String,
    pub reason: String,
}

/// The four outcome variables for one word.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodicOutcomes {
    /// Missing when no voiced frame falls inside the word span.
    pub mean_pitch_st: Option<f64>,
    /// Missing when no frame at all falls inside the word span.
    pub mean_power_db: Option<f64>,
    pub duration_ms: f64,
    pub pause_after_ms: f64,
}

/// Computes per-speaker pitch baselines from the given per-recording tracks.
///
/// Speakers without a single voiced frame are omitted from the result and
/// reported as warnings instead.
pub fn speaker_baseline(
    corpus: &Corpus,
    tracks: &BTreeMap<String, FrameTrack>,
) -> (Vec<SpeakerPitchBaseline>, Vec<BaselineWarning>) {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for recording in &corpus.recordings {
        let entry = sums.entry(recording.speaker_id.as_str()).or_insert((0.0, 0));
        if let Some(track) = tracks.get(&recording.recording_id) {
            for frame in &track.frames {
                if let Some(f0) = frame.f0_hz {
                    entry.0 += semitones(f0);
                    entry.1 += 1;
                }
            }
        }
    }
    let mut baselines = Vec::new();
    let mut warnings = Vec::new();
    for (speaker, (sum, count)) in sums {
        if count == 0 {
            warnings.push(BaselineWarning {
                speaker_id: speaker.to_string(),
                reason: "no voiced frames in any recording".into(),
            });
        } else {
            baselines.push(SpeakerPitchBaseline {
                speaker_id: speaker.to_string(),
                mean_semitones: sum / count as f64,
                n_voiced_frames: count,
            });
        }
    }
    (baselines, warnings)
}

/// Extracts the outcome variables for one token.
///
/// `next_token` is the following token in the same recording's stream (it
/// may belong to the next sentence); pauses across sentence boundaries
/// count, the last token of a recording gets pause 0, and a next token
/// without a start timing contributes no measurable gap (pause 0).
pub fn word_outcomes(
    token: &Token,
    next_token: Option<&Token>,
    track: &FrameTrack,
    baseline: &SpeakerPitchBaseline,
    cfg: &OutcomeConfig,
) -> Result<ProsodicOutcomes> {
    let (start, end) = match (token.start_ms, token.end_ms) {
        (Some(s), Some(e)) => (s, e),
        _ => {
            return Err(Error::Invalid(format!(
                "token {:?} has no timings; outcomes need an aligned token",
                token.surface
            )))
        }
    };
    if start < 0.0 || end > track.cover_ms() + 1e-9 {
        return Err(Error::SpanOutsideTrack {
            token: token.surface.clone(),
            start_ms: start,
            end_ms: end,
            cover_ms: track.cover_ms(),
        });
    }

    let span = track.frames_in_span(start, end);
    let mut power_sum = 0.0;
    let mut power_n = 0usize;
    let mut pitch_sum = 0.0;
    let mut pitch_n = 0usize;
    for frame in &track.frames[span] {
        power_sum += frame.power_db;
        power_n += 1;
        if let Some(f0) = frame.f0_hz {
            pitch_sum += semitones(f0) - baseline.mean_semitones;
            pitch_n += 1;
        }
    }

    let pause_after_ms = match next_token.and_then(|t| t.start_ms) {
        Some(next_start) => {
            let gap = (next_start - end).max(0.0);
            if gap >= cfg.min_pause_ms {
                gap
            } else {
                0.0
            }
        }
        None => 0.0,
    };

    Ok(ProsodicOutcomes {
        mean_pitch_st: (pitch_n > 0).then(|| pitch_sum / pitch_n as f64),
        mean_power_db: (power_n > 0).then(|| power_sum / power_n as f64),
        duration_ms: end - start,
        pause_after_ms,
    })
}

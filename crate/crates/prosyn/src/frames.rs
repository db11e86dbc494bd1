//! Frame tracks: equally spaced pitch/power frames for one recording.
//!
//! The on-disk format is a headerless TSV with columns `time_ms`, `f0_hz`
//! (empty = unvoiced) and `power_db`. Frame `i` sits at `i * frame_shift_ms`;
//! the shift is inferred from the first two rows on load.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One analysis frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    /// Fundamental frequency in Hz, `None` when the frame is unvoiced.
    pub f0_hz: Option<f64>,
    /// Frame power in dB.
    pub power_db: f64,
}

impl Frame {
    pub fn voiced(f0_hz: f64, power_db: f64) -> Self {
        Frame {
            f0_hz: Some(f0_hz),
            power_db,
        }
    }

    pub fn unvoiced(power_db: f64) -> Self {
        Frame {
            f0_hz: None,
            power_db,
        }
    }
}

/// A sequence of equally spaced frames starting at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrack {
    pub frame_shift_ms: f64,
    pub frames: Vec<Frame>,
}

impl FrameTrack {
    pub fn new(frame_shift_ms: f64, frames: Vec<Frame>) -> Self {
        assert!(frame_shift_ms > 0.0, "frame shift must be positive");
        FrameTrack {
            frame_shift_ms,
            frames,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Time of frame `i` in ms.
    pub fn time_ms(&self, i: usize) -> f64 {
        i as f64 * self.frame_shift_ms
    }

    /// Total time covered, i.e. the time just past the last frame.
    pub fn cover_ms(&self) -> f64 {
        self.frames.len() as f64 * self.frame_shift_ms
    }

    /// Indices of the frames whose timestamp falls in `[start_ms, end_ms)`.
    ///
    /// This is the single span-membership rule shared by feature extraction
    /// and the synthetic generator, so values written per span are recovered
    /// exactly.
    pub fn frames_in_span(&self, start_ms: f64, end_ms: f64) -> std::ops::Range<usize> {
        if end_ms <= start_ms || self.frames.is_empty() {
            return 0..0;
        }
        let shift = self.frame_shift_ms;
        let mut lo = (start_ms / shift).ceil() as usize;
        // Guard against ceil landing one step early on exact boundaries.
        while (lo as f64) * shift < start_ms {
            lo += 1;
        }
        while lo > 0 && (lo as f64 - 1.0) * shift >= start_ms {
            lo -= 1;
        }
        let mut hi = (end_ms / shift).ceil() as usize;
        while (hi as f64) * shift < end_ms {
            hi += 1;
        }
        while hi > 0 && (hi as f64 - 1.0) * shift >= end_ms {
            hi -= 1;
        }
        let lo = lo.min(self.frames.len());
        let hi = hi.min(self.frames.len());
        lo..hi.max(lo)
    }
}

/// Serializes a track to the frame-track TSV format.
pub fn save_frame_track(track: &FrameTrack, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, frame) in track.frames.iter().enumerate() {
        let t = i as f64 * track.frame_shift_ms;
        match frame.f0_hz {
            Some(f0) => out.push_str(&format!("{}\t{}\t{}\n", t, f0, frame.power_db)),
            None => out.push_str(&format!("{}\t\t{}\n", t, frame.power_db)),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a frame-track TSV. Rows must start at time 0 and be equally
/// spaced within 1e-6 ms.
pub fn load_frame_track(path: &Path) -> Result<FrameTrack> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut frames = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::row(
                path,
                lineno,
                format!("expected 3 columns (time_ms, f0_hz, power_db), found {}", cols.len()),
            ));
        }
        let t: f64 = cols[0]
            .parse()
            .map_err(|_| Error::row(path, lineno, format!("invalid time_ms {:?}", cols[0])))?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::row(
                    path,
                    lineno,
                    format!("non-monotone time: {} after {}", t, prev),
                ));
            }
        } else if t != 0.0 {
            return Err(Error::row(
                path,
                lineno,
                format!("track must start at time 0, found {}", t),
            ));
        }
        let f0 = if cols[1].is_empty() {
            None
        } else {
            let v: f64 = cols[1]
                .parse()
                .map_err(|_| Error::row(path, lineno, format!("invalid f0_hz {:?}", cols[1])))?;
            if v <= 0.0 {
                return Err(Error::row(path, lineno, format!("f0_hz must be positive, found {v}")));
            }
            Some(v)
        };
        let power: f64 = cols[2]
            .parse()
            .map_err(|_| Error::row(path, lineno, format!("invalid power_db {:?}", cols[2])))?;
        times.push(t);
        frames.push(Frame { f0_hz: f0, power_db: power });
    }
    if times.len() < 2 {
        return Err(Error::row(
            path,
            times.len(),
            "need at least 2 rows to infer the frame shift",
        ));
    }
    let shift = times[1] - times[0];
    for i in 2..times.len() {
        let spacing = times[i] - times[i - 1];
        if (spacing - shift).abs() > 1e-6 {
            return Err(Error::row(
                path,
                i + 1,
                format!("unequal frame spacing: {} ms after inferring {} ms", spacing, shift),
            ));
        }
    }
    Ok(FrameTrack::new(shift, frames))
}

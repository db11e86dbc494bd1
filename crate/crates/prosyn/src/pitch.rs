//! Autocorrelation pitch tracker.
//!
//! Produces a [`FrameTrack`] from mono PCM: 40 ms analysis windows at a
//! 10 ms shift, f0 from the peak of the normalized autocorrelation over the
//! 60–400 Hz lag range, a voicing decision from the peak height and the
//! window energy, and a 3-point median filter over each voiced run.

use crate::error::{Error, Result};
use crate::frames::{Frame, FrameTrack};

/// Tracker configuration. The defaults are conventional; every value is a
/// plain field so callers can override any of them.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchConfig {
    pub frame_shift_ms: f64,
    pub window_ms: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Peak normalized autocorrelation below this is unvoiced.
    pub voicing_threshold: f64,
    /// Frames quieter than this are unvoiced without an f0 search.
    pub silence_floor_db: f64,
    /// Apply a 3-point median filter over each voiced run.
    pub median_filter: bool,
}

impl Default for PitchConfig {
    fn default() -> Self {
        PitchConfig {
            frame_shift_ms: 10.0,
            window_ms: 40.0,
            f0_min_hz: 60.0,
            f0_max_hz: 400.0,
            voicing_threshold: 0.45,
            silence_floor_db: -60.0,
            median_filter: true,
        }
    }
}

/// Minimum supported sample rate in Hz.
pub const MIN_SAMPLE_RATE_HZ: u32 = 8000;

/// Floor added to the mean square before converting to dB, so that digital
/// silence maps to -120 dB instead of -inf.
const POWER_FLOOR: f64 = 1e-12;

/// Tracks pitch and power over `samples` (mono, normalized to [-1, 1]).
pub fn track_pitch(samples: &[f64], sample_rate_hz: u32, cfg: &PitchConfig) -> Result<FrameTrack> {
    if samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    if sample_rate_hz < MIN_SAMPLE_RATE_HZ {
        return Err(Error::SampleRateTooLow(sample_rate_hz, MIN_SAMPLE_RATE_HZ));
    }
    let rate = sample_rate_hz as f64;
    let shift = ((rate * cfg.frame_shift_ms / 1000.0).round() as usize).max(1);
    let window = ((rate * cfg.window_ms / 1000.0).round() as usize).max(2);
    let lag_min = ((rate / cfg.f0_max_hz).floor() as usize).max(2);
    let lag_max = ((rate / cfg.f0_min_hz).ceil() as usize).min(window - 1);

    let mut frames = Vec::new();
    let mut start = 0usize;
    while start + window <= samples.len() {
        let win = &samples[start..start + window];
        let mean_square = win.iter().map(|x| x * x).sum::<f64>() / window as f64;
        let power_db = 10.0 * (mean_square + POWER_FLOOR).log10();
        let frame = if power_db < cfg.silence_floor_db || lag_min > lag_max {
            Frame::unvoiced(power_db)
        } else {
            match detect_f0(win, lag_min, lag_max, cfg.voicing_threshold) {
                Some(period) => Frame::voiced(rate / period, power_db),
                None => Frame::unvoiced(power_db),
            }
        };
        frames.push(frame);
        start += shift;
    }

    let mut track = FrameTrack::new(shift as f64 * 1000.0 / rate, frames);
    if cfg.median_filter {
        median_filter_voiced_runs(&mut track);
    }
    Ok(track)
}

/// Returns the pitch period in samples, or `None` for an unvoiced window.
fn detect_f0(win: &[f64], lag_min: usize, lag_max: usize, threshold: f64) -> Option<f64> {
    // Normalized cross-correlation r(t) = sum x_i x_{i+t} /
    // sqrt(sum_{i<n-t} x_i^2 * sum_{i>=t} x_i^2), computed one lag past each
    // bound so peaks at the bounds can still be interpolated.
    let n = win.len();
    let lo = lag_min.saturating_sub(1).max(1);
    let hi = (lag_max + 1).min(n - 1);
    let mut corr = vec![0.0f64; hi + 1];
    for lag in lo..=hi {
        let m = n - lag;
        let mut cross = 0.0;
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        for i in 0..m {
            cross += win[i] * win[i + lag];
            e0 += win[i] * win[i];
            e1 += win[i + lag] * win[i + lag];
        }
        let denom = (e0 * e1).sqrt();
        corr[lag] = if denom > 0.0 { cross / denom } else { 0.0 };
    }

    // Local maxima above the voicing threshold are period candidates.
    let mut candidates: Vec<usize> = Vec::new();
    for lag in lag_min..=lag_max {
        let left = if lag > lo { corr[lag - 1] } else { f64::NEG_INFINITY };
        let right = if lag < hi { corr[lag + 1] } else { f64::NEG_INFINITY };
        if corr[lag] >= left && corr[lag] >= right && corr[lag] >= threshold {
            candidates.push(lag);
        }
    }
    let best = *candidates
        .iter()
        .max_by(|a, b| corr[**a].total_cmp(&corr[**b]))?;
    // Prefer the shortest lag whose peak is nearly as high as the best one;
    // this biases against picking a multiple of the true period.
    let chosen = *candidates
        .iter()
        .find(|&&lag| corr[lag] >= 0.98 * corr[best])
        .unwrap_or(&best);

    let mut period = chosen as f64;
    if chosen > lo && chosen < hi {
        // Parabolic interpolation for sub-sample period resolution.
        let (a, b, c) = (corr[chosen - 1], corr[chosen], corr[chosen + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            let delta = 0.5 * (a - c) / denom;
            if delta.abs() <= 0.5 {
                period += delta;
            }
        }
    }
    Some(period)
}

/// 3-point median filter applied independently to every run of consecutive
/// voiced frames; run endpoints are left unchanged.
fn median_filter_voiced_runs(track: &mut FrameTrack) {
    let n = track.frames.len();
    let mut i = 0;
    while i < n {
        if track.frames[i].f0_hz.is_none() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && track.frames[i].f0_hz.is_some() {
            i += 1;
        }
        let run: Vec<f64> = (run_start..i)
            .map(|k| track.frames[k].f0_hz.unwrap())
            .collect();
        if run.len() < 3 {
            continue;
        }
        for k in 1..run.len() - 1 {
            let mut triple = [run[k - 1], run[k], run[k + 1]];
            triple.sort_by(f64::total_cmp);
            track.frames[run_start + k].f0_hz = Some(triple[1]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amplitude: f64, seconds: f64, rate: u32) -> Vec<f64> {
        let n = (seconds * rate as f64) as usize;
        (0..n)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    #[test]
    fn pure_sine_is_voiced_at_the_generator_frequency() {
        let samples = sine(220.0, 0.5, 1.0, 16000);
        let track = track_pitch(&samples, 16000, &PitchConfig::default()).unwrap();
        // Skip the first and last frames; every interior frame must be voiced
        // within 1 Hz of the generator frequency.
        assert!(track.len() > 20);
        for frame in &track.frames[1..track.len() - 1] {
            let f0 = frame.f0_hz.expect("interior frame must be voiced");
            assert!((f0 - 220.0).abs() < 1.0, "f0 = {f0}");
        }
    }

    #[test]
    fn digital_silence_is_unvoiced_at_floor_power() {
        let samples = vec![0.0; 16000];
        let track = track_pitch(&samples, 16000, &PitchConfig::default()).unwrap();
        assert!(!track.is_empty());
        for frame in &track.frames {
            assert_eq!(frame.f0_hz, None);
            assert!((frame.power_db - (-120.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_sine_power_is_minus_three_db() {
        // Mean square of a unit sine is 0.5; 10*log10(0.5) = -3.0103 dB.
        // 200 Hz puts exactly 8 cycles in every 40 ms window, so the
        // windowed mean square is 0.5 without phase wobble.
        let samples = sine(200.0, 1.0, 0.5, 16000);
        let track = track_pitch(&samples, 16000, &PitchConfig::default()).unwrap();
        let mid = track.len() / 2;
        let got = track.frames[mid].power_db;
        assert!((got - 10.0 * 0.5f64.log10()).abs() < 1e-6, "power_db = {got}");
    }

    #[test]
    fn rejects_empty_signal_and_low_rate() {
        assert!(matches!(
            track_pitch(&[], 16000, &PitchConfig::default()),
            Err(Error::EmptySignal)
        ));
        assert!(matches!(
            track_pitch(&[0.1, 0.2], 4000, &PitchConfig::default()),
            Err(Error::SampleRateTooLow(4000, _))
        ));
    }

    #[test]
    fn frame_timing_matches_shift() {
        let samples = sine(150.0, 0.3, 0.2, 16000);
        let track = track_pitch(&samples, 16000, &PitchConfig::default()).unwrap();
        assert_eq!(track.frame_shift_ms, 10.0);
        // 0.2 s at a 40 ms window and 10 ms shift -> (3200-640)/160+1 frames.
        assert_eq!(track.len(), 17);
    }
}

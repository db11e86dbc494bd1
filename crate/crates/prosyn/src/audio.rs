//! Minimal linear PCM WAV input/output.
//!
//! Supports exactly what the pipeline needs: mono 16-bit PCM at any rate of
//! at least 8 kHz. Stereo or non-PCM files are rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Decoded mono audio with samples normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

fn audio_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Audio {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a mono 16-bit PCM WAV file.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(audio_err(path, "not a RIFF/WAVE file"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(audio_err(path, "truncated fmt chunk"));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = pos + 8 + size + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| audio_err(path, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| audio_err(path, "missing data chunk"))?;
    if format != 1 {
        return Err(audio_err(path, format!("unsupported format tag {format}; need PCM (1)")));
    }
    if channels != 1 {
        return Err(audio_err(path, format!("{channels} channels; only mono is supported")));
    }
    if bits != 16 {
        return Err(audio_err(path, format!("{bits}-bit samples; only 16-bit PCM is supported")));
    }
    if rate < crate::pitch::MIN_SAMPLE_RATE_HZ {
        return Err(Error::SampleRateTooLow(rate, crate::pitch::MIN_SAMPLE_RATE_HZ));
    }

    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Ok(AudioBuffer {
        sample_rate_hz: rate,
        samples,
    })
}

/// Writes a mono 16-bit PCM WAV file; samples are clamped to [-1, 1].
pub fn write_wav(path: &Path, sample_rate_hz: u32, samples: &[f64]) -> Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let mut bytes = Vec::with_capacity(44 + samples.len() * 2);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len).to_le_bytes());
    bytes.extend_from_slice(b"WAVEfmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&sample_rate_hz.to_le_bytes());
    bytes.extend_from_slice(&(sample_rate_hz * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..200).map(|i| (i as f64 / 50.0).sin() * 0.8).collect();
        write_wav(&path, 16000, &samples).unwrap();
        let buf = read_wav(&path).unwrap();
        assert_eq!(buf.sample_rate_hz, 16000);
        assert_eq!(buf.samples.len(), samples.len());
        for (a, b) in buf.samples.iter().zip(&samples) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }

    #[test]
    fn rejects_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        // Hand-build a 2-channel header.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&40u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&path, bytes).unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.to_string().contains("mono"));
    }
}

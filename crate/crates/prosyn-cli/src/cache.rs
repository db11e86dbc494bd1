//! Word-feature cache.
//!
//! Pitch extraction dominates runtime, so per-word features are cached as a
//! versioned TSV at the corpus root (`features.tsv`). The header pins the
//! format version, a hash of the corpus content and a hash of the
//! extraction configuration; any mismatch invalidates the cache.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use prosyn::corpus::Corpus;
use prosyn::duration::DurationModel;
use prosyn::pipeline::FeatureRow;
use prosyn::pitch::PitchConfig;
use prosyn::prosody::{OutcomeConfig, ProsodicOutcomes};

pub const CACHE_FILE: &str = "features.tsv";
const FORMAT_VERSION: &str = "prosyn-features v1";

/// Hash of everything that feeds feature extraction besides the corpus:
/// tracker configuration, pause handling and the duration model.
pub fn config_hash(
    pitch: &PitchConfig,
    outcome: &OutcomeConfig,
    duration_model: &DurationModel,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(FORMAT_VERSION.as_bytes());
    hasher.update(format!("{pitch:?}").as_bytes());
    hasher.update(format!("{outcome:?}").as_bytes());
    hasher.update(format!("{}", duration_model.bias).as_bytes());
    for (name, w) in duration_model.feature_names.iter().zip(&duration_model.weights) {
        hasher.update(name.as_bytes());
        hasher.update(format!("{w}").as_bytes());
    }
    hex(&hasher.finalize())
}

/// Hash of the corpus content: every recording's meta, tokens and signal
/// files, in sorted path order.
pub fn corpus_hash(root: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let dir = entry?.path();
        if !dir.is_dir() {
            continue;
        }
        for name in ["meta", "tokens", "frames.tsv"] {
            let path = dir.join(name);
            if path.is_file() {
                files.push(path);
            }
        }
        // Audio files referenced by meta live inside the recording dir.
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "wav") {
                files.push(path);
            }
        }
    }
    files.sort();
    let mut hasher = Sha256::new();
    for path in files {
        hasher.update(path.strip_prefix(root).unwrap_or(&path).to_string_lossy().as_bytes());
        hasher.update([0u8]);
        hasher.update(fs::read(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse()?))
    }
}

/// Writes the cache for a filtered corpus whose features are already
/// computed. Keys are (recording_id, sentence_id, 1-based token index).
pub fn write_cache(
    root: &Path,
    corpus: &Corpus,
    features: &BTreeMap<(usize, usize, usize), FeatureRow>,
    corpus_sha: &str,
    config_sha: &str,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# {FORMAT_VERSION}\n"));
    out.push_str(&format!("# corpus_sha256={corpus_sha}\n"));
    out.push_str(&format!("# config_sha256={config_sha}\n"));
    out.push_str(
        "recording_id\tsentence_id\ttoken_index\tpitch_st\tpower_db\tduration_ms\tpause_ms\tcdur_ms\n",
    );
    for ((ri, si, ti), row) in features {
        let recording = &corpus.recordings[*ri];
        let sentence = &recording.sentences[*si];
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            recording.recording_id,
            sentence.sentence_id,
            sentence.tokens[*ti].index_in_sentence,
            fmt_opt(row.outcomes.mean_pitch_st),
            fmt_opt(row.outcomes.mean_power_db),
            row.outcomes.duration_ms,
            row.outcomes.pause_after_ms,
            row.canonical_duration_ms,
        ));
    }
    fs::write(root.join(CACHE_FILE), out)?;
    Ok(())
}

/// Loads the cache if present and valid for the given hashes; returns the
/// feature map keyed by indices into `corpus` (which must be the filtered
/// corpus the cache was written for).
pub fn load_cache(
    root: &Path,
    corpus: &Corpus,
    corpus_sha: &str,
    config_sha: &str,
) -> Result<Option<BTreeMap<(usize, usize, usize), FeatureRow>>> {
    let path = root.join(CACHE_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    if lines.next() != Some(&format!("# {FORMAT_VERSION}")) {
        return Ok(None);
    }
    if lines.next() != Some(&format!("# corpus_sha256={corpus_sha}")) {
        return Ok(None);
    }
    if lines.next() != Some(&format!("# config_sha256={config_sha}")) {
        return Ok(None);
    }
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("recording_id\t") {
        return Ok(None);
    }

    // Map ids back to indices in the filtered corpus.
    let mut index: BTreeMap<(&str, &str, usize), (usize, usize, usize)> = BTreeMap::new();
    for (ri, recording) in corpus.recordings.iter().enumerate() {
        for (si, sentence) in recording.sentences.iter().enumerate() {
            for (ti, token) in sentence.tokens.iter().enumerate() {
                index.insert(
                    (
                        recording.recording_id.as_str(),
                        sentence.sentence_id.as_str(),
                        token.index_in_sentence,
                    ),
                    (ri, si, ti),
                );
            }
        }
    }

    let mut features = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            bail!("{}: line {}: expected 8 columns", path.display(), lineno + 5);
        }
        let token_index: usize = cols[2].parse()?;
        let Some(&key) = index.get(&(cols[0], cols[1], token_index)) else {
            // Cached row for a token the current corpus view does not have;
            // treat the cache as stale.
            return Ok(None);
        };
        features.insert(
            key,
            FeatureRow {
                outcomes: ProsodicOutcomes {
                    mean_pitch_st: parse_opt(cols[3])?,
                    mean_power_db: parse_opt(cols[4])?,
                    duration_ms: cols[5].parse()?,
                    pause_after_ms: cols[6].parse()?,
                },
                canonical_duration_ms: cols[7].parse()?,
            },
        );
    }
    Ok(Some(features))
}

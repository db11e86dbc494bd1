//! Corpus data model and on-disk ingestion.
//!
//! A corpus directory holds one subdirectory per recording, each with a
//! `meta` descriptor (flat `key=value` lines: `recording_id`, `speaker_id`,
//! optional `audio` and `sample_rate`) and a `tokens` table. The token table
//! is UTF-8 TSV with the fixed column order
//! `sentence_id, index, surface, pos, head, deprel, start_ms, end_ms`;
//! an empty timing field means the timing is missing. Sentences with missing
//! timings are loaded and kept, but flagged as not fully aligned; only fully
//! aligned sentences enter the analysis.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// One aligned word: the unit of observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index_in_sentence: usize,
    pub surface: String,
    pub pos_tag: String,
    /// 0 for the root, otherwise the 1-based index of the head token.
    pub head: usize,
    /// Dependency label, e.g. subj, obja, det, attr, s, neb, rel, aux.
    pub deprel: String,
    pub start_ms: Option<f64>,
    pub end_ms: Option<f64>,
}

impl Token {
    pub fn has_timings(&self) -> bool {
        self.start_ms.is_some() && self.end_ms.is_some()
    }
}

/// An ordered token sequence forming one dependency tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub sentence_id: String,
    pub tokens: Vec<Token>,
    /// True iff every token carries both timing fields.
    pub fully_aligned: bool,
}

impl Sentence {
    pub fn new(sentence_id: String, tokens: Vec<Token>) -> Self {
        let fully_aligned = !tokens.is_empty() && tokens.iter().all(Token::has_timings);
        Sentence {
            sentence_id,
            tokens,
            fully_aligned,
        }
    }
}

/// All sentences read in one recording session by one speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub recording_id: String,
    pub speaker_id: String,
    pub sentences: Vec<Sentence>,
    pub audio_path: Option<PathBuf>,
    pub sample_rate_hz: Option<u32>,
}

impl Recording {
    /// Tokens in stream order, tagged with their (sentence, token) indices.
    pub fn token_stream(&self) -> impl Iterator<Item = (usize, usize, &Token)> {
        self.sentences.iter().enumerate().flat_map(|(si, sentence)| {
            sentence
                .tokens
                .iter()
                .enumerate()
                .map(move |(ti, token)| (si, ti, token))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub recordings: Vec<Recording>,
}

impl Corpus {
    pub fn sentence_count(&self) -> usize {
        self.recordings.iter().map(|r| r.sentences.len()).sum()
    }

    pub fn aligned_sentence_count(&self) -> usize {
        self.recordings
            .iter()
            .flat_map(|r| &r.sentences)
            .filter(|s| s.fully_aligned)
            .count()
    }

    pub fn token_count(&self) -> usize {
        self.recordings
            .iter()
            .flat_map(|r| &r.sentences)
            .map(|s| s.tokens.len())
            .sum()
    }

    pub fn speaker_ids(&self) -> BTreeSet<&str> {
        self.recordings.iter().map(|r| r.speaker_id.as_str()).collect()
    }
}

/// Loads a corpus directory, enforcing all data-model invariants.
///
/// Recordings are processed in parallel and sorted by `recording_id`
/// afterwards, so the result is independent of directory order.
pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();

    let mut recordings = dirs
        .par_iter()
        .map(|dir| load_recording(dir))
        .collect::<Result<Vec<_>>>()?;
    recordings.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));

    let mut seen = BTreeSet::new();
    for recording in &recordings {
        if !seen.insert(recording.recording_id.clone()) {
            return Err(Error::DuplicateRecording(recording.recording_id.clone()));
        }
    }
    Ok(Corpus { recordings })
}

/// Keeps exactly the fully aligned sentences; recordings left without any
/// sentence are dropped.
pub fn filter_fully_aligned(corpus: &Corpus) -> Corpus {
    let recordings = corpus
        .recordings
        .iter()
        .filter_map(|recording| {
            let sentences: Vec<Sentence> = recording
                .sentences
                .iter()
                .filter(|s| s.fully_aligned)
                .cloned()
                .collect();
            if sentences.is_empty() {
                None
            } else {
                Some(Recording {
                    sentences,
                    ..recording.clone()
                })
            }
        })
        .collect();
    Corpus { recordings }
}

/// Writes a corpus back out in the directory layout `load_corpus` reads.
pub fn save_corpus(corpus: &Corpus, root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for recording in &corpus.recordings {
        let dir = root.join(&recording.recording_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let mut meta = String::new();
        writeln!(meta, "recording_id={}", recording.recording_id).unwrap();
        writeln!(meta, "speaker_id={}", recording.speaker_id).unwrap();
        if let Some(audio) = &recording.audio_path {
            writeln!(meta, "audio={}", audio.display()).unwrap();
        }
        if let Some(rate) = recording.sample_rate_hz {
            writeln!(meta, "sample_rate={rate}").unwrap();
        }
        let meta_path = dir.join("meta");
        fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

        let mut table = String::new();
        for sentence in &recording.sentences {
            for token in &sentence.tokens {
                let start = token.start_ms.map(|v| v.to_string()).unwrap_or_default();
                let end = token.end_ms.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    table,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    sentence.sentence_id,
                    token.index_in_sentence,
                    token.surface,
                    token.pos_tag,
                    token.head,
                    token.deprel,
                    start,
                    end
                )
                .unwrap();
            }
        }
        let tokens_path = dir.join("tokens");
        fs::write(&tokens_path, table).map_err(|e| Error::io(&tokens_path, e))?;
    }
    Ok(())
}

fn load_recording(dir: &Path) -> Result<Recording> {
    let meta_path = dir.join("meta");
    if !meta_path.is_file() {
        return Err(Error::InvalidRecording {
            recording: dir.display().to_string(),
            message: "missing meta descriptor".into(),
        });
    }
    let meta = parse_meta(&meta_path)?;
    let tokens_path = dir.join("tokens");
    let sentences = parse_tokens_table(&tokens_path)?;

    let recording = Recording {
        audio_path: meta.audio.map(|rel| dir.join(rel)),
        recording_id: meta.recording_id,
        speaker_id: meta.speaker_id,
        sentences,
        sample_rate_hz: meta.sample_rate,
    };
    validate_recording(&recording)?;
    Ok(recording)
}

struct Meta {
    recording_id: String,
    speaker_id: String,
    audio: Option<PathBuf>,
    sample_rate: Option<u32>,
}

fn parse_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut recording_id = None;
    let mut speaker_id = None;
    let mut audio = None;
    let mut sample_rate = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::row(path, lineno, "expected key=value"))?;
        match key.trim() {
            "recording_id" => recording_id = Some(value.trim().to_string()),
            "speaker_id" => speaker_id = Some(value.trim().to_string()),
            "audio" => audio = Some(PathBuf::from(value.trim())),
            "sample_rate" => {
                let rate: u32 = value.trim().parse().map_err(|_| {
                    Error::row(path, lineno, format!("invalid sample_rate {value:?}"))
                })?;
                if rate == 0 {
                    return Err(Error::row(path, lineno, "sample_rate must be positive"));
                }
                sample_rate = Some(rate);
            }
            other => {
                return Err(Error::row(path, lineno, format!("unknown meta key {other:?}")));
            }
        }
    }
    let recording_id = recording_id
        .filter(|id| !id.is_empty())
        .ok_or_else(|| Error::row(path, 0, "missing recording_id"))?;
    let speaker_id = speaker_id
        .filter(|id| !id.is_empty())
        .ok_or_else(|| Error::row(path, 0, "missing or empty speaker_id"))?;
    Ok(Meta {
        recording_id,
        speaker_id,
        audio,
        sample_rate,
    })
}

fn parse_timing(path: &Path, lineno: usize, field: &str, name: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    let value: f64 = field
        .parse()
        .map_err(|_| Error::row(path, lineno, format!("invalid {name} {field:?}")))?;
    if !value.is_finite() || value < 0.0 {
        return Err(Error::row(
            path,
            lineno,
            format!("{name} must be a non-negative finite number, found {field}"),
        ));
    }
    Ok(Some(value))
}

fn parse_tokens_table(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    let mut current_id: Option<String> = None;
    let mut current: Vec<Token> = Vec::new();

    let mut flush = |id: Option<String>, tokens: &mut Vec<Token>| {
        if let Some(id) = id {
            sentences.push(Sentence::new(id, std::mem::take(tokens)));
        }
    };

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(Error::row(
                path,
                lineno,
                format!("expected 8 tab-separated columns, found {}", cols.len()),
            ));
        }
        let sentence_id = cols[0];
        if sentence_id.is_empty() {
            return Err(Error::row(path, lineno, "empty sentence_id"));
        }
        let index: usize = cols[1]
            .parse()
            .map_err(|_| Error::row(path, lineno, format!("invalid token index {:?}", cols[1])))?;
        let head: usize = cols[4]
            .parse()
            .map_err(|_| Error::row(path, lineno, format!("invalid head {:?}", cols[4])))?;
        let start_ms = parse_timing(path, lineno, cols[6], "start_ms")?;
        let end_ms = parse_timing(path, lineno, cols[7], "end_ms")?;
        if let (Some(s), Some(e)) = (start_ms, end_ms) {
            if e <= s {
                return Err(Error::row(
                    path,
                    lineno,
                    format!("end_ms {e} must be greater than start_ms {s}"),
                ));
            }
        }
        let token = Token {
            index_in_sentence: index,
            surface: cols[2].to_string(),
            pos_tag: cols[3].to_string(),
            head,
            deprel: cols[5].to_string(),
            start_ms,
            end_ms,
        };

        if current_id.as_deref() != Some(sentence_id) {
            if !seen_ids.insert(sentence_id.to_string()) {
                return Err(Error::row(
                    path,
                    lineno,
                    format!("sentence {sentence_id:?} has non-contiguous rows"),
                ));
            }
            flush(current_id.take(), &mut current);
            current_id = Some(sentence_id.to_string());
        }
        if index != current.len() + 1 {
            return Err(Error::row(
                path,
                lineno,
                format!(
                    "token index {index} out of order; expected {}",
                    current.len() + 1
                ),
            ));
        }
        current.push(token);
    }
    flush(current_id, &mut current);
    Ok(sentences)
}

fn validate_recording(recording: &Recording) -> Result<()> {
    for sentence in &recording.sentences {
        validate_tree(&recording.recording_id, sentence)?;
    }
    // Timing values must be non-decreasing over the whole token stream.
    let mut last: Option<f64> = None;
    for (si, _, token) in recording.token_stream() {
        for value in [token.start_ms, token.end_ms].into_iter().flatten() {
            if let Some(prev) = last {
                if value < prev {
                    return Err(Error::InvalidRecording {
                        recording: recording.recording_id.clone(),
                        message: format!(
                            "timings decrease at sentence {:?} token {:?} ({} ms after {} ms)",
                            recording.sentences[si].sentence_id, token.surface, value, prev
                        ),
                    });
                }
            }
            last = Some(value);
        }
    }
    Ok(())
}

fn validate_tree(recording_id: &str, sentence: &Sentence) -> Result<()> {
    let err = |message: String| Error::InvalidTree {
        recording: recording_id.to_string(),
        sentence: sentence.sentence_id.clone(),
        message,
    };
    let n = sentence.tokens.len();
    if n == 0 {
        return Err(err("sentence has no tokens".into()));
    }
    let mut roots = 0;
    for token in &sentence.tokens {
        if token.head == 0 {
            roots += 1;
        } else if token.head > n {
            return Err(err(format!(
                "token {} has head {} outside the sentence (length {})",
                token.index_in_sentence, token.head, n
            )));
        } else if token.head == token.index_in_sentence {
            return Err(err(format!(
                "token {} is its own head",
                token.index_in_sentence
            )));
        }
    }
    if roots != 1 {
        return Err(err(format!("expected exactly one root, found {roots}")));
    }
    // Walking up from every token must reach the root without revisiting.
    for token in &sentence.tokens {
        let mut cursor = token.head;
        let mut steps = 0;
        while cursor != 0 {
            cursor = sentence.tokens[cursor - 1].head;
            steps += 1;
            if steps > n {
                return Err(err(format!(
                    "cycle in head references involving token {}",
                    token.index_in_sentence
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn write_recording(
        root: &Path,
        dir_name: &str,
        meta: &str,
        tokens: &str,
    ) -> PathBuf {
        let dir = root.join(dir_name);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join("meta"), meta).unwrap();
        fs::write(dir.join("tokens"), tokens).unwrap();
        dir
    }

    const META: &str = "recording_id=r1\nspeaker_id=sp1\n";

    #[test]
    fn loads_minimal_fully_aligned_corpus() {
        let tmp = tempfile::tempdir().unwrap();
        write_recording(
            tmp.path(),
            "r1",
            META,
            "s1\t1\tdie\tART\t2\tdet\t0\t180\n\
             s1\t2\tKatze\tNN\t3\tsubj\t180\t560\n\
             s1\t3\tschläft\tVVFIN\t0\ts\t560\t1100\n",
        );
        let corpus = load_corpus(tmp.path()).unwrap();
        assert_eq!(corpus.recordings.len(), 1);
        assert_eq!(corpus.sentence_count(), 1);
        assert!(corpus.recordings[0].sentences[0].fully_aligned);
        assert_eq!(corpus.recordings[0].speaker_id, "sp1");
    }

    #[test]
    fn missing_timing_flags_sentence_but_keeps_it() {
        let tmp = tempfile::tempdir().unwrap();
        write_recording(
            tmp.path(),
            "r1",
            META,
            "s1\t1\tdie\tART\t2\tdet\t0\t180\n\
             s1\t2\tKatze\tNN\t3\tsubj\t180\t\n\
             s1\t3\tschläft\tVVFIN\t0\ts\t560\t1100\n",
        );
        let corpus = load_corpus(tmp.path()).unwrap();
        assert_eq!(corpus.sentence_count(), 1);
        assert!(!corpus.recordings[0].sentences[0].fully_aligned);
    }

    #[test]
    fn self_loop_head_names_the_sentence() {
        let tmp = tempfile::tempdir().unwrap();
        write_recording(
            tmp.path(),
            "r1",
            META,
            "s9\t1\tdie\tART\t2\tdet\t0\t180\n\
             s9\t2\tKatze\tNN\t2\tsubj\t180\t560\n\
             s9\t3\tschläft\tVVFIN\t0\ts\t560\t1100\n",
        );
        let err = load_corpus(tmp.path()).unwrap_err();
        match err {
            Error::InvalidTree { sentence, .. } => assert_eq!(sentence, "s9"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn cycle_and_multi_root_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_recording(
            tmp.path(),
            "r1",
            META,
            "s1\t1\ta\tX\t2\tdet\t\t\n\
             s1\t2\tb\tX\t3\tsubj\t\t\n\
             s1\t3\tc\tX\t1\ts\t\t\n",
        );
        assert!(matches!(
            load_corpus(tmp.path()).unwrap_err(),
            Error::InvalidTree { .. }
        ));

        let tmp = tempfile::tempdir().unwrap();
        write_recording(
            tmp.path(),
            "r1",
            META,
            "s1\t1\ta\tX\t0\tdet\t\t\ns1\t2\tb\tX\t0\ts\t\t\n",
        );
        assert!(matches!(
            load_corpus(tmp.path()).unwrap_err(),
            Error::InvalidTree { .. }
        ));
    }

    #[test]
    fn duplicate_recording_id_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let tokens = "s1\t1\ta\tX\t0\ts\t0\t100\n";
        write_recording(tmp.path(), "dir_a", META, tokens);
        write_recording(tmp.path(), "dir_b", META, tokens);
        assert!(matches!(
            load_corpus(tmp.path()).unwrap_err(),
            Error::DuplicateRecording(id) if id == "r1"
        ));
    }

    #[test]
    fn malformed_row_names_file_and_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_recording(
            tmp.path(),
            "r1",
            META,
            "s1\t1\ta\tX\t0\ts\t0\t100\ns1\t2\tb\tX\tnot_a_head\tdet\t100\t200\n",
        );
        let err = load_corpus(tmp.path()).unwrap_err();
        match err {
            Error::MalformedRow { line, file, .. } => {
                assert_eq!(line, 2);
                assert!(file.ends_with("tokens"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn decreasing_timings_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_recording(
            tmp.path(),
            "r1",
            META,
            "s1\t1\ta\tX\t2\tdet\t0\t300\ns1\t2\tb\tX\t0\ts\t200\t400\n",
        );
        assert!(matches!(
            load_corpus(tmp.path()).unwrap_err(),
            Error::InvalidRecording { .. }
        ));
    }

    #[test]
    fn filter_keeps_only_fully_aligned() {
        let tmp = tempfile::tempdir().unwrap();
        write_recording(
            tmp.path(),
            "r1",
            META,
            "s1\t1\ta\tX\t0\ts\t0\t100\n\
             s2\t1\tb\tX\t0\ts\t100\t200\n\
             s3\t1\tc\tX\t0\ts\t\t\n",
        );
        let corpus = load_corpus(tmp.path()).unwrap();
        let filtered = filter_fully_aligned(&corpus);
        assert_eq!(filtered.sentence_count(), 2);
        assert!(filtered.recordings[0].sentences.iter().all(|s| s.fully_aligned));
        // Idempotent.
        assert_eq!(filter_fully_aligned(&filtered), filtered);
    }

    #[test]
    fn filter_drops_empty_recordings() {
        let tmp = tempfile::tempdir().unwrap();
        write_recording(tmp.path(), "r1", META, "s1\t1\ta\tX\t0\ts\t\t\n");
        let corpus = load_corpus(tmp.path()).unwrap();
        let filtered = filter_fully_aligned(&corpus);
        assert!(filtered.recordings.is_empty());
        assert_eq!(filtered.sentence_count(), 0);
    }

    fn arb_token(index: usize, n: usize) -> impl Strategy<Value = Token> {
        let head = if n == 1 {
            Just(0usize).boxed()
        } else {
            (0..n).prop_map(move |h| if h + 1 == index { 0 } else { h + 1 }).boxed()
        };
        (
            head,
            "[a-zäöüß]{1,8}",
            "[A-Z]{2,4}",
            proptest::option::of((0.0f64..1e5, 1.0f64..2000.0)),
        )
            .prop_map(move |(head, surface, pos, timing)| Token {
                index_in_sentence: index,
                surface,
                pos_tag: pos,
                head,
                deprel: "s".into(),
                start_ms: timing.map(|(s, _)| s),
                end_ms: timing.map(|(s, d)| s + d),
            })
    }

    /// Chain-shaped trees with arbitrary labels/timings; timings are then
    /// rewritten to a monotone stream so recording invariants hold.
    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        proptest::collection::vec(
            (1usize..6).prop_flat_map(|n| {
                proptest::collection::vec(arb_token(1, 1), n..=n).prop_map(move |mut tokens| {
                    for (i, token) in tokens.iter_mut().enumerate() {
                        token.index_in_sentence = i + 1;
                        token.head = i; // chain: token 1 is root
                    }
                    tokens
                })
            }),
            1..6,
        )
        .prop_map(|sentence_tokens| {
            let mut cursor = 0.0;
            let sentences: Vec<Sentence> = sentence_tokens
                .into_iter()
                .enumerate()
                .map(|(si, mut tokens)| {
                    for token in &mut tokens {
                        if token.start_ms.is_some() {
                            token.start_ms = Some(cursor);
                            cursor += 250.0;
                            token.end_ms = Some(cursor);
                            cursor += 50.0;
                        }
                    }
                    Sentence::new(format!("s{si}"), tokens)
                })
                .collect();
            Corpus {
                recordings: vec![Recording {
                    recording_id: "rec0".into(),
                    speaker_id: "spk0".into(),
                    sentences,
                    audio_path: None,
                    sample_rate_hz: None,
                }],
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn save_load_round_trip(corpus in arb_corpus()) {
            let tmp = tempfile::tempdir().unwrap();
            save_corpus(&corpus, tmp.path()).unwrap();
            let loaded = load_corpus(tmp.path()).unwrap();
            prop_assert_eq!(loaded, corpus);
        }

        #[test]
        fn every_sentence_has_one_root(corpus in arb_corpus()) {
            let tmp = tempfile::tempdir().unwrap();
            save_corpus(&corpus, tmp.path()).unwrap();
            let loaded = load_corpus(tmp.path()).unwrap();
            for recording in &loaded.recordings {
                for sentence in &recording.sentences {
                    let roots = sentence.tokens.iter().filter(|t| t.head == 0).count();
                    prop_assert_eq!(roots, 1);
                }
            }
        }
    }
}

//! Synthetic corpus generator with known ground truth.
//!
//! Emits corpora in the on-disk corpus format (tokens, meta, frame tracks,
//! manifest) whose outcome values follow the regression model the analysis
//! fits: `y = β·[1, cdur, pos, slen] + base + b_recording + δ·group + ε`,
//! with per-recording random intercepts and per-(comparison, outcome)
//! injected effects. Frame tracks are written directly (no pitch tracking
//! in the loop), with the per-speaker filler frames chosen so that the
//! speaker's pooled voiced mean equals the speaker's base pitch exactly;
//! word-mean extraction then recovers the generated values to within
//! floating-point error. Template sentences carry exact dependency labels,
//! so comparison selections have exact ground truth too.
//!
//! Everything is seeded: per-recording ChaCha streams make output
//! byte-identical across runs and thread counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::write_wav;
use crate::corpus::{Corpus, Recording, Sentence, Token};
use crate::duration::{seed_model, DurationModel};
use crate::error::{Error, Result};
use crate::frames::{save_frame_track, Frame, FrameTrack};
use crate::pipeline::OutcomeKind;
use crate::prosody::REFERENCE_HZ;
use crate::query::{parse_comparison, ComparisonKind, ComparisonSpec};

const FRAME_SHIFT_MS: f64 = 10.0;
const LEAD_IN_MS: f64 = 100.0;
const TAIL_MS: f64 = 500.0;
const FILLER_POWER_DB: f64 = -50.0;
const MIN_WORD_DURATION_MS: f64 = 20.0;
const AUDIO_RATE_HZ: u32 = 16000;

fn st_to_hz(st: f64) -> f64 {
    REFERENCE_HZ * (st / 12.0).exp2()
}

/// One value per outcome variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub pitch: f64,
    pub power: f64,
    pub duration: f64,
    pub pause: f64,
}

impl OutcomeParams {
    pub fn get(&self, outcome: OutcomeKind) -> f64 {
        match outcome {
            OutcomeKind::Pitch => self.pitch,
            OutcomeKind::Power => self.power,
            OutcomeKind::Duration => self.duration,
            OutcomeKind::Pause => self.pause,
        }
    }
}

/// An injected group effect for one (comparison, outcome) pair, in the
/// outcome's native unit (semitones for pitch). The value is added to the
/// first-listed group, so the reported effect equals `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSpec {
    pub comparison: String,
    pub outcome: OutcomeKind,
    pub value: f64,
}

/// Generator configuration; the seed fully determines the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_speakers: usize,
    pub recordings_per_speaker: usize,
    pub sentences_per_recording: usize,
    pub sentence_length_range: (usize, usize),
    /// Shared textual-feature coefficients [intercept, cdur, pos, slen].
    pub beta_true: [f64; 4],
    /// Per-outcome base level added to the shared intercept, keeping each
    /// outcome on a physically sensible scale.
    pub outcome_base: OutcomeParams,
    /// Random-intercept standard deviation per outcome.
    pub sigma_b: OutcomeParams,
    /// Residual standard deviation per outcome.
    pub sigma_e: OutcomeParams,
    pub delta_true: Vec<DeltaSpec>,
    /// Probability that a sentence loses one timing field.
    pub alignment_dropout: f64,
    /// Write sine-modulated audio instead of frame tracks, exercising the
    /// pitch tracker end to end.
    pub write_audio: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_speakers: 10,
            recordings_per_speaker: 2,
            sentences_per_recording: 15,
            sentence_length_range: (5, 12),
            beta_true: [0.0, 0.002, -0.02, 0.01],
            outcome_base: OutcomeParams {
                pitch: 0.0,
                power: -25.0,
                duration: 280.0,
                pause: 120.0,
            },
            sigma_b: OutcomeParams {
                pitch: 0.5,
                power: 1.0,
                duration: 20.0,
                pause: 20.0,
            },
            sigma_e: OutcomeParams {
                pitch: 1.0,
                power: 2.0,
                duration: 40.0,
                pause: 50.0,
            },
            delta_true: Vec::new(),
            alignment_dropout: 0.0,
            write_audio: false,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let total = self.n_speakers * self.recordings_per_speaker * self.sentences_per_recording;
        if total == 0 {
            return Err(Error::InvalidSynthConfig(
                "zero sentences configured (speakers, recordings and sentences must be positive)"
                    .into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alignment_dropout) {
            return Err(Error::InvalidSynthConfig(format!(
                "alignment_dropout {} outside [0, 1]",
                self.alignment_dropout
            )));
        }
        for outcome in OutcomeKind::ALL {
            if self.sigma_b.get(outcome) < 0.0 || self.sigma_e.get(outcome) < 0.0 {
                return Err(Error::InvalidSynthConfig(format!(
                    "negative standard deviation for {outcome}"
                )));
            }
        }
        if self.sentence_length_range.0 > self.sentence_length_range.1 {
            return Err(Error::InvalidSynthConfig("empty sentence_length_range".into()));
        }
        for delta in &self.delta_true {
            parse_comparison(&delta.comparison)?;
        }
        Ok(())
    }
}

/// Per-word ground truth the generator realized (after physical clamps).
#[derive(Debug, Clone, PartialEq)]
pub struct WordTruth {
    pub recording_id: String,
    pub sentence_index: usize,
    pub token_index: usize,
    pub pitch_st: f64,
    pub power_db: f64,
    pub duration_ms: f64,
    /// Realized alignment gap; 0 for the last token of a recording.
    pub pause_ms: f64,
}

/// Everything the generator produced, in memory.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub tracks: BTreeMap<String, FrameTrack>,
    /// PCM per recording when `write_audio` is set.
    pub audio: BTreeMap<String, Vec<f64>>,
    pub word_truth: Vec<WordTruth>,
    /// Per (recording_id, sentence_id): fully aligned?
    pub aligned_status: Vec<(String, String, bool)>,
    pub config: SynthConfig,
}

impl SynthOutput {
    pub fn aligned_sentence_count(&self) -> usize {
        self.aligned_status.iter().filter(|(_, _, a)| *a).count()
    }

    /// The manifest: flat TSV of true parameters plus per-sentence aligned
    /// status.
    pub fn manifest(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let mut param = |k: &str, v: String| writeln!(out, "param\t{k}\t{v}").unwrap();
        param("seed", c.seed.to_string());
        param("n_speakers", c.n_speakers.to_string());
        param("recordings_per_speaker", c.recordings_per_speaker.to_string());
        param("sentences_per_recording", c.sentences_per_recording.to_string());
        param("sentence_length_min", c.sentence_length_range.0.to_string());
        param("sentence_length_max", c.sentence_length_range.1.to_string());
        for (i, name) in ["intercept", "cdur", "pos", "slen"].iter().enumerate() {
            param(&format!("beta_true.{name}"), c.beta_true[i].to_string());
        }
        for outcome in OutcomeKind::ALL {
            param(&format!("outcome_base.{outcome}"), c.outcome_base.get(outcome).to_string());
            param(&format!("sigma_b.{outcome}"), c.sigma_b.get(outcome).to_string());
            param(&format!("sigma_e.{outcome}"), c.sigma_e.get(outcome).to_string());
        }
        for delta in &c.delta_true {
            param(
                &format!("delta.{}.{}", delta.comparison, delta.outcome),
                delta.value.to_string(),
            );
        }
        param("alignment_dropout", c.alignment_dropout.to_string());
        param("write_audio", c.write_audio.to_string());
        writeln!(out, "summary\taligned_sentences\t{}", self.aligned_sentence_count()).unwrap();
        for (rec, sentence, aligned) in &self.aligned_status {
            writeln!(out, "sentence\t{rec}\t{sentence}\t{aligned}").unwrap();
        }
        out
    }
}

/// Word categories the templates draw from: (surface, POS) pairs.
const NOUNS: &[(&str, &str)] = &[
    ("katze", "NN"),
    ("hund", "NN"),
    ("haus", "NN"),
    ("kind", "NN"),
    ("frau", "NN"),
    ("mann", "NN"),
    ("stadt", "NN"),
    ("wasser", "NN"),
    ("geschichte", "NN"),
    ("regierung", "NN"),
    ("beispiel", "NN"),
    ("sprache", "NN"),
    ("arbeit", "NN"),
    ("berlin", "NE"),
    ("anna", "NE"),
    ("europa", "NE"),
    ("er", "PPER"),
    ("sie", "PPER"),
];
const DETS: &[(&str, &str)] = &[
    ("der", "ART"),
    ("die", "ART"),
    ("das", "ART"),
    ("den", "ART"),
    ("ein", "ART"),
    ("eine", "ART"),
];
const ADJS: &[(&str, &str)] = &[
    ("schwarze", "ADJA"),
    ("schnelle", "ADJA"),
    ("kleine", "ADJA"),
    ("große", "ADJA"),
    ("lange", "ADJA"),
    ("neue", "ADJA"),
    ("alte", "ADJA"),
    ("gute", "ADJA"),
];
const VERBS_FIN: &[(&str, &str)] = &[
    ("sieht", "VVFIN"),
    ("macht", "VVFIN"),
    ("zeigt", "VVFIN"),
    ("sagt", "VVFIN"),
    ("kennt", "VVFIN"),
    ("sucht", "VVFIN"),
    ("findet", "VVFIN"),
    ("hört", "VVFIN"),
];
const VERBS_AUX_FIN: &[(&str, &str)] = &[
    ("hat", "VAFIN"),
    ("wird", "VAFIN"),
    ("kann", "VAFIN"),
    ("muss", "VAFIN"),
    ("soll", "VAFIN"),
];
const VERBS_INF: &[(&str, &str)] = &[
    ("sehen", "VVINF"),
    ("machen", "VVINF"),
    ("zeigen", "VVINF"),
    ("gesehen", "VVPP"),
    ("gemacht", "VVPP"),
    ("gesagt", "VVPP"),
    ("gefunden", "VVPP"),
];
const ADVS: &[(&str, &str)] = &[
    ("heute", "ADV"),
    ("dort", "ADV"),
    ("hier", "ADV"),
    ("oft", "ADV"),
    ("gern", "ADV"),
    ("bald", "ADV"),
    ("jetzt", "ADV"),
    ("dann", "ADV"),
];

#[derive(Debug, Clone, Copy)]
enum Lexeme {
    Noun,
    Det,
    Adj,
    VerbFin,
    VerbAuxFin,
    VerbInf,
}

impl Lexeme {
    fn pool(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Lexeme::Noun => NOUNS,
            Lexeme::Det => DETS,
            Lexeme::Adj => ADJS,
            Lexeme::VerbFin => VERBS_FIN,
            Lexeme::VerbAuxFin => VERBS_AUX_FIN,
            Lexeme::VerbInf => VERBS_INF,
        }
    }
}

/// (lexeme pool, dependency label, 1-based head index; 0 = root)
type Slot = (Lexeme, &'static str, usize);

/// Tree templates mirroring the clause shapes the comparisons need: plain
/// transitive clauses, auxiliary constructions, subordinate, relative and
/// verb-chain clauses. The root index is slot `root`.
fn templates() -> Vec<(Vec<Slot>, usize)> {
    vec![
        // det attr subj V det attr obja
        (
            vec![
                (Lexeme::Det, "det", 3),
                (Lexeme::Adj, "attr", 3),
                (Lexeme::Noun, "subj", 4),
                (Lexeme::VerbFin, "s", 0),
                (Lexeme::Det, "det", 7),
                (Lexeme::Adj, "attr", 7),
                (Lexeme::Noun, "obja", 4),
            ],
            4,
        ),
        // det subj V det obja
        (
            vec![
                (Lexeme::Det, "det", 2),
                (Lexeme::Noun, "subj", 3),
                (Lexeme::VerbFin, "s", 0),
                (Lexeme::Det, "det", 5),
                (Lexeme::Noun, "obja", 3),
            ],
            3,
        ),
        // det subj AUXFIN det obja VINF   (finite auxiliary heads the clause)
        (
            vec![
                (Lexeme::Det, "det", 2),
                (Lexeme::Noun, "subj", 3),
                (Lexeme::VerbAuxFin, "s", 0),
                (Lexeme::Det, "det", 5),
                (Lexeme::Noun, "obja", 6),
                (Lexeme::VerbInf, "aux", 3),
            ],
            3,
        ),
        // det subj AUXFIN VINF det subj NEBFIN VINF   (subordinate clause)
        (
            vec![
                (Lexeme::Det, "det", 2),
                (Lexeme::Noun, "subj", 3),
                (Lexeme::VerbAuxFin, "s", 0),
                (Lexeme::VerbInf, "aux", 3),
                (Lexeme::Det, "det", 6),
                (Lexeme::Noun, "subj", 7),
                (Lexeme::VerbFin, "neb", 3),
                (Lexeme::VerbInf, "aux", 7),
            ],
            3,
        ),
        // det subj RELFIN VINF V det obja   (relative clause on the subject)
        (
            vec![
                (Lexeme::Det, "det", 2),
                (Lexeme::Noun, "subj", 5),
                (Lexeme::VerbFin, "rel", 2),
                (Lexeme::VerbInf, "aux", 3),
                (Lexeme::VerbFin, "s", 0),
                (Lexeme::Det, "det", 7),
                (Lexeme::Noun, "obja", 5),
            ],
            5,
        ),
        // det subj AUXFIN VINF VINF   (verb chain: aux attached to aux)
        (
            vec![
                (Lexeme::Det, "det", 2),
                (Lexeme::Noun, "subj", 3),
                (Lexeme::VerbAuxFin, "s", 0),
                (Lexeme::VerbInf, "aux", 3),
                (Lexeme::VerbInf, "aux", 4),
            ],
            3,
        ),
    ]
}

/// A delta rule resolved against token structure.
struct DeltaRule {
    spec: ComparisonSpec,
    outcome: OutcomeKind,
    value: f64,
}

impl DeltaRule {
    /// Injected amount for the token: `value` when the token falls in the
    /// first-listed group, 0 otherwise (second group or no match).
    fn amount(&self, tokens: &[(String, String, String, usize)], idx: usize) -> f64 {
        let (_, _, deprel, head) = &tokens[idx];
        match self.spec.kind {
            ComparisonKind::Direct => {
                if *deprel == self.spec.label_a {
                    self.value
                } else {
                    0.0
                }
            }
            ComparisonKind::Attached => {
                let child = self.spec.child_label.as_deref().unwrap_or_default();
                if deprel == child && *head > 0 && tokens[*head - 1].2 == self.spec.label_a {
                    self.value
                } else {
                    0.0
                }
            }
        }
    }
}

struct RecordingPlan {
    recording_id: String,
    speaker_index: usize,
    global_index: u64,
    sentence_count: usize,
}

struct BuiltRecording {
    recording: Recording,
    /// (frame index range, pitch st above speaker base, power) per word.
    word_frames: Vec<(std::ops::Range<usize>, f64, f64)>,
    n_frames: usize,
    word_truth: Vec<WordTruth>,
    aligned: Vec<(String, bool)>,
}

/// Generates a corpus in memory.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let duration_model = seed_model();
    let rules: Vec<DeltaRule> = config
        .delta_true
        .iter()
        .map(|d| {
            Ok(DeltaRule {
                spec: parse_comparison(&d.comparison)?,
                outcome: d.outcome,
                value: d.value,
            })
        })
        .collect::<Result<_>>()?;

    // Speaker-level parameters come from a dedicated stream so recording
    // generation order cannot disturb them.
    let mut speaker_rng = ChaCha8Rng::seed_from_u64(config.seed);
    speaker_rng.set_stream(u64::MAX);
    let base_dist = Normal::new(2.0f64, 4.0).expect("valid normal");
    let speaker_bases: Vec<f64> = (0..config.n_speakers)
        .map(|_| base_dist.sample(&mut speaker_rng).clamp(-8.0, 14.0))
        .collect();

    let mut plans = Vec::new();
    for speaker in 0..config.n_speakers {
        for r in 0..config.recordings_per_speaker {
            plans.push(RecordingPlan {
                recording_id: format!("rec{:03}_{:02}", speaker, r),
                speaker_index: speaker,
                global_index: plans.len() as u64,
                sentence_count: config.sentences_per_recording,
            });
        }
    }

    let built: Vec<BuiltRecording> = plans
        .par_iter()
        .map(|plan| build_recording(config, plan, &duration_model, &rules))
        .collect::<Result<Vec<_>>>()?;

    // Per-speaker compensation: choose one filler pitch per speaker so the
    // pooled voiced mean equals the speaker's base exactly, making word
    // extraction recover the generated values.
    let mut word_st_sum = vec![0.0f64; config.n_speakers];
    let mut filler_count = vec![0usize; config.n_speakers];
    for (plan, rec) in plans.iter().zip(&built) {
        let s = plan.speaker_index;
        let mut in_words = 0usize;
        for (range, pitch, _) in &rec.word_frames {
            word_st_sum[s] += range.len() as f64 * pitch;
            in_words += range.len();
        }
        filler_count[s] += rec.n_frames - in_words;
    }
    let filler_st: Vec<f64> = (0..config.n_speakers)
        .map(|s| {
            if filler_count[s] == 0 {
                0.0
            } else {
                // Word frames sit at base + v; fillers at base + offset with
                // offset chosen so the pooled mean is exactly base.
                -word_st_sum[s] / filler_count[s] as f64
            }
        })
        .collect();

    let mut corpus = Corpus::default();
    let mut tracks = BTreeMap::new();
    let mut audio = BTreeMap::new();
    let mut word_truth = Vec::new();
    let mut aligned_status = Vec::new();
    for (plan, rec) in plans.iter().zip(built) {
        let base = speaker_bases[plan.speaker_index];
        let mut frames = vec![
            Frame::voiced(st_to_hz(base + filler_st[plan.speaker_index]), FILLER_POWER_DB);
            rec.n_frames
        ];
        for (range, pitch, power) in &rec.word_frames {
            for i in range.clone() {
                frames[i] = Frame::voiced(st_to_hz(base + pitch), *power);
            }
        }
        let track = FrameTrack::new(FRAME_SHIFT_MS, frames);
        if config.write_audio {
            audio.insert(rec.recording.recording_id.clone(), synthesize_audio(&track));
        }
        tracks.insert(rec.recording.recording_id.clone(), track);
        for (sentence_id, aligned) in rec.aligned {
            aligned_status.push((rec.recording.recording_id.clone(), sentence_id, aligned));
        }
        word_truth.extend(rec.word_truth);
        corpus.recordings.push(rec.recording);
    }
    corpus.recordings.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));

    Ok(SynthOutput {
        corpus,
        tracks,
        audio,
        word_truth,
        aligned_status,
        config: config.clone(),
    })
}

fn build_recording(
    config: &SynthConfig,
    plan: &RecordingPlan,
    duration_model: &DurationModel,
    rules: &[DeltaRule],
) -> Result<BuiltRecording> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(plan.global_index + 1);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");

    // Per-recording random intercepts, one per outcome.
    let b: Vec<f64> = OutcomeKind::ALL
        .iter()
        .map(|o| normal.sample(&mut rng) * config.sigma_b.get(*o))
        .collect();

    let template_pool = templates();
    let mut sentences = Vec::new();
    let mut aligned = Vec::new();
    // (surface, pos, deprel, head) for all tokens of the recording plus the
    // sentence boundaries, so pauses can look across sentences.
    let mut all_tokens: Vec<(String, String, String, usize)> = Vec::new();
    let mut sentence_spans: Vec<(String, usize, usize)> = Vec::new();
    for s in 0..plan.sentence_count {
        let (slots, root) = &template_pool[rng.random_range(0..template_pool.len())];
        let core: Vec<(String, String, String, usize)> = slots
            .iter()
            .map(|(lexeme, deprel, head)| {
                let pool = lexeme.pool();
                let (surface, pos) = pool[rng.random_range(0..pool.len())];
                (surface.to_string(), pos.to_string(), deprel.to_string(), *head)
            })
            .collect();
        // Pad with adverbs attached to the root up to a sampled target
        // length, split between clause-initial and clause-final position so
        // word positions decorrelate from the template slots.
        let (lo, hi) = config.sentence_length_range;
        let target = rng.random_range(lo..=hi).max(core.len());
        let extra = (target - core.len()).min(6);
        let front = if extra > 0 { rng.random_range(0..=extra) } else { 0 };
        let shifted_root = root + front;
        let mut tokens = Vec::with_capacity(core.len() + extra);
        let mut adv = |rng: &mut ChaCha8Rng| {
            let (surface, pos) = ADVS[rng.random_range(0..ADVS.len())];
            (surface.to_string(), pos.to_string(), "adv".to_string(), shifted_root)
        };
        for _ in 0..front {
            tokens.push(adv(&mut rng));
        }
        for (surface, pos, deprel, head) in core {
            let head = if head == 0 { 0 } else { head + front };
            tokens.push((surface, pos, deprel, head));
        }
        for _ in 0..extra - front {
            tokens.push(adv(&mut rng));
        }
        let start = all_tokens.len();
        all_tokens.extend(tokens);
        sentence_spans.push((format!("s{s:03}"), start, all_tokens.len()));
    }

    // Outcome values per token.
    let n_tokens = all_tokens.len();
    let mut values = vec![[0.0f64; 4]; n_tokens];
    for (sid, start, end) in &sentence_spans {
        let _ = sid;
        let slen = (end - start) as f64;
        for (offset, idx) in (*start..*end).enumerate() {
            let cdur = duration_model.predict(&all_tokens[idx].0)?;
            let pos = (offset + 1) as f64;
            let xb = config.beta_true[0]
                + config.beta_true[1] * cdur
                + config.beta_true[2] * pos
                + config.beta_true[3] * slen;
            for (oi, outcome) in OutcomeKind::ALL.iter().enumerate() {
                let mut v = xb
                    + config.outcome_base.get(*outcome)
                    + b[oi]
                    + normal.sample(&mut rng) * config.sigma_e.get(*outcome);
                for rule in rules {
                    if rule.outcome == *outcome {
                        v += rule.amount(&all_tokens, idx);
                    }
                }
                values[idx][oi] = v;
            }
        }
    }

    // Alignment dropout: one end timing per hit sentence.
    let mut dropped: Vec<Option<usize>> = Vec::with_capacity(sentence_spans.len());
    for (_, start, end) in &sentence_spans {
        if config.alignment_dropout > 0.0 && rng.random::<f64>() < config.alignment_dropout {
            dropped.push(Some(rng.random_range(*start..*end)));
        } else {
            dropped.push(None);
        }
    }

    // Lay words on the timeline and collect frame spans.
    let mut cursor = LEAD_IN_MS;
    let mut word_frames = Vec::with_capacity(n_tokens);
    let mut word_truth = Vec::with_capacity(n_tokens);
    let mut timings: Vec<(f64, f64)> = Vec::with_capacity(n_tokens);
    for idx in 0..n_tokens {
        let duration = values[idx][2].max(MIN_WORD_DURATION_MS);
        let is_last = idx + 1 == n_tokens;
        let pause = if is_last { 0.0 } else { values[idx][3].max(0.0) };
        let start = cursor;
        let end = start + duration;
        cursor = end + pause;
        timings.push((start, end));
        word_truth.push(WordTruth {
            recording_id: plan.recording_id.clone(),
            sentence_index: 0, // fixed below
            token_index: 0,
            pitch_st: values[idx][0],
            power_db: values[idx][1],
            duration_ms: end - start,
            pause_ms: if is_last { 0.0 } else { cursor - end },
        });
    }
    let total_ms = cursor + TAIL_MS;
    let n_frames = (total_ms / FRAME_SHIFT_MS).ceil() as usize;
    let probe = FrameTrack::new(FRAME_SHIFT_MS, vec![Frame::unvoiced(0.0); n_frames]);
    for idx in 0..n_tokens {
        let (start, end) = timings[idx];
        let range = probe.frames_in_span(start, end);
        word_frames.push((range, values[idx][0], values[idx][1]));
    }

    // Assemble sentences with indices and timings.
    for (sidx, (sid, start, end)) in sentence_spans.iter().enumerate() {
        let mut tokens = Vec::with_capacity(end - start);
        for (offset, idx) in (*start..*end).enumerate() {
            let (surface, pos, deprel, head) = all_tokens[idx].clone();
            let (t0, t1) = timings[idx];
            let drop_end = dropped[sidx] == Some(idx);
            tokens.push(Token {
                index_in_sentence: offset + 1,
                surface,
                pos_tag: pos,
                head,
                deprel,
                start_ms: Some(t0),
                end_ms: if drop_end { None } else { Some(t1) },
            });
            word_truth[idx].sentence_index = sidx;
            word_truth[idx].token_index = offset;
        }
        let sentence = Sentence::new(sid.clone(), tokens);
        aligned.push((sid.clone(), sentence.fully_aligned));
        sentences.push(sentence);
    }

    let recording = Recording {
        recording_id: plan.recording_id.clone(),
        speaker_id: format!("spk{:03}", plan.speaker_index),
        sentences,
        audio_path: config
            .write_audio
            .then(|| std::path::PathBuf::from("audio.wav")),
        sample_rate_hz: config.write_audio.then_some(AUDIO_RATE_HZ),
    };
    Ok(BuiltRecording {
        recording,
        word_frames,
        n_frames,
        word_truth,
        aligned,
    })
}

/// Renders a frame track as a continuous-phase sine, one frequency and
/// amplitude per frame; unvoiced frames are silence.
fn synthesize_audio(track: &FrameTrack) -> Vec<f64> {
    let rate = AUDIO_RATE_HZ as f64;
    let samples_per_frame = (rate * track.frame_shift_ms / 1000.0).round() as usize;
    let mut samples = Vec::with_capacity(track.len() * samples_per_frame);
    let mut phase = 0.0f64;
    for frame in &track.frames {
        match frame.f0_hz {
            Some(f0) => {
                let amp = (2.0 * 10f64.powf(frame.power_db / 10.0)).sqrt().min(1.0);
                let step = 2.0 * std::f64::consts::PI * f0 / rate;
                for _ in 0..samples_per_frame {
                    phase += step;
                    samples.push(amp * phase.sin());
                }
            }
            None => samples.extend(std::iter::repeat(0.0).take(samples_per_frame)),
        }
    }
    samples
}

/// Generates and writes a corpus directory: per-recording subdirectories
/// with `meta`, `tokens` and `frames.tsv` (or `audio.wav`), plus a
/// `manifest.tsv` at the root.
pub fn generate_to_dir(config: &SynthConfig, out: &Path) -> Result<SynthOutput> {
    let output = generate(config)?;
    write_to_dir(&output, out)?;
    Ok(output)
}

/// Writes an in-memory generator output to disk.
pub fn write_to_dir(output: &SynthOutput, out: &Path) -> Result<()> {
    crate::corpus::save_corpus(&output.corpus, out)?;
    for recording in &output.corpus.recordings {
        let dir = out.join(&recording.recording_id);
        if output.config.write_audio {
            let pcm = &output.audio[&recording.recording_id];
            write_wav(&dir.join("audio.wav"), AUDIO_RATE_HZ, pcm)?;
        } else {
            save_frame_track(&output.tracks[&recording.recording_id], &dir.join("frames.tsv"))?;
        }
    }
    let manifest_path = out.join("manifest.tsv");
    std::fs::write(&manifest_path, output.manifest()).map_err(|e| Error::io(&manifest_path, e))
}

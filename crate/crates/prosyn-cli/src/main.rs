//! Command-line front end: corpus validation, feature extraction, duration
//! model training, synthetic corpus generation and the analysis itself.

mod cache;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use prosyn::audio::read_wav;
use prosyn::corpus::{filter_fully_aligned, load_corpus, Corpus};
use prosyn::duration::{load_lexicon, seed_model, train_duration_model, DurationModel};
use prosyn::frames::{load_frame_track, FrameTrack};
use prosyn::lmm::TestResult;
use prosyn::pipeline::{
    render_report, run_table, AnalysisInput, AnalysisOptions, CellResult, OutcomeKind, ReportCell,
    ReportFormat, ReportMeta,
};
use prosyn::pitch::{track_pitch, PitchConfig};
use prosyn::prosody::OutcomeConfig;
use prosyn::query::{parse_comparison, table1_presets, ComparisonSpec};
use prosyn::synth::{generate_to_dir, SynthConfig};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit code for usage errors (unknown flags, malformed arguments).
const EXIT_USAGE: u8 = 64;
/// Exit code when the analysis ran but skipped at least one cell.
const EXIT_SKIPPED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "prosyn",
    version,
    about = "Measures correlations between syntactic functions and prosodic realization \
             in aligned, dependency-parsed speech corpora"
)]
struct Cli {
    /// Worker threads (default: available parallelism). Results are
    /// identical for any worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus directory and print a summary.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Extract frame tracks and per-word features into the cache.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        /// Recompute even when a valid cache exists.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        extraction: ExtractionArgs,
    },
    /// Train the canonical-duration model from a lexicon.
    TrainDurations {
        /// Lexicon TSV (word<TAB>duration_ms); defaults to the built-in
        /// German seed lexicon.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run comparisons against a corpus and render the report.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus with known ground truth.
    Synth {
        /// TOML config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-render a report from a cells TSV dump.
    Report {
        /// Cells TSV produced by `analyze --cells`.
        #[arg(long)]
        cells: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExtractionArgs {
    /// Trained duration model file; defaults to the built-in seed model.
    #[arg(long)]
    duration_model: Option<PathBuf>,
    /// Alignment gaps shorter than this count as no pause (ms).
    #[arg(long, default_value_t = 0.0)]
    min_pause: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Comparison query (`a~b`, `c->(a~b)`, optional `[pos=..]` suffix) or
    /// `preset:table1`; repeatable.
    #[arg(long = "comparison", default_values_t = [String::from("preset:table1")])]
    comparisons: Vec<String>,
    /// Comma-separated outcome list.
    #[arg(long, default_value = "pitch,power,duration,pause")]
    outcomes: String,
    /// Multiply p-values by the number of tests (clamped at 1).
    #[arg(long)]
    bonferroni: bool,
    /// Minimum usable rows per cell.
    #[arg(long, default_value_t = 50)]
    min_rows: usize,
    /// Write the rendered report here (stdout when omitted).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-cell TSV dump here.
    #[arg(long)]
    cells: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    #[command(flatten)]
    extraction: ExtractionArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Markdown,
    Tsv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> ReportFormat {
        match f {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Tsv => ReportFormat::Tsv,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = err.print();
                    return ExitCode::SUCCESS;
                }
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    if let Some(workers) = cli.workers {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: {err}");
            return ExitCode::FAILURE;
        }
    }

    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Ingest { corpus } => cmd_ingest(&corpus),
        Command::Extract {
            corpus,
            force,
            extraction,
        } => cmd_extract(&corpus, force, &extraction),
        Command::TrainDurations { lexicon, out } => cmd_train_durations(lexicon.as_deref(), &out),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Synth { config, out, seed } => cmd_synth(config.as_deref(), &out, seed),
        Command::Report { cells, format, out } => cmd_report(&cells, format, out.as_deref()),
    }
}

fn cmd_ingest(root: &Path) -> Result<ExitCode> {
    let corpus = load_corpus(root)?;
    let aligned = corpus.aligned_sentence_count();
    println!("corpus: {}", root.display());
    println!("recordings: {}", corpus.recordings.len());
    println!("speakers: {}", corpus.speaker_ids().len());
    println!("sentences: {} ({} fully aligned)", corpus.sentence_count(), aligned);
    println!("tokens: {}", corpus.token_count());
    Ok(ExitCode::SUCCESS)
}

fn cmd_train_durations(lexicon: Option<&Path>, out: &Path) -> Result<ExitCode> {
    let entries = match lexicon {
        Some(path) => load_lexicon(path)?,
        None => prosyn::duration::parse_lexicon(
            prosyn::duration::SEED_LEXICON,
            Path::new("<seed lexicon>"),
        )?,
    };
    let model = train_duration_model(&entries)?;
    model.save(out)?;
    println!("trained on {} lexicon entries -> {}", entries.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<ExitCode> {
    let mut cfg: SynthConfig = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let output = generate_to_dir(&cfg, out)?;
    println!(
        "generated {} recordings, {} sentences ({} fully aligned) -> {}",
        output.corpus.recordings.len(),
        output.corpus.sentence_count(),
        output.aligned_sentence_count(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Maps recording ids to their directories by peeking at each meta file.
fn recording_dirs(root: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for entry in fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let dir = entry?.path();
        if !dir.is_dir() {
            continue;
        }
        let meta = dir.join("meta");
        if !meta.is_file() {
            continue;
        }
        let text = fs::read_to_string(&meta)?;
        for line in text.lines() {
            if let Some(id) = line.trim().strip_prefix("recording_id=") {
                map.insert(id.trim().to_string(), dir.clone());
                break;
            }
        }
    }
    Ok(map)
}

/// Loads or computes the frame track of every recording: `frames.tsv` when
/// present, otherwise pitch tracking over the referenced audio.
fn load_tracks(
    corpus: &Corpus,
    dirs: &BTreeMap<String, PathBuf>,
    pitch_cfg: &PitchConfig,
) -> Result<BTreeMap<String, FrameTrack>> {
    use rayon::prelude::*;
    let tracks: Vec<(String, FrameTrack)> = corpus
        .recordings
        .par_iter()
        .map(|recording| -> Result<(String, FrameTrack)> {
            let dir = dirs.get(&recording.recording_id).ok_or_else(|| {
                anyhow!("no directory found for recording {}", recording.recording_id)
            })?;
            let frames_path = dir.join("frames.tsv");
            let track = if frames_path.is_file() {
                load_frame_track(&frames_path)?
            } else if let Some(audio) = &recording.audio_path {
                let buf = read_wav(audio)?;
                track_pitch(&buf.samples, buf.sample_rate_hz, pitch_cfg)?
            } else {
                bail!(
                    "recording {} has neither frames.tsv nor audio",
                    recording.recording_id
                );
            };
            Ok((recording.recording_id.clone(), track))
        })
        .collect::<Result<_>>()?;
    Ok(tracks.into_iter().collect())
}

fn load_duration_model(path: Option<&Path>) -> Result<DurationModel> {
    Ok(match path {
        Some(p) => DurationModel::load(p)?,
        None => seed_model(),
    })
}

/// Shared by `extract` and `analyze`: produce the analysis input, from the
/// cache when valid, recomputing (and rewriting the cache) otherwise.
fn prepare_input(
    root: &Path,
    extraction: &ExtractionArgs,
    force: bool,
) -> Result<(AnalysisInput, bool)> {
    let corpus = load_corpus(root)?;
    let filtered = filter_fully_aligned(&corpus);
    if filtered.sentence_count() == 0 {
        bail!(
            "corpus has no fully aligned sentences; the analysis uses only sentences \
             in which every token carries start and end timings"
        );
    }

    let duration_model = load_duration_model(extraction.duration_model.as_deref())?;
    let pitch_cfg = PitchConfig::default();
    let outcome_cfg = OutcomeConfig {
        min_pause_ms: extraction.min_pause,
    };
    let corpus_sha = cache::corpus_hash(root)?;
    let config_sha = cache::config_hash(&pitch_cfg, &outcome_cfg, &duration_model);

    if !force {
        if let Some(features) = cache::load_cache(root, &filtered, &corpus_sha, &config_sha)? {
            return Ok((AnalysisInput::from_features(filtered, features), true));
        }
    }

    let dirs = recording_dirs(root)?;
    let tracks = load_tracks(&filtered, &dirs, &pitch_cfg)?;
    let input = AnalysisInput::prepare(filtered, &tracks, &duration_model, &outcome_cfg)?;
    cache::write_cache(root, &input.corpus, input.features(), &corpus_sha, &config_sha)?;
    Ok((input, false))
}

fn cmd_extract(root: &Path, force: bool, extraction: &ExtractionArgs) -> Result<ExitCode> {
    let (input, from_cache) = prepare_input(root, extraction, force)?;
    for warning in &input.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "{} feature rows over {} recordings ({})",
        input.features().len(),
        input.corpus.recordings.len(),
        if from_cache { "cache hit" } else { "recomputed" }
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_comparisons(args: &[String]) -> Result<Vec<ComparisonSpec>> {
    let mut specs = Vec::new();
    for arg in args {
        if arg == "preset:table1" {
            specs.extend(table1_presets());
        } else if let Some(rest) = arg.strip_prefix("preset:") {
            bail!("unknown preset {rest:?}; available: table1");
        } else {
            specs.push(parse_comparison(arg)?);
        }
    }
    Ok(specs)
}

fn parse_outcomes(arg: &str) -> Result<Vec<OutcomeKind>> {
    arg.split(',')
        .map(|s| Ok(OutcomeKind::parse(s.trim())?))
        .collect()
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<ExitCode> {
    let presets = parse_comparisons(&args.comparisons)?;
    let outcomes = parse_outcomes(&args.outcomes)?;
    let (input, _) = prepare_input(&args.corpus, &args.extraction, false)?;
    for warning in &input.warnings {
        eprintln!("warning: {warning}");
    }

    let opts = AnalysisOptions {
        min_rows: args.min_rows,
        bonferroni: args.bonferroni,
        ..Default::default()
    };
    let cells = run_table(&presets, &outcomes, &input, &opts);

    let meta = ReportMeta {
        tool_version: VERSION.to_string(),
        config_echo: format!(
            "comparisons={} outcomes={} bonferroni={} min_rows={} min_pause={}",
            args.comparisons.join(","),
            args.outcomes,
            args.bonferroni,
            args.min_rows,
            args.extraction.min_pause,
        ),
    };
    let report = render_report(&cells, args.format.into(), &meta);
    match &args.report {
        Some(path) => fs::write(path, &report)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{report}"),
    }
    if let Some(path) = &args.cells {
        let dump = render_report(&cells, ReportFormat::Tsv, &meta);
        fs::write(path, dump).with_context(|| format!("writing {}", path.display()))?;
    }

    let skipped: Vec<&ReportCell> = cells.iter().filter(|c| c.is_skipped()).collect();
    for cell in &skipped {
        if let CellResult::Skipped { reason } = &cell.result {
            eprintln!("skipped {} / {}: {reason}", cell.comparison, cell.outcome);
        }
    }
    Ok(if skipped.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SKIPPED)
    })
}

/// Parses a cells TSV dump back into report cells for re-rendering.
fn parse_cells(path: &Path) -> Result<Vec<ReportCell>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cells = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if !line.starts_with("comparison\t") {
                bail!("{}: line {}: not a cells dump", path.display(), lineno + 1);
            }
            saw_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            bail!("{}: line {}: expected 10 columns", path.display(), lineno + 1);
        }
        let outcome = OutcomeKind::parse(cols[1])?;
        let n_rows = cols[2].parse()?;
        let n_groups = cols[3].parse()?;
        let result = if cols[9] == "skipped" {
            CellResult::Skipped {
                reason: "skipped in the original run".into(),
            }
        } else {
            CellResult::Tested {
                test: TestResult {
                    lr_stat: cols[4].parse()?,
                    df: 1,
                    p_value: cols[5].parse()?,
                    effect: cols[7].parse()?,
                    stars: cols[9].to_string(),
                },
                effect_se: 0.0,
                p_adjusted: cols[6].parse()?,
            }
        };
        cells.push(ReportCell {
            comparison: cols[0].to_string(),
            outcome,
            n_rows,
            n_groups,
            result,
        });
    }
    if !saw_header {
        bail!("{}: missing header line", path.display());
    }
    Ok(cells)
}

fn cmd_report(cells_path: &Path, format: FormatArg, out: Option<&Path>) -> Result<ExitCode> {
    let cells = parse_cells(cells_path)?;
    let meta = ReportMeta {
        tool_version: VERSION.to_string(),
        config_echo: format!("re-rendered from {}", cells_path.display()),
    };
    let report = render_report(&cells, format.into(), &meta);
    match out {
        Some(path) => fs::write(path, report)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{report}"),
    }
    Ok(ExitCode::SUCCESS)
}

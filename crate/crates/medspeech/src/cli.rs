//! The `medspeech` command line: one subcommand per pipeline stage plus
//! `pipeline`, which chains them.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use medspeech_core::audio::{duration_stats, resample, AudioClip, AudioError};
use medspeech_core::augment::{apply_pipeline_with_codec, codec_sim, AugmentConfig, AugmentError, NoiseBank};
use medspeech_core::corpus::{
    build_alphabet, normalize_transcript, split_manifest, Alphabet, CorpusError, ManifestEntry,
};
use medspeech_core::decode::{beam_search, greedy_decode, DecodeError, LmFusion};
use medspeech_core::eval::{build_report, char_ops, word_ops, EditOps, EvalError};
use medspeech_core::features::FeatureError;
use medspeech_core::lm::{train_lm, LmError, NGramModel, TokenMode};
use rayon::prelude::*;
use thiserror::Error;

use crate::arpa::{read_arpa, write_arpa, ArpaError};
use crate::config::{load_augment_config, ConfigError, PipelineConfig};
use crate::manifest::{read_alphabet, read_manifest, write_alphabet, write_manifest, ManifestError};
use crate::matrix::{read_logits, write_logits, write_spectrogram, MatrixError};
use crate::testkit::{synth_corpus, synth_logits, SynthSpec, TestkitError, DEFAULT_VOCAB};
use crate::wav::{load_wav, save_wav, WavError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    At {
        path: PathBuf,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Arpa(#[from] ArpaError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Testkit(#[from] TestkitError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Internal(_) => EXIT_INTERNAL,
            CliError::At { source, .. } => source.exit_code(),
            _ => EXIT_DATA,
        }
    }

    fn at(self, path: &Path) -> Self {
        CliError::At {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "medspeech",
    version,
    about = "Medical speech recognition corpus, decoding and evaluation toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert WAV files to 16-bit mono at a target rate and write a manifest
    Convert(ConvertArgs),
    /// Print duration statistics and per-tag totals for a manifest
    Stats(StatsArgs),
    /// Split a manifest into train/dev/test manifests
    Split(SplitArgs),
    /// Write augmented copies of every utterance in a manifest
    Augment(AugmentArgs),
    /// Train a Kneser-Ney n-gram model and write it as ARPA
    LmTrain(LmTrainArgs),
    /// Score text with an ARPA model (log10 probabilities)
    LmScore(LmScoreArgs),
    /// Decode CTC logit files to text
    Decode(DecodeArgs),
    /// Print WER and CER for a ref,hyp pairs file
    Eval(EvalArgs),
    /// Print a per-dataset WER/CER table for a pairs file
    Report(ReportArgs),
    /// Generate a synthetic tone corpus with manifest and alphabet
    Synth(SynthArgs),
    /// Generate synthetic logit files that spell transcripts
    SynthLogits(SynthLogitsArgs),
    /// Run convert, stats, split, augment, lm-train, synth-logits, decode and report
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Word,
    Char,
}

impl From<ModeArg> for TokenMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Word => TokenMode::Word,
            ModeArg::Char => TokenMode::Char,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    /// Source directory: uses its manifest.csv if present, else every *.wav with a sibling .txt transcript
    #[arg(long = "in", value_name = "DIR")]
    pub input: PathBuf,
    /// Directory for converted WAV files
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Output manifest path; file names in it are relative to its directory
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 16_000)]
    pub rate: u32,
    /// Dataset tag for files found without a source manifest
    #[arg(long, default_value = "standard")]
    pub tag: String,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Directory receiving train.csv, dev.csv and test.csv
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Directory for augmented WAVs, manifest.csv and augment_log.csv
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Augmentation JSON; built-in defaults when absent
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory of noise WAVs for overlay
    #[arg(long, value_name = "DIR")]
    pub noise_dir: Option<PathBuf>,
    /// Overrides pipeline_seed from the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write each augmented spectrogram as a .spec file
    #[arg(long)]
    pub spectrograms: bool,
    /// External codec round trip run through `sh -c`; `{in}` and `{out}` are replaced by WAV paths
    #[arg(long, value_name = "CMD")]
    pub codec_cmd: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct LmTrainArgs {
    /// Train on the transcripts of this manifest
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "transcripts",
        required_unless_present = "transcripts"
    )]
    pub manifest: Option<PathBuf>,
    /// Train on a text file, one transcript per line
    #[arg(long, value_name = "FILE")]
    pub transcripts: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Word)]
    pub mode: ModeArg,
    /// Use this discount at every order instead of estimating it
    #[arg(long)]
    pub discount: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LmScoreArgs {
    #[arg(long, value_name = "FILE")]
    pub lm: PathBuf,
    /// Overrides the token mode recorded in the file
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub text: Option<String>,
    /// Text file, one sentence per line
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    /// A .ctcl file, or with --manifest a directory of them
    #[arg(long, value_name = "PATH")]
    pub logits: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub alphabet: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub lm: Option<PathBuf>,
    /// Overrides the token mode recorded in the LM file
    #[arg(long, value_enum)]
    pub lm_mode: Option<ModeArg>,
    #[arg(long, default_value_t = 0.75, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.85, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 128)]
    pub beam: usize,
    /// Best-path decoding; ignores the LM and beam settings
    #[arg(long)]
    pub greedy: bool,
    /// Decode one logit file per entry (same relative path, .ctcl extension) and write ref/hyp pairs
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Pairs CSV destination; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// CSV with a header containing `ref` and `hyp` columns
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// CSV with `ref` and `hyp` columns, grouped by `dataset_tag` when present
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    /// Print CSV instead of the aligned table
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Vocabulary file, one word per line; built-in symptom words when absent
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthLogitsArgs {
    /// Write one logit file per manifest entry under --out
    #[arg(long, value_name = "FILE", conflicts_with = "text", required_unless_present = "text")]
    pub manifest: Option<PathBuf>,
    /// Write a single logit file for this text to --out
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub alphabet: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub frames_per_char: usize,
    #[arg(long, default_value_t = 1)]
    pub blank_gap: usize,
    #[arg(long, default_value_t = 1.0)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Pipeline JSON; the flags below override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long = "in", value_name = "DIR")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub work_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rate: Option<u32>,
    #[arg(long, value_name = "FILE")]
    pub augment_config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub noise_dir: Option<PathBuf>,
    #[arg(long)]
    pub lm_order: Option<usize>,
    #[arg(long, value_enum)]
    pub lm_mode: Option<ModeArg>,
    /// Decode without the language model
    #[arg(long)]
    pub no_lm: bool,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Parses `args` (program name first), runs the subcommand and maps the
/// outcome to an exit code. Data goes to `stdout`, diagnostics to `stderr`.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match run(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Process entry point used by the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MEDSPEECH_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let outcome =
        std::panic::catch_unwind(|| main_with_args(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock()));
    ExitCode::from(outcome.unwrap_or(EXIT_INTERNAL))
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Convert(a) => convert(&a).map(|_| ()),
        Command::Stats(a) => stats(&a, out),
        Command::Split(a) => split(&a, out),
        Command::Augment(a) => augment(&a),
        Command::LmTrain(a) => lm_train(&a),
        Command::LmScore(a) => lm_score(&a, out),
        Command::Decode(a) => decode(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Report(a) => report(&a, out),
        Command::Synth(a) => synth(&a),
        Command::SynthLogits(a) => synth_logits_cmd(&a),
        Command::Pipeline(a) => pipeline(&a, out),
    }
}

/// Independent per-item seed; SplitMix64 over the base seed and index.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps `f` over `items` on `jobs` workers. Results keep input order; the
/// first error in input order wins.
fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(usize, &T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<R>> = pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect());
    results.into_iter().collect()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_error(path))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(io_error(path))
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new(""))
}

/// Manifest file name for `file` relative to `base`, using `..` steps when
/// `file` lies outside it, so that manifests do not embed absolute paths.
fn manifest_name(file: &Path, base: &Path) -> Result<String> {
    let file = file.canonicalize().map_err(io_error(file))?;
    let base_dir = if base.as_os_str().is_empty() {
        Path::new(".")
    } else {
        base
    };
    let base_dir = base_dir.canonicalize().map_err(io_error(base_dir))?;
    let shared = file
        .components()
        .zip(base_dir.components())
        .take_while(|(a, b)| a == b)
        .count();
    let mut name = PathBuf::new();
    for _ in base_dir.components().skip(shared) {
        name.push("..");
    }
    name.extend(file.components().skip(shared));
    Ok(name.to_string_lossy().into_owned())
}

/// WAV path named by a manifest entry.
fn entry_path(manifest: &Path, entry: &ManifestEntry) -> PathBuf {
    parent_dir(manifest).join(&entry.wav_filename)
}

/// Source files for `convert`: (path, relative output name, transcript, tag).
fn conversion_sources(args: &ConvertArgs) -> Result<Vec<(PathBuf, PathBuf, String, String)>> {
    let source_manifest = args.input.join("manifest.csv");
    if source_manifest.is_file() {
        let entries = read_manifest(&source_manifest).map_err(|e| CliError::from(e).at(&source_manifest))?;
        return Ok(entries
            .into_iter()
            .map(|e| {
                let rel = PathBuf::from(&e.wav_filename);
                (
                    args.input.join(&rel),
                    rel,
                    normalize_transcript(&e.transcript),
                    e.dataset_tag,
                )
            })
            .collect());
    }
    let mut wavs = Vec::new();
    collect_wavs(&args.input, &mut wavs)?;
    wavs.sort();
    wavs.into_iter()
        .map(|path| {
            let txt = path.with_extension("txt");
            let transcript = fs::read_to_string(&txt).map_err(io_error(&txt))?;
            let rel = path.strip_prefix(&args.input).unwrap_or(&path).to_path_buf();
            Ok((path, rel, normalize_transcript(&transcript), args.tag.clone()))
        })
        .collect()
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(io_error(dir))? {
        let path = entry.map_err(io_error(dir))?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    Ok(())
}

fn convert(args: &ConvertArgs) -> Result<Vec<ManifestEntry>> {
    let sources = conversion_sources(args)?;
    if sources.is_empty() {
        return Err(CliError::Data(format!(
            "no WAV files found in {}",
            args.input.display()
        )));
    }
    create_dir(&args.out)?;
    create_dir(parent_dir(&args.manifest))?;
    let manifest_dir = parent_dir(&args.manifest);
    let entries = par_map(args.jobs, &sources, |_, (src, rel, transcript, tag)| {
        let dst = args.out.join(rel);
        create_dir(parent_dir(&dst))?;
        crate::wav::convert(src, &dst, args.rate).map_err(|e| CliError::from(e).at(src))?;
        let size = fs::metadata(&dst).map_err(io_error(&dst))?.len();
        Ok(ManifestEntry {
            wav_filename: manifest_name(&dst, manifest_dir)?,
            wav_filesize: size,
            transcript: transcript.clone(),
            dataset_tag: tag.clone(),
        })
    })?;
    write_manifest(&entries, &args.manifest)?;
    log::info!("converted {} files", entries.len());
    Ok(entries)
}

fn load_entries(manifest: &Path) -> Result<Vec<ManifestEntry>> {
    read_manifest(manifest).map_err(|e| CliError::from(e).at(manifest))
}

/// Tags in order of first appearance.
fn tag_order<'a>(tags: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for t in tags {
        if !seen.iter().any(|s| s == t) {
            seen.push(t.to_string());
        }
    }
    seen
}

fn stats_text(manifest: &Path, jobs: usize) -> Result<String> {
    let entries = load_entries(manifest)?;
    let durations = par_map(jobs, &entries, |_, e| {
        let path = entry_path(manifest, e);
        Ok(load_wav(&path)
            .map_err(|err| CliError::from(err).at(&path))?
            .duration_seconds())
    })?;
    let mut text = duration_stats(&durations)?.render();
    text.push('\n');
    text.push_str(&format!("{:<12}{:>12}{:>12}\n", "Dataset", "Utterances", "Hours"));
    for tag in tag_order(entries.iter().map(|e| e.dataset_tag.as_str())) {
        let (n, secs) = entries
            .iter()
            .zip(&durations)
            .filter(|(e, _)| e.dataset_tag == tag)
            .fold((0, 0.0), |(n, s), (_, d)| (n + 1, s + d));
        text.push_str(&format!("{tag:<12}{n:>12}{:>12.4}\n", secs / 3600.0));
    }
    let total: f64 = durations.iter().sum();
    text.push_str(&format!(
        "{:<12}{:>12}{:>12.4}\n",
        "Total",
        entries.len(),
        total / 3600.0
    ));
    Ok(text)
}

fn stats(args: &StatsArgs, out: &mut dyn Write) -> Result<()> {
    let text = stats_text(&args.manifest, args.jobs)?;
    out.write_all(text.as_bytes()).map_err(io_error(Path::new("<stdout>")))
}

/// Entries re-pointed from one manifest directory to another.
fn rebase(entries: &[ManifestEntry], from: &Path, to: &Path) -> Result<Vec<ManifestEntry>> {
    entries
        .iter()
        .map(|e| {
            let mut e = e.clone();
            let src = parent_dir(from).join(&e.wav_filename);
            e.wav_filename = manifest_name(&src, to)?;
            Ok(e)
        })
        .collect()
}

fn split(args: &SplitArgs, out: &mut dyn Write) -> Result<()> {
    let [train, dev, test] = args.ratios[..] else {
        return Err(CliError::Usage("--ratios needs exactly three values".into()));
    };
    let entries = load_entries(&args.manifest)?;
    create_dir(&args.out_dir)?;
    let entries = rebase(&entries, &args.manifest, &args.out_dir)?;
    let parts = split_manifest(&entries, (train, dev, test), args.seed)?;
    for (name, part) in [("train", &parts.train), ("dev", &parts.dev), ("test", &parts.test)] {
        write_manifest(part, &args.out_dir.join(format!("{name}.csv")))?;
        writeln!(out, "{name}\t{}", part.len()).map_err(io_error(Path::new("<stdout>")))?;
    }
    Ok(())
}

fn load_noise_bank(dir: &Path, rate: u32) -> Result<NoiseBank> {
    let mut paths = Vec::new();
    collect_wavs(dir, &mut paths)?;
    paths.sort();
    let mut bank = NoiseBank::new();
    for path in paths {
        let clip = load_wav(&path).map_err(|e| CliError::from(e).at(&path))?;
        let clip = resample(&clip, rate)?;
        bank.insert(path.to_string_lossy(), clip)?;
    }
    Ok(bank)
}

/// Round trip through an external encoder command.
fn external_codec(cmd: &str, clip: &AudioClip, tag: &str) -> Result<AudioClip, AugmentError> {
    let fail = |m: String| AugmentError::Codec(m);
    let dir = std::env::temp_dir().join(format!("medspeech-codec-{}-{tag}", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| fail(e.to_string()))?;
    let input = dir.join("in.wav");
    let output = dir.join("out.wav");
    save_wav(clip, &input).map_err(|e| fail(e.to_string()))?;
    let line = cmd
        .replace("{in}", &input.to_string_lossy())
        .replace("{out}", &output.to_string_lossy());
    let status = std::process::Command::new("sh")
        .arg("-c")
        .arg(&line)
        .status()
        .map_err(|e| fail(format!("cannot run {line:?}: {e}")));
    let result = status.and_then(|s| {
        if !s.success() {
            return Err(fail(format!("{line:?} exited with {s}")));
        }
        let decoded = load_wav(&output).map_err(|e| fail(e.to_string()))?;
        let decoded = resample(&decoded, clip.sample_rate())?;
        let mut samples = decoded.into_samples();
        samples.resize(clip.len(), 0.0);
        Ok(clip.with_samples(samples))
    });
    let _ = fs::remove_dir_all(&dir);
    result
}

fn augment(args: &AugmentArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => load_augment_config(p)?,
        None => AugmentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.pipeline_seed = seed;
    }
    let rate = config.frame_params.sample_rate;
    let bank = match &args.noise_dir {
        Some(dir) => load_noise_bank(dir, rate)?,
        None => NoiseBank::new(),
    };
    let entries = load_entries(&args.manifest)?;
    create_dir(&args.out)?;
    let results = par_map(args.jobs, &entries, |i, e| {
        let src = entry_path(&args.manifest, e);
        let clip = load_wav(&src).map_err(|err| CliError::from(err).at(&src))?;
        let clip = if clip.sample_rate() == rate {
            clip
        } else {
            resample(&clip, rate)?
        };
        let seed = derive_seed(config.pipeline_seed, i);
        let tag = i.to_string();
        let mut codec = |c: &AudioClip| match &args.codec_cmd {
            Some(cmd) => external_codec(cmd, c, &tag),
            None => Ok(codec_sim(c)),
        };
        let aug = apply_pipeline_with_codec(&clip, &config, &bank, seed, &mut codec)
            .map_err(|err| CliError::from(err).at(&src))?;
        let dst = args.out.join(&e.wav_filename);
        create_dir(parent_dir(&dst))?;
        save_wav(&aug.clip, &dst)?;
        if args.spectrograms {
            write_spectrogram(&aug.spectrogram, &dst.with_extension("spec"))?;
        }
        let keys = |ts: &[medspeech_core::augment::Technique]| ts.iter().map(|t| t.key()).collect::<Vec<_>>().join(";");
        let entry = ManifestEntry {
            wav_filename: manifest_name(&dst, &args.out)?,
            wav_filesize: fs::metadata(&dst).map_err(io_error(&dst))?.len(),
            transcript: e.transcript.clone(),
            dataset_tag: e.dataset_tag.clone(),
        };
        Ok((entry, keys(&aug.applied), keys(&aug.skipped)))
    })?;
    let manifest: Vec<ManifestEntry> = results.iter().map(|r| r.0.clone()).collect();
    write_manifest(&manifest, &args.out.join("manifest.csv"))?;
    let mut log = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    log.write_record(["wav_filename", "applied", "skipped"])?;
    for (entry, applied, skipped) in &results {
        log.write_record([entry.wav_filename.as_str(), applied, skipped])?;
    }
    let bytes = log.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&args.out.join("augment_log.csv"), bytes)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    Ok(text
        .lines()
        .map(normalize_transcript)
        .filter(|l| !l.is_empty())
        .collect())
}

fn lm_train(args: &LmTrainArgs) -> Result<()> {
    let transcripts: Vec<String> = match (&args.manifest, &args.transcripts) {
        (Some(m), _) => load_entries(m)?
            .into_iter()
            .map(|e| normalize_transcript(&e.transcript))
            .collect(),
        (None, Some(t)) => read_lines(t)?,
        (None, None) => return Err(CliError::Usage("give --manifest or --transcripts".into())),
    };
    let model = train_lm(&transcripts, args.order, args.mode.into(), args.discount)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_arpa(&model, &args.out)?;
    Ok(())
}

fn load_lm(path: &Path, mode: Option<ModeArg>) -> Result<NGramModel> {
    read_arpa(path, mode.map(TokenMode::from)).map_err(|e| CliError::from(e).at(path))
}

fn lm_score(args: &LmScoreArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_lm(&args.lm, args.mode)?;
    let lines = match (&args.text, &args.input) {
        (Some(t), _) => vec![normalize_transcript(t)],
        (None, Some(p)) => read_lines(p)?,
        (None, None) => return Err(CliError::Usage("give --text or --input".into())),
    };
    let stdout = Path::new("<stdout>");
    for line in &lines {
        writeln!(out, "{:.6}\t{line}", model.text_logprob(line)).map_err(io_error(stdout))?;
    }
    if args.input.is_some() {
        writeln!(out, "perplexity\t{:.6}", model.perplexity(&lines)?).map_err(io_error(stdout))?;
    }
    Ok(())
}

struct Decoder {
    alphabet: Alphabet,
    lm: Option<NGramModel>,
    alpha: f64,
    beta: f64,
    beam: usize,
    greedy: bool,
}

impl Decoder {
    fn decode_file(&self, path: &Path) -> Result<String> {
        let logits = read_logits(path).map_err(|e| CliError::from(e).at(path))?;
        if self.greedy {
            return Ok(greedy_decode(&logits, &self.alphabet)?);
        }
        let fusion = self.lm.as_ref().map(|model| LmFusion {
            model,
            alpha: self.alpha,
            beta: self.beta,
        });
        let hyps = beam_search(&logits, &self.alphabet, self.beam, fusion).map_err(|e| CliError::from(e).at(path))?;
        Ok(hyps.into_iter().next().map(|h| h.text).unwrap_or_default())
    }
}

/// Pairs CSV with a `wav_filename,dataset_tag,ref,hyp` header.
fn pairs_csv(rows: &[(ManifestEntry, String)]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["wav_filename", "dataset_tag", "ref", "hyp"])?;
    for (e, hyp) in rows {
        w.write_record([e.wav_filename.as_str(), &e.dataset_tag, &e.transcript, hyp])?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn logits_path(dir: &Path, entry: &ManifestEntry) -> PathBuf {
    dir.join(&entry.wav_filename).with_extension("ctcl")
}

fn decode(args: &DecodeArgs, out: &mut dyn Write) -> Result<()> {
    if args.beam == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    let decoder = Decoder {
        alphabet: read_alphabet(&args.alphabet).map_err(|e| CliError::from(e).at(&args.alphabet))?,
        lm: args.lm.as_deref().map(|p| load_lm(p, args.lm_mode)).transpose()?,
        alpha: args.alpha,
        beta: args.beta,
        beam: args.beam,
        greedy: args.greedy,
    };
    let stdout = Path::new("<stdout>");
    let Some(manifest) = &args.manifest else {
        let text = decoder.decode_file(&args.logits)?;
        return match &args.out {
            Some(p) => write_file(p, format!("{text}\n")),
            None => writeln!(out, "{text}").map_err(io_error(stdout)),
        };
    };
    let entries = load_entries(manifest)?;
    let rows = par_map(args.jobs, &entries, |_, e| {
        Ok((e.clone(), decoder.decode_file(&logits_path(&args.logits, e))?))
    })?;
    let bytes = pairs_csv(&rows)?;
    match &args.out {
        Some(p) => write_file(p, bytes),
        None => out.write_all(&bytes).map_err(io_error(stdout)),
    }
}

/// Pairs from a CSV with `ref` and `hyp` columns; the tag is
/// `dataset_tag` when that column exists.
fn read_pairs(path: &Path) -> Result<Vec<(Option<String>, String, String)>> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = rdr.headers().map_err(|e| CliError::from(e).at(path))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (Some(r), Some(h)) = (column("ref"), column("hyp")) else {
        return Err(CliError::Data(format!(
            "{}: header needs `ref` and `hyp` columns",
            path.display()
        )));
    };
    let tag = column("dataset_tag");
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| CliError::from(e).at(path))?;
            let field = |i: usize| rec.get(i).unwrap_or("").to_string();
            Ok((tag.map(field), field(r), field(h)))
        })
        .collect()
}

fn percent(ops: EditOps) -> String {
    ops.rate()
        .map_or_else(|| "n/a".to_string(), |r| format!("{:.2}%", r * 100.0))
}

fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let pairs = read_pairs(&args.pairs)?;
    let words: EditOps = pairs.iter().map(|(_, r, h)| word_ops(r, h)).sum();
    let chars: EditOps = pairs.iter().map(|(_, r, h)| char_ops(r, h)).sum();
    if words.ref_len == 0 {
        return Err(EvalError::EmptyReference.into());
    }
    let stdout = Path::new("<stdout>");
    writeln!(
        out,
        "WER {} ({} errors / {} words)",
        percent(words),
        words.distance(),
        words.ref_len
    )
    .map_err(io_error(stdout))?;
    writeln!(
        out,
        "CER {} ({} errors / {} characters)",
        percent(chars),
        chars.distance(),
        chars.ref_len
    )
    .map_err(io_error(stdout))
}

fn report_text(pairs: &[(Option<String>, String, String)], csv: bool) -> Result<String> {
    let tags = tag_order(pairs.iter().map(|(t, _, _)| t.as_deref().unwrap_or("all")));
    let groups: Vec<(String, Vec<(&str, &str)>)> = tags
        .into_iter()
        .map(|tag| {
            let members = pairs
                .iter()
                .filter(|(t, _, _)| t.as_deref().unwrap_or("all") == tag)
                .map(|(_, r, h)| (r.as_str(), h.as_str()))
                .collect();
            (tag, members)
        })
        .collect();
    if groups.is_empty() {
        return Err(EvalError::NoGroups.into());
    }
    let report = build_report(&groups)?;
    Ok(if csv { report.render_csv() } else { report.render_text() })
}

fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let text = report_text(&read_pairs(&args.pairs)?, args.csv)?;
    out.write_all(text.as_bytes()).map_err(io_error(Path::new("<stdout>")))
}

fn synth(args: &SynthArgs) -> Result<()> {
    let vocab: Vec<String> = match &args.vocab {
        Some(p) => read_lines(p)?,
        None => DEFAULT_VOCAB.iter().map(|w| w.to_string()).collect(),
    };
    synth_corpus(&args.out, args.n, &vocab, args.seed)?;
    Ok(())
}

fn synth_logits_cmd(args: &SynthLogitsArgs) -> Result<()> {
    let alphabet = read_alphabet(&args.alphabet).map_err(|e| CliError::from(e).at(&args.alphabet))?;
    let spec = |transcript: String, seed: u64| SynthSpec {
        transcript,
        frames_per_char: args.frames_per_char,
        blank_gap_frames: args.blank_gap,
        confidence: args.confidence,
        seed,
    };
    if let Some(text) = &args.text {
        let logits = synth_logits(&spec(normalize_transcript(text), args.seed), &alphabet)?;
        if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        return Ok(write_logits(&logits, &args.out)?);
    }
    let manifest = args
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Usage("give --manifest or --text".into()))?;
    let entries = load_entries(manifest)?;
    create_dir(&args.out)?;
    par_map(args.jobs, &entries, |i, e| {
        let logits = synth_logits(
            &spec(normalize_transcript(&e.transcript), derive_seed(args.seed, i)),
            &alphabet,
        )?;
        let path = logits_path(&args.out, e);
        create_dir(parent_dir(&path))?;
        Ok(write_logits(&logits, &path)?)
    })?;
    Ok(())
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => {
            let (Some(input), Some(work), Some(seed)) = (&args.input, &args.work_dir, args.seed) else {
                return Err(CliError::Usage(
                    "pipeline needs --config, or --in, --work-dir and --seed".into(),
                ));
            };
            PipelineConfig::new(input.clone(), work.clone(), seed)
        }
    };
    if let Some(v) = &args.input {
        config.input_dir = v.clone();
    }
    if let Some(v) = &args.work_dir {
        config.work_dir = v.clone();
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.rate {
        config.target_rate = v;
    }
    if let Some(v) = &args.augment_config {
        config.augment_config = Some(v.clone());
    }
    if let Some(v) = &args.noise_dir {
        config.noise_dir = Some(v.clone());
    }
    if let Some(v) = args.lm_order {
        config.lm.order = v;
    }
    if let Some(v) = args.lm_mode {
        config.lm.mode = v.into();
    }
    if args.no_lm {
        config.decode.use_lm = false;
    }
    if let Some(v) = args.alpha {
        config.decode.alpha = v;
    }
    if let Some(v) = args.beta {
        config.decode.beta = v;
    }
    if let Some(v) = args.beam {
        config.decode.beam = v;
    }
    if let Some(v) = args.confidence {
        config.synth.confidence = v;
    }
    if let Some(v) = args.jobs {
        config.jobs = v;
    }
    config.validate()?;
    Ok(config)
}

fn pipeline(args: &PipelineArgs, out: &mut dyn Write) -> Result<()> {
    let config = pipeline_config(args)?;
    let work = &config.work_dir;
    let stdout = Path::new("<stdout>");
    create_dir(work)?;

    let manifest = work.join("manifest.csv");
    let entries = convert(&ConvertArgs {
        input: config.input_dir.clone(),
        out: work.join("wav"),
        manifest: manifest.clone(),
        rate: config.target_rate,
        tag: "standard".into(),
        jobs: config.jobs,
    })?;
    log::info!("convert: {} utterances", entries.len());

    let stats = stats_text(&manifest, config.jobs)?;
    write_file(&work.join("stats.txt"), &stats)?;
    out.write_all(stats.as_bytes()).map_err(io_error(stdout))?;
    writeln!(out).map_err(io_error(stdout))?;

    split(
        &SplitArgs {
            manifest: manifest.clone(),
            out_dir: work.join("split"),
            ratios: config.split.to_vec(),
            seed: config.seed,
        },
        &mut std::io::sink(),
    )?;

    if let Some(augment_config) = &config.augment_config {
        augment(&AugmentArgs {
            manifest: manifest.clone(),
            out: work.join("augmented"),
            config: Some(augment_config.clone()),
            noise_dir: config.noise_dir.clone(),
            seed: Some(config.seed),
            spectrograms: false,
            codec_cmd: None,
            jobs: config.jobs,
        })?;
    }

    let transcripts: Vec<&str> = entries.iter().map(|e| e.transcript.as_str()).collect();
    let lm_path = work.join("lm.arpa");
    if config.decode.use_lm {
        let model = train_lm(&transcripts, config.lm.order, config.lm.mode, config.lm.discount)?;
        write_arpa(&model, &lm_path)?;
    }

    let alphabet_path = work.join("alphabets.csv");
    write_alphabet(&build_alphabet(&transcripts)?, &alphabet_path)?;

    let logits_dir = work.join("logits");
    synth_logits_cmd(&SynthLogitsArgs {
        manifest: Some(manifest.clone()),
        text: None,
        alphabet: alphabet_path.clone(),
        out: logits_dir.clone(),
        frames_per_char: config.synth.frames_per_char,
        blank_gap: config.synth.blank_gap_frames,
        confidence: config.synth.confidence,
        seed: config.seed,
        jobs: config.jobs,
    })?;

    let hyps = work.join("hyps.csv");
    decode(
        &DecodeArgs {
            logits: logits_dir,
            alphabet: alphabet_path,
            lm: config.decode.use_lm.then(|| lm_path.clone()),
            lm_mode: None,
            alpha: config.decode.alpha,
            beta: config.decode.beta,
            beam: config.decode.beam,
            greedy: false,
            manifest: Some(manifest),
            out: Some(hyps.clone()),
            jobs: config.jobs,
        },
        &mut std::io::sink(),
    )?;

    let pairs = read_pairs(&hyps)?;
    let table = report_text(&pairs, false)?;
    write_file(&work.join("report.txt"), &table)?;
    write_file(&work.join("report.csv"), report_text(&pairs, true)?)?;
    out.write_all(table.as_bytes()).map_err(io_error(stdout))
}

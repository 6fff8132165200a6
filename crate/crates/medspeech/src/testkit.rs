//! Deterministic synthetic fixtures: logit matrices that spell a transcript
//! and small tone-sequence corpora with manifests.

use std::fs;
use std::path::{Path, PathBuf};

use medspeech_core::corpus::{build_alphabet, normalize_transcript, Alphabet, CorpusError, ManifestEntry};
use medspeech_core::decode::{DecodeError, LogitMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::manifest::{write_alphabet, write_manifest, ManifestError};
use crate::wav::encode_pcm16;

/// Symptom words used when no vocabulary is given.
pub const DEFAULT_VOCAB: [&str; 12] = [
    "জ্বর",
    "মাথা",
    "ব্যথা",
    "কাশি",
    "পেট",
    "বমি",
    "গলা",
    "শ্বাসকষ্ট",
    "দুর্বলতা",
    "ঠান্ডা",
    "চুলকানি",
    "ডায়রিয়া",
];

/// Tags assigned round-robin to synthetic utterances.
pub const CORPUS_TAGS: [&str; 3] = ["standard", "sylheti", "synthetic"];

pub const CORPUS_SAMPLE_RATE: u32 = 22_050;
pub const TONE_SECONDS_PER_CHAR: f64 = 0.08;
pub const TONE_AMPLITUDE: f64 = 0.3;

#[derive(Debug, Error)]
pub enum TestkitError {
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("transcript character {0:?} is not in the alphabet")]
    UnknownChar(char),
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub transcript: String,
    pub frames_per_char: usize,
    pub blank_gap_frames: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Noise-free defaults: 3 frames per character, 1 gap frame, confidence 1.
    pub fn new(transcript: impl Into<String>) -> Self {
        Self {
            transcript: transcript.into(),
            frames_per_char: 3,
            blank_gap_frames: 1,
            confidence: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TestkitError> {
        if self.frames_per_char < 2 {
            return Err(TestkitError::InvalidSpec(format!(
                "frames_per_char must be at least 2, got {}",
                self.frames_per_char
            )));
        }
        if self.blank_gap_frames < 1 {
            return Err(TestkitError::InvalidSpec("blank_gap_frames must be at least 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(TestkitError::InvalidSpec(format!(
                "confidence must be in (0, 1], got {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Target class per frame: one leading blank, `frames_per_char` frames per
/// character with `blank_gap_frames` blanks before a repeated character, and
/// one trailing blank.
pub fn frame_targets(spec: &SynthSpec, alphabet: &Alphabet) -> Result<Vec<usize>, TestkitError> {
    spec.validate()?;
    let blank = alphabet.len();
    let mut targets = vec![blank];
    let mut previous = None;
    for c in spec.transcript.chars() {
        let k = alphabet.index_of(c).ok_or(TestkitError::UnknownChar(c))?;
        if previous == Some(k) {
            targets.extend(std::iter::repeat_n(blank, spec.blank_gap_frames));
        }
        targets.extend(std::iter::repeat_n(k, spec.frames_per_char));
        previous = Some(k);
    }
    targets.push(blank);
    Ok(targets)
}

/// Each frame puts `confidence` on its target class and splits the residual
/// across the other classes in proportion to seeded uniform weights.
pub fn synth_logits(spec: &SynthSpec, alphabet: &Alphabet) -> Result<LogitMatrix, TestkitError> {
    let targets = frame_targets(spec, alphabet)?;
    let classes = alphabet.len() + 1;
    let residual = 1.0 - spec.confidence;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows: Vec<Vec<f64>> = targets
        .iter()
        .map(|&target| {
            let weights: Vec<f64> = (0..classes).map(|_| rng.random_range(0.5..1.5)).collect();
            let other: f64 = (0..classes).filter(|&c| c != target).map(|c| weights[c]).sum();
            (0..classes)
                .map(|c| {
                    if c == target {
                        spec.confidence
                    } else if residual > 0.0 {
                        residual * weights[c] / other
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(LogitMatrix::from_probabilities(&rows)?)
}

/// Description of one generated utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub entry: ManifestEntry,
    pub sample_count: usize,
    pub sample_rate: u32,
    pub channels: u16,
}

impl SynthUtterance {
    pub fn duration_seconds(&self) -> f64 {
        self.sample_count as f64 / f64::from(self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub utterances: Vec<SynthUtterance>,
    pub alphabet: Alphabet,
}

impl SynthCorpus {
    pub fn entries(&self) -> Vec<ManifestEntry> {
        self.utterances.iter().map(|u| u.entry.clone()).collect()
    }
}

/// One to three random vocabulary words per utterance, joined by spaces.
pub fn synth_transcripts<S: AsRef<str>>(n: usize, vocab: &[S], seed: u64) -> Result<Vec<String>, TestkitError> {
    let words: Vec<String> = vocab
        .iter()
        .map(|w| normalize_transcript(w.as_ref()))
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        return Err(TestkitError::EmptyVocab);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let count = rng.random_range(1..=3);
            let picked: Vec<&str> = (0..count)
                .map(|_| words[rng.random_range(0..words.len())].as_str())
                .collect();
            normalize_transcript(&picked.join(" "))
        })
        .collect())
}

/// Tone sequence for a transcript: 80 ms per character at
/// 200 + 40·(alphabet index) Hz, silence for a space.
pub fn tone_samples(transcript: &str, alphabet: &Alphabet, sample_rate: u32) -> Vec<f32> {
    let per_char = (TONE_SECONDS_PER_CHAR * f64::from(sample_rate)).round() as usize;
    let mut out = Vec::with_capacity(per_char * transcript.chars().count());
    for c in transcript.chars() {
        let index = alphabet.index_of(c).unwrap_or(0);
        let freq = 200.0 + 40.0 * index as f64;
        for i in 0..per_char {
            let v = if c == ' ' {
                0.0
            } else {
                TONE_AMPLITUDE * (std::f64::consts::TAU * freq * i as f64 / f64::from(sample_rate)).sin()
            };
            out.push(v as f32);
        }
    }
    out
}

/// Writes `n` utterances as 22.05 kHz WAVs (odd-numbered files stereo)
/// plus `manifest.csv` and `alphabets.csv` into `out_dir`. Output depends
/// only on the arguments.
pub fn synth_corpus<S: AsRef<str>>(
    out_dir: &Path,
    n: usize,
    vocab: &[S],
    seed: u64,
) -> Result<SynthCorpus, TestkitError> {
    let transcripts = synth_transcripts(n, vocab, seed)?;
    let alphabet = if transcripts.is_empty() {
        let words: Vec<String> = vocab.iter().map(|w| normalize_transcript(w.as_ref())).collect();
        build_alphabet(&words)?
    } else {
        build_alphabet(&transcripts)?
    };
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TestkitError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;

    let mut utterances = Vec::with_capacity(n);
    for (i, transcript) in transcripts.into_iter().enumerate() {
        let mono = tone_samples(&transcript, &alphabet, CORPUS_SAMPLE_RATE);
        let channels = if i % 2 == 1 { 2 } else { 1 };
        let interleaved: Vec<f32> = if channels == 2 {
            mono.iter().flat_map(|&s| [s, s * 0.8]).collect()
        } else {
            mono.clone()
        };
        let bytes = encode_pcm16(&interleaved, channels, CORPUS_SAMPLE_RATE);
        let name = format!("utt_{i:04}.wav");
        let path = out_dir.join(&name);
        fs::write(&path, &bytes).map_err(io(&path))?;
        utterances.push(SynthUtterance {
            entry: ManifestEntry {
                wav_filename: name,
                wav_filesize: bytes.len() as u64,
                transcript,
                dataset_tag: CORPUS_TAGS[i % CORPUS_TAGS.len()].to_string(),
            },
            sample_count: mono.len(),
            sample_rate: CORPUS_SAMPLE_RATE,
            channels,
        });
    }
    let corpus = SynthCorpus { utterances, alphabet };
    write_manifest(&corpus.entries(), &out_dir.join("manifest.csv"))?;
    write_alphabet(&corpus.alphabet, &out_dir.join("alphabets.csv"))?;
    Ok(corpus)
}

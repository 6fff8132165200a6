//! Transcript normalization, alphabets, manifest rows and dataset splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("no transcripts given")]
    EmptyCorpus,
    #[error("duplicate alphabet character {0:?}")]
    DuplicateCharacter(char),
    #[error("split ratios must be non-negative and sum to 1, got ({0}, {1}, {2})")]
    InvalidRatios(f64, f64, f64),
    #[error("{entries} entries cannot fill {partitions} non-empty partitions")]
    TooFewEntries { entries: usize, partitions: usize },
    #[error("transcript {0:?} is not normalized")]
    UnnormalizedTranscript(String),
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// NFC-normalizes, strips every punctuation code point (general category P,
/// which covers the danda and double danda), collapses whitespace runs to one
/// space and trims the ends.
pub fn normalize_transcript(text: &str) -> String {
    let stripped: String = text.nfc().filter(|&c| !is_punctuation(c)).collect();
    let mut out = String::with_capacity(stripped.len());
    for word in stripped.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    // removing a mark between a base and a combining sequence can expose a
    // new composition
    out.nfc().collect()
}

pub fn is_normalized(text: &str) -> bool {
    normalize_transcript(text) == text
}

/// Ordered character inventory. Index `i` is label `i` in decoding; the CTC
/// blank is not a member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl Alphabet {
    pub fn new(chars: Vec<char>) -> Result<Self, CorpusError> {
        let mut index = BTreeMap::new();
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(CorpusError::DuplicateCharacter(c));
            }
        }
        Ok(Self { chars, index })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char_at(&self, index: usize) -> Option<char> {
        self.chars.get(index).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// Label indices for `text`, or the first character missing from the alphabet.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>, char> {
        text.chars().map(|c| self.index_of(c).ok_or(c)).collect()
    }

    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().filter_map(|&l| self.char_at(l)).collect()
    }
}

/// Union of all characters in code-point order.
pub fn build_alphabet<S: AsRef<str>>(transcripts: &[S]) -> Result<Alphabet, CorpusError> {
    if transcripts.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let set: BTreeSet<char> = transcripts.iter().flat_map(|t| t.as_ref().chars()).collect();
    Alphabet::new(set.into_iter().collect())
}

/// One row of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub wav_filename: String,
    pub wav_filesize: u64,
    pub transcript: String,
    pub dataset_tag: String,
}

impl ManifestEntry {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if is_normalized(&self.transcript) {
            Ok(())
        } else {
            Err(CorpusError::UnnormalizedTranscript(self.transcript.clone()))
        }
    }
}

/// Train/dev/test partition of a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by a contiguous partition. Dev and test get
/// `floor(n · ratio)` items; the remainder goes to train.
pub fn split_manifest<T: Clone>(entries: &[T], ratios: (f64, f64, f64), seed: u64) -> Result<Split<T>, CorpusError> {
    let (train_r, dev_r, test_r) = ratios;
    let valid = [train_r, dev_r, test_r].iter().all(|r| r.is_finite() && *r >= 0.0);
    if !valid || ((train_r + dev_r + test_r) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(train_r, dev_r, test_r));
    }
    let partitions = [train_r, dev_r, test_r].iter().filter(|r| **r > 0.0).count();
    if entries.len() < partitions {
        return Err(CorpusError::TooFewEntries {
            entries: entries.len(),
            partitions,
        });
    }

    let mut shuffled = entries.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n = entries.len() as f64;
    // the epsilon keeps products like 100 * 0.29 from flooring one short
    let dev_n = libm::floor(n * dev_r + 1e-9) as usize;
    let test_n = libm::floor(n * test_r + 1e-9) as usize;
    let train_n = entries.len() - dev_n - test_n;

    let test = shuffled.split_off(train_n + dev_n);
    let dev = shuffled.split_off(train_n);
    Ok(Split {
        train: shuffled,
        dev,
        test,
    })
}

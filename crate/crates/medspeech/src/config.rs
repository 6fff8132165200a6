//! JSON configuration: the augmentation config and the `pipeline` config.

use std::fs;
use std::path::{Path, PathBuf};

use medspeech_core::augment::{AugmentConfig, AugmentError};
use medspeech_core::lm::TokenMode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {}, column {}: {source}", path.display(), source.line(), source.column())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid pipeline config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads and validates an augmentation config; missing keys take defaults.
pub fn load_augment_config(path: &Path) -> Result<AugmentConfig, ConfigError> {
    let config: AugmentConfig = read_json(path)?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    pub order: usize,
    pub mode: TokenMode,
    pub discount: Option<f64>,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            order: 3,
            mode: TokenMode::Word,
            discount: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSettings {
    pub beam: usize,
    pub alpha: f64,
    pub beta: f64,
    pub use_lm: bool,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            beam: 128,
            alpha: 0.75,
            beta: 1.85,
            use_lm: true,
        }
    }
}

/// Parameters of the synthetic acoustic stand-in that produces logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub frames_per_char: usize,
    pub blank_gap_frames: usize,
    pub confidence: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            frames_per_char: 3,
            blank_gap_frames: 1,
            confidence: 1.0,
        }
    }
}

fn default_rate() -> u32 {
    16_000
}

fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

fn default_jobs() -> usize {
    1
}

/// Settings for the `pipeline` subcommand. `seed` is required so that no run
/// depends on the clock. Relative paths are resolved against the directory
/// holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub work_dir: PathBuf,
    #[serde(default = "default_rate")]
    pub target_rate: u32,
    #[serde(default)]
    pub augment_config: Option<PathBuf>,
    #[serde(default)]
    pub noise_dir: Option<PathBuf>,
    #[serde(default)]
    pub lm: LmSettings,
    #[serde(default)]
    pub decode: DecodeSettings,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub synth: SynthSettings,
}

impl PipelineConfig {
    pub fn new(input_dir: PathBuf, work_dir: PathBuf, seed: u64) -> Self {
        Self {
            input_dir,
            work_dir,
            target_rate: default_rate(),
            augment_config: None,
            noise_dir: None,
            lm: LmSettings::default(),
            decode: DecodeSettings::default(),
            split: default_split(),
            seed,
            jobs: default_jobs(),
            synth: SynthSettings::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut config: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.input_dir);
        resolve(&mut config.work_dir);
        config.augment_config.as_mut().map(resolve);
        config.noise_dir.as_mut().map(resolve);
        Ok(config)
    }

    /// Checks values and that every input path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !self.input_dir.is_dir() {
            return bad(format!("input_dir {} is not a directory", self.input_dir.display()));
        }
        if let Some(p) = &self.augment_config {
            if !p.is_file() {
                return bad(format!("augment_config {} does not exist", p.display()));
            }
        }
        if let Some(p) = &self.noise_dir {
            if !p.is_dir() {
                return bad(format!("noise_dir {} is not a directory", p.display()));
            }
        }
        if self.target_rate < medspeech_core::audio::MIN_SAMPLE_RATE {
            return bad(format!("target_rate {} is too low", self.target_rate));
        }
        if self.lm.order == 0 {
            return bad("lm.order must be at least 1".into());
        }
        if self.decode.beam == 0 {
            return bad("decode.beam must be at least 1".into());
        }
        if !(self.decode.alpha.is_finite() && self.decode.beta.is_finite()) {
            return bad("decode.alpha and decode.beta must be finite".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }
}

//! Seeded training-data augmentation in both the waveform and the
//! spectrogram domain.
//!
//! Eleven techniques are available. [`Technique::ALL`] lists them in their
//! canonical order, which is also the order [`apply_pipeline`] applies them in
//! (waveform techniques first, then spectrogram techniques). Each technique is
//! drawn independently with its own probability: overlay at 0.5, everything
//! else at 0.1 by default.

mod config;
mod pipeline;
mod signal;
mod spectral;

use alloc::string::String;

use thiserror::Error;

use crate::audio::AudioError;
use crate::features::FeatureError;

pub use config::{
    AugmentConfig, CodecParams, DropoutParams, MaskParams, OverlayParams, ParamRange, ResampleParams, ReverbParams,
    ScaleParams, TechniqueConfig, VolumeParams, WarpParams,
};
pub use pipeline::{apply_pipeline, apply_pipeline_with_codec, AugmentOutput, NoiseBank};
pub use signal::{
    codec_sim, dropout_intervals, level_volume, mu_law_decode, mu_law_encode, overlay, resample_cycle, reverb,
    segment_dropout, ReverbTopology,
};
pub use spectral::{axis_mask, axis_scale, mask_spans, warp, Axis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("{0} input is silent; level is undefined")]
    Silent(&'static str),
    #[error("noise rate {noise} Hz differs from clip rate {clip} Hz")]
    RateMismatch { clip: u32, noise: u32 },
    #[error("rt60 must be non-negative, got {0}")]
    NegativeRt60(f64),
    #[error("scale factor {0} is outside [0.5, 2.0]")]
    FactorOutOfRange(f64),
    #[error("warp needs more than {} frames, spectrogram has {frames}", 2 * .max_shift)]
    WarpTooWide { frames: usize, max_shift: usize },
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("codec round trip failed: {0}")]
    Codec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// The augmentation techniques, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Technique {
    Overlay,
    Warp,
    Reverb,
    FrequencyMask,
    Resample,
    TimeMask,
    Codec,
    Dropout,
    Volume,
    Pitch,
    Tempo,
}

impl Technique {
    pub const ALL: [Technique; 11] = [
        Technique::Overlay,
        Technique::Warp,
        Technique::Reverb,
        Technique::FrequencyMask,
        Technique::Resample,
        Technique::TimeMask,
        Technique::Codec,
        Technique::Dropout,
        Technique::Volume,
        Technique::Pitch,
        Technique::Tempo,
    ];

    /// Waveform techniques run before the spectrogram is computed.
    pub fn is_signal_domain(self) -> bool {
        matches!(
            self,
            Technique::Overlay
                | Technique::Reverb
                | Technique::Resample
                | Technique::Codec
                | Technique::Dropout
                | Technique::Volume
        )
    }

    /// Key used in the JSON config.
    pub fn key(self) -> &'static str {
        match self {
            Technique::Overlay => "overlay",
            Technique::Warp => "warp",
            Technique::Reverb => "reverb",
            Technique::FrequencyMask => "frequency_mask",
            Technique::Resample => "resample",
            Technique::TimeMask => "time_mask",
            Technique::Codec => "codec",
            Technique::Dropout => "dropout",
            Technique::Volume => "volume",
            Technique::Pitch => "pitch",
            Technique::Tempo => "tempo",
        }
    }

    pub fn default_probability(self) -> f64 {
        match self {
            Technique::Overlay => 0.5,
            _ => 0.1,
        }
    }
}

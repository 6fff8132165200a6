use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::signal::{codec_sim, level_volume, overlay, resample_cycle, reverb, segment_dropout};
use super::spectral::{axis_mask, axis_scale, warp, Axis};
use super::{AugmentConfig, AugmentError, Technique};
use crate::audio::{AudioClip, TARGET_SAMPLE_RATE};
use crate::features::{spectrogram, Spectrogram};

/// Labelled overlay sources, all mono at 16 kHz.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    clips: Vec<(String, AudioClip)>,
}

impl NoiseBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: impl Into<String>, clip: AudioClip) -> Result<(), AugmentError> {
        if clip.sample_rate() != TARGET_SAMPLE_RATE {
            return Err(AugmentError::RateMismatch {
                clip: TARGET_SAMPLE_RATE,
                noise: clip.sample_rate(),
            });
        }
        self.clips.push((label.into(), clip));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<(&str, &AudioClip)> {
        self.clips.get(index).map(|(l, c)| (l.as_str(), c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutput {
    pub clip: AudioClip,
    pub spectrogram: Spectrogram,
    /// Techniques whose Bernoulli draw succeeded and that changed the input.
    pub applied: Vec<Technique>,
    /// Techniques that were drawn but could not run on this input.
    pub skipped: Vec<Technique>,
}

impl AugmentOutput {
    pub fn was_drawn(&self, technique: Technique) -> bool {
        self.applied.contains(&technique) || self.skipped.contains(&technique)
    }
}

/// Runs every technique with an independent Bernoulli draw, in canonical
/// order: waveform techniques on the clip, then spectrogram techniques on
/// its spectrogram. The result is a pure function of the inputs and `seed`.
pub fn apply_pipeline(
    clip: &AudioClip,
    config: &AugmentConfig,
    noise_bank: &NoiseBank,
    seed: u64,
) -> Result<AugmentOutput, AugmentError> {
    apply_pipeline_with_codec(clip, config, noise_bank, seed, &mut |c| Ok(codec_sim(c)))
}

/// [`apply_pipeline`] with the codec step supplied by the caller, e.g. a real
/// encoder round trip instead of the built-in μ-law simulation.
pub fn apply_pipeline_with_codec(
    clip: &AudioClip,
    config: &AugmentConfig,
    noise_bank: &NoiseBank,
    seed: u64,
    codec: &mut dyn FnMut(&AudioClip) -> Result<AudioClip, AugmentError>,
) -> Result<AugmentOutput, AugmentError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn: Vec<Technique> = Technique::ALL
        .into_iter()
        .filter(|&t| rng.random_bool(config.probability(t)))
        .collect();

    let mut applied = Vec::new();
    let mut skipped = Vec::new();
    let mut audio = clip.clone();

    for &technique in drawn.iter().filter(|t| t.is_signal_domain()) {
        let result = match technique {
            Technique::Overlay => {
                if noise_bank.is_empty() {
                    log::warn!("overlay drawn but the noise bank is empty; skipping");
                    skipped.push(technique);
                    continue;
                }
                let index = rng.random_range(0..noise_bank.len());
                let snr = config.overlay.params.snr_db.sample(&mut rng);
                let (_, noise) = noise_bank.get(index).expect("index in range");
                overlay(&audio, noise, snr)
            }
            Technique::Reverb => reverb(&audio, config.reverb.params.rt60_s.sample(&mut rng)),
            Technique::Resample => {
                let rate = libm::round(config.resample.params.rate_hz.sample(&mut rng)) as u32;
                resample_cycle(&audio, rate)
            }
            Technique::Codec => codec(&audio),
            Technique::Dropout => {
                let (lo, hi) = config.dropout.params.segments;
                let n = rng.random_range(lo..=hi);
                Ok(segment_dropout(&audio, n, config.dropout.params.length_ms, &mut rng))
            }
            Technique::Volume => Ok(level_volume(&audio, config.volume.params.target_dbfs.sample(&mut rng))),
            _ => unreachable!("feature-domain technique in signal stage"),
        };
        match result {
            Ok(out) => {
                audio = out;
                applied.push(technique);
            }
            Err(e @ (AugmentError::Silent(_) | AugmentError::RateMismatch { .. })) => {
                log::warn!("{} skipped: {e}", technique.key());
                skipped.push(technique);
            }
            Err(e) => return Err(e),
        }
    }

    let mut spec = spectrogram(&audio, config.frame_params)?;

    for &technique in drawn.iter().filter(|t| !t.is_signal_domain()) {
        let result = match technique {
            Technique::Warp => warp(&spec, config.warp.params.max_shift_frames, &mut rng),
            Technique::FrequencyMask => {
                let p = &config.frequency_mask.params;
                Ok(axis_mask(&spec, Axis::Frequency, p.max_width, p.n_masks, &mut rng))
            }
            Technique::TimeMask => {
                let p = &config.time_mask.params;
                Ok(axis_mask(&spec, Axis::Time, p.max_width, p.n_masks, &mut rng))
            }
            Technique::Pitch => axis_scale(&spec, Axis::Frequency, config.pitch.params.factor.sample(&mut rng)),
            Technique::Tempo => axis_scale(&spec, Axis::Time, config.tempo.params.factor.sample(&mut rng)),
            _ => unreachable!("signal-domain technique in feature stage"),
        };
        match result {
            Ok(out) => {
                spec = out;
                applied.push(technique);
            }
            Err(e @ AugmentError::WarpTooWide { .. }) => {
                log::warn!("{} skipped: {e}", technique.key());
                skipped.push(technique);
            }
            Err(e) => return Err(e),
        }
    }

    Ok(AugmentOutput {
        clip: audio,
        spectrogram: spec,
        applied,
        skipped,
    })
}

use alloc::format;

use serde::{Deserialize, Serialize};

use super::{AugmentError, Technique};
use crate::audio::MIN_SAMPLE_RATE;
use crate::features::FrameParams;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange(pub f64, pub f64);

impl ParamRange {
    pub fn lo(self) -> f64 {
        self.0
    }

    pub fn hi(self) -> f64 {
        self.1
    }

    pub fn is_valid(self) -> bool {
        self.0.is_finite() && self.1.is_finite() && self.0 <= self.1
    }

    pub fn within(self, lo: f64, hi: f64) -> bool {
        self.0 >= lo && self.1 <= hi
    }

    /// Uniform draw; a degenerate range returns its single value without
    /// consuming randomness.
    pub fn sample<R: rand::Rng + ?Sized>(self, rng: &mut R) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueConfig<P> {
    pub enabled: bool,
    pub probability: f64,
    #[serde(flatten)]
    pub params: P,
}

impl<P> TechniqueConfig<P> {
    fn new(technique: Technique, params: P) -> Self {
        Self {
            enabled: true,
            probability: technique.default_probability(),
            params,
        }
    }

    /// Probability actually used for the Bernoulli draw.
    pub fn effective_probability(&self) -> f64 {
        if self.enabled {
            self.probability
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayParams {
    pub snr_db: ParamRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub max_shift_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverbParams {
    pub rt60_s: ParamRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub max_width: usize,
    pub n_masks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleParams {
    pub rate_hz: ParamRange,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CodecParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutParams {
    pub segments: (usize, usize),
    pub length_ms: ParamRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeParams {
    pub target_dbfs: ParamRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub factor: ParamRange,
}

/// Per-technique switches, probabilities and parameter ranges. Keys missing
/// from a config file take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub pipeline_seed: u64,
    pub frame_params: FrameParams,
    pub overlay: TechniqueConfig<OverlayParams>,
    pub warp: TechniqueConfig<WarpParams>,
    pub reverb: TechniqueConfig<ReverbParams>,
    pub frequency_mask: TechniqueConfig<MaskParams>,
    pub resample: TechniqueConfig<ResampleParams>,
    pub time_mask: TechniqueConfig<MaskParams>,
    pub codec: TechniqueConfig<CodecParams>,
    pub dropout: TechniqueConfig<DropoutParams>,
    pub volume: TechniqueConfig<VolumeParams>,
    pub pitch: TechniqueConfig<ScaleParams>,
    pub tempo: TechniqueConfig<ScaleParams>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        use Technique as T;
        Self {
            pipeline_seed: 0,
            frame_params: FrameParams::default(),
            overlay: TechniqueConfig::new(
                T::Overlay,
                OverlayParams {
                    snr_db: ParamRange(5.0, 20.0),
                },
            ),
            warp: TechniqueConfig::new(T::Warp, WarpParams { max_shift_frames: 5 }),
            reverb: TechniqueConfig::new(
                T::Reverb,
                ReverbParams {
                    rt60_s: ParamRange(0.2, 1.0),
                },
            ),
            frequency_mask: TechniqueConfig::new(
                T::FrequencyMask,
                MaskParams {
                    max_width: 15,
                    n_masks: 1,
                },
            ),
            resample: TechniqueConfig::new(
                T::Resample,
                ResampleParams {
                    rate_hz: ParamRange(8_000.0, 16_000.0),
                },
            ),
            time_mask: TechniqueConfig::new(
                T::TimeMask,
                MaskParams {
                    max_width: 10,
                    n_masks: 1,
                },
            ),
            codec: TechniqueConfig::new(T::Codec, CodecParams {}),
            dropout: TechniqueConfig::new(
                T::Dropout,
                DropoutParams {
                    segments: (1, 3),
                    length_ms: ParamRange(10.0, 50.0),
                },
            ),
            volume: TechniqueConfig::new(
                T::Volume,
                VolumeParams {
                    target_dbfs: ParamRange(-30.0, -10.0),
                },
            ),
            pitch: TechniqueConfig::new(
                T::Pitch,
                ScaleParams {
                    factor: ParamRange(0.9, 1.1),
                },
            ),
            tempo: TechniqueConfig::new(
                T::Tempo,
                ScaleParams {
                    factor: ParamRange(0.9, 1.1),
                },
            ),
        }
    }
}

impl AugmentConfig {
    /// Same parameters, every probability set to `p`.
    pub fn with_all_probabilities(mut self, p: f64) -> Self {
        for t in Technique::ALL {
            self.set_probability(t, p);
        }
        self
    }

    pub fn set_probability(&mut self, technique: Technique, p: f64) {
        match technique {
            Technique::Overlay => self.overlay.probability = p,
            Technique::Warp => self.warp.probability = p,
            Technique::Reverb => self.reverb.probability = p,
            Technique::FrequencyMask => self.frequency_mask.probability = p,
            Technique::Resample => self.resample.probability = p,
            Technique::TimeMask => self.time_mask.probability = p,
            Technique::Codec => self.codec.probability = p,
            Technique::Dropout => self.dropout.probability = p,
            Technique::Volume => self.volume.probability = p,
            Technique::Pitch => self.pitch.probability = p,
            Technique::Tempo => self.tempo.probability = p,
        }
    }

    pub fn probability(&self, technique: Technique) -> f64 {
        match technique {
            Technique::Overlay => self.overlay.effective_probability(),
            Technique::Warp => self.warp.effective_probability(),
            Technique::Reverb => self.reverb.effective_probability(),
            Technique::FrequencyMask => self.frequency_mask.effective_probability(),
            Technique::Resample => self.resample.effective_probability(),
            Technique::TimeMask => self.time_mask.effective_probability(),
            Technique::Codec => self.codec.effective_probability(),
            Technique::Dropout => self.dropout.effective_probability(),
            Technique::Volume => self.volume.effective_probability(),
            Technique::Pitch => self.pitch.effective_probability(),
            Technique::Tempo => self.tempo.effective_probability(),
        }
    }

    fn raw_probability(&self, technique: Technique) -> f64 {
        match technique {
            Technique::Overlay => self.overlay.probability,
            Technique::Warp => self.warp.probability,
            Technique::Reverb => self.reverb.probability,
            Technique::FrequencyMask => self.frequency_mask.probability,
            Technique::Resample => self.resample.probability,
            Technique::TimeMask => self.time_mask.probability,
            Technique::Codec => self.codec.probability,
            Technique::Dropout => self.dropout.probability,
            Technique::Volume => self.volume.probability,
            Technique::Pitch => self.pitch.probability,
            Technique::Tempo => self.tempo.probability,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |msg: alloc::string::String| Err(AugmentError::InvalidConfig(msg));
        for t in Technique::ALL {
            let p = self.raw_probability(t);
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{} probability {p} is outside [0, 1]", t.key()));
            }
        }
        let ranges = [
            ("overlay.snr_db", self.overlay.params.snr_db),
            ("reverb.rt60_s", self.reverb.params.rt60_s),
            ("resample.rate_hz", self.resample.params.rate_hz),
            ("dropout.length_ms", self.dropout.params.length_ms),
            ("volume.target_dbfs", self.volume.params.target_dbfs),
            ("pitch.factor", self.pitch.params.factor),
            ("tempo.factor", self.tempo.params.factor),
        ];
        for (name, range) in ranges {
            if !range.is_valid() {
                return bad(format!("{name} range [{}, {}] is empty", range.0, range.1));
            }
        }
        if self.reverb.params.rt60_s.lo() < 0.0 {
            return bad("reverb.rt60_s must be non-negative".into());
        }
        if self.resample.params.rate_hz.lo() < f64::from(MIN_SAMPLE_RATE) {
            return bad(format!("resample.rate_hz must be at least {MIN_SAMPLE_RATE}"));
        }
        if self.dropout.params.length_ms.lo() < 0.0 {
            return bad("dropout.length_ms must be non-negative".into());
        }
        let (lo, hi) = self.dropout.params.segments;
        if lo > hi {
            return bad(format!("dropout.segments range [{lo}, {hi}] is empty"));
        }
        for (name, range) in [("pitch", self.pitch.params.factor), ("tempo", self.tempo.params.factor)] {
            if !range.within(0.5, 2.0) {
                return bad(format!("{name}.factor must lie within [0.5, 2.0]"));
            }
        }
        Ok(())
    }
}

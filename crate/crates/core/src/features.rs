//! Hann-windowed STFT magnitude spectrograms.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

use crate::audio::AudioClip;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("clip rate {clip} Hz does not match frame parameters ({params} Hz)")]
    RateMismatch { clip: u32, params: u32 },
    #[error("window of {window} samples exceeds fft size {fft}")]
    WindowTooLong { window: usize, fft: usize },
    #[error("fft size {0} is not a power of two")]
    FftSizeNotPowerOfTwo(usize),
    #[error("hop and window must be positive")]
    ZeroLength,
    #[error("matrix of {len} values does not fill {frames} x {bins}")]
    ShapeMismatch { frames: usize, bins: usize, len: usize },
    #[error("magnitudes must be finite and non-negative")]
    NegativeMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FrameParams {
    pub window_samples: usize,
    pub hop_samples: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
}

impl FrameParams {
    /// 32 ms window, 20 ms hop, 512-point FFT at 16 kHz.
    pub const fn speech_16k() -> Self {
        Self {
            window_samples: 512,
            hop_samples: 320,
            fft_size: 512,
            sample_rate: 16_000,
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frame_count(&self, sample_count: usize) -> usize {
        if sample_count < self.window_samples || self.hop_samples == 0 {
            0
        } else {
            (sample_count - self.window_samples) / self.hop_samples + 1
        }
    }

    fn validate(&self) -> Result<(), FeatureError> {
        if self.hop_samples == 0 || self.window_samples == 0 {
            return Err(FeatureError::ZeroLength);
        }
        if !self.fft_size.is_power_of_two() {
            return Err(FeatureError::FftSizeNotPowerOfTwo(self.fft_size));
        }
        if self.window_samples > self.fft_size {
            return Err(FeatureError::WindowTooLong {
                window: self.window_samples,
                fft: self.fft_size,
            });
        }
        Ok(())
    }
}

impl Default for FrameParams {
    fn default() -> Self {
        Self::speech_16k()
    }
}

/// Frames × bins magnitude matrix, stored row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<f32>,
    frames: usize,
    bins: usize,
    params: FrameParams,
}

impl Spectrogram {
    pub fn from_raw(data: Vec<f32>, frames: usize, bins: usize, params: FrameParams) -> Result<Self, FeatureError> {
        if data.len() != frames * bins {
            return Err(FeatureError::ShapeMismatch {
                frames,
                bins,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FeatureError::NegativeMagnitude);
        }
        Ok(Self {
            data,
            frames,
            bins,
            params,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn params(&self) -> FrameParams {
        self.params
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, k: usize) -> f32 {
        self.data[t * self.bins + k]
    }

    pub fn set(&mut self, t: usize, k: usize, v: f32) {
        self.data[t * self.bins + k] = v;
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum()
    }

    /// Index of the largest bin in frame `t`; ties go to the lower bin.
    pub fn peak_bin(&self, t: usize) -> usize {
        let row = self.frame(t);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        best
    }

    pub(crate) fn with_data(&self, data: Vec<f32>, frames: usize, bins: usize) -> Self {
        debug_assert_eq!(data.len(), frames * bins);
        Self {
            data,
            frames,
            bins,
            params: self.params,
        }
    }
}

/// In-place iterative radix-2 FFT over interleaved (re, im) pairs.
fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two() && im.len() == n);
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let angle = -2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let (wr, wi) = (libm::cos(angle * k as f64), libm::sin(angle * k as f64));
                let (a, b) = (start + k, start + k + len / 2);
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / len as f64))
        .collect()
}

pub fn spectrogram(clip: &AudioClip, params: FrameParams) -> Result<Spectrogram, FeatureError> {
    params.validate()?;
    if clip.sample_rate() != params.sample_rate {
        return Err(FeatureError::RateMismatch {
            clip: clip.sample_rate(),
            params: params.sample_rate,
        });
    }
    let frames = params.frame_count(clip.len());
    let bins = params.bins();
    let window = hann_window(params.window_samples);
    let samples = clip.samples();

    let mut data = Vec::with_capacity(frames * bins);
    let mut re = vec![0.0; params.fft_size];
    let mut im = vec![0.0; params.fft_size];
    for t in 0..frames {
        let start = t * params.hop_samples;
        re.fill(0.0);
        im.fill(0.0);
        for (i, w) in window.iter().enumerate() {
            re[i] = f64::from(samples[start + i]) * w;
        }
        fft_in_place(&mut re, &mut im);
        data.extend((0..bins).map(|k| libm::hypot(re[k], im[k]) as f32));
    }
    Ok(Spectrogram {
        data,
        frames,
        bins,
        params,
    })
}

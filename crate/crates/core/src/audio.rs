//! Mono waveforms, band-limited resampling and duration statistics.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt::Write;

use thiserror::Error;

/// Sample rate every downstream stage expects.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// Lowest rate `resample` accepts.
pub const MIN_SAMPLE_RATE: u32 = 4_000;

/// Taps on each side of the interpolation point.
const SINC_HALF_TAPS: i64 = 32;

/// Cutoff as a fraction of the lower of the two rates.
const SINC_CUTOFF: f64 = 0.45;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AudioError {
    #[error("target rate {0} Hz is below the {MIN_SAMPLE_RATE} Hz minimum")]
    RateTooLow(u32),
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("duration statistics need at least one value")]
    EmptyDurations,
    #[error("durations must be finite and positive, got {0}")]
    InvalidDuration(f64),
}

/// Mono waveform with amplitudes referenced to full scale 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(alloc::vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Root-mean-square amplitude; zero for an empty clip.
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// True when every sample is exactly zero.
    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }

    /// Returns a copy with the same rate and different samples.
    pub fn with_samples(&self, samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Clamps every sample into [-1, 1].
    pub fn clamp(&mut self) {
        for s in &mut self.samples {
            *s = s.clamp(-1.0, 1.0);
        }
    }
}

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let energy: f64 = samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    libm::sqrt(energy / samples.len() as f64)
}

/// Averages interleaved stereo frames into mono.
pub fn downmix_stereo(interleaved: &[f32]) -> Vec<f32> {
    interleaved
        .chunks_exact(2)
        .map(|frame| (frame[0] + frame[1]) * 0.5)
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        libm::sin(px) / px
    }
}

/// Resamples with a Hann-windowed sinc kernel (32 taps per side, cutoff
/// 0.45 × the lower rate). The kernel is symmetric, so there is no group delay.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate < MIN_SAMPLE_RATE {
        return Err(AudioError::RateTooLow(target_rate));
    }
    let source_rate = clip.sample_rate;
    if target_rate == source_rate {
        return Ok(clip.clone());
    }

    let input = &clip.samples;
    let ratio = f64::from(target_rate) / f64::from(source_rate);
    let out_len = libm::round(input.len() as f64 * ratio) as usize;

    // cutoff in cycles per source sample
    let cutoff = SINC_CUTOFF * f64::from(source_rate.min(target_rate)) / f64::from(source_rate);
    let half = SINC_HALF_TAPS as f64;
    let step = f64::from(source_rate) / f64::from(target_rate);

    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let pos = j as f64 * step;
        let centre = libm::floor(pos) as i64;
        let mut acc = 0.0f64;
        for k in (centre - SINC_HALF_TAPS + 1)..=(centre + SINC_HALF_TAPS) {
            if k < 0 || k as usize >= input.len() {
                continue;
            }
            let u = pos - k as f64;
            if u.abs() >= half {
                continue;
            }
            let window = 0.5 * (1.0 + libm::cos(PI * u / half));
            acc += f64::from(input[k as usize]) * 2.0 * cutoff * sinc(2.0 * cutoff * u) * window;
        }
        out.push(acc as f32);
    }
    Ok(AudioClip {
        samples: out,
        sample_rate: target_rate,
    })
}

/// Summary of a set of clip durations, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub count: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub min_s: f64,
    pub p25_s: f64,
    pub p50_s: f64,
    pub p75_s: f64,
    pub max_s: f64,
}

/// Percentile of already sorted data, interpolating linearly between order
/// statistics at rank `q · (n − 1)`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(rank) as usize;
    let hi = libm::ceil(rank) as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn duration_stats(durations: &[f64]) -> Result<DatasetStats, AudioError> {
    if durations.is_empty() {
        return Err(AudioError::EmptyDurations);
    }
    if let Some(&bad) = durations.iter().find(|d| !d.is_finite() || **d <= 0.0) {
        return Err(AudioError::InvalidDuration(bad));
    }
    let n = durations.len();
    let mean = durations.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = durations.iter().map(|d| (d - mean) * (d - mean)).sum();
        libm::sqrt(ss / (n - 1) as f64)
    } else {
        0.0
    };
    let mut sorted = durations.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(DatasetStats {
        count: n,
        mean_s: mean,
        std_s: std,
        min_s: sorted[0],
        p25_s: percentile_sorted(&sorted, 0.25),
        p50_s: percentile_sorted(&sorted, 0.50),
        p75_s: percentile_sorted(&sorted, 0.75),
        max_s: sorted[n - 1],
    })
}

impl DatasetStats {
    /// Two-column plain-text table: label, then seconds with six decimals.
    pub fn render(&self) -> String {
        let rows = [
            ("Mean audio length", self.mean_s),
            ("Standard deviation of audio length", self.std_s),
            ("Shortest audio length", self.min_s),
            ("25%", self.p25_s),
            ("50%", self.p50_s),
            ("75%", self.p75_s),
            ("Longest audio length", self.max_s),
        ];
        let mut out = String::new();
        for (label, value) in rows {
            // writing into a String cannot fail
            let _ = writeln!(out, "{label:<34}  {value:>10.6} seconds");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, len: usize, amp: f64) -> AudioClip {
        let samples = (0..len)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin()) as f32)
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    fn pearson(a: &[f32], b: &[f32]) -> f64 {
        let n = a.len().min(b.len()) as f64;
        let ma = a.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let mb = b.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (&x, &y) in a.iter().zip(b) {
            let (dx, dy) = (f64::from(x) - ma, f64::from(y) - mb);
            sab += dx * dy;
            saa += dx * dx;
            sbb += dy * dy;
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn resample_identity_when_rates_match() {
        let clip = sine(440.0, 16_000, 1000, 0.5);
        assert_eq!(resample(&clip, 16_000).unwrap(), clip);
    }

    #[test]
    fn resample_length_law() {
        for n in [0usize, 1, 2, 3, 999, 1000, 16_001] {
            let clip = AudioClip::silence(n, 16_000).unwrap();
            let out = resample(&clip, 8_000).unwrap();
            assert_eq!(out.len(), (n as f64 / 2.0).round() as usize);
            assert_eq!(out.sample_rate(), 8_000);
        }
    }

    #[test]
    fn resample_rejects_low_rate() {
        let clip = AudioClip::silence(10, 16_000).unwrap();
        assert_eq!(resample(&clip, 3_999), Err(AudioError::RateTooLow(3_999)));
    }

    #[test]
    fn sine_round_trip_keeps_shape() {
        let clip = sine(440.0, 16_000, 16_000, 1.0);
        let down = resample(&clip, 8_000).unwrap();
        let back = resample(&down, 16_000).unwrap();
        assert_eq!(back.len(), clip.len());
        let r = pearson(clip.samples(), back.samples());
        assert!(r >= 0.99, "correlation {r}");
    }

    #[test]
    fn round_trip_preserves_duration_within_one_period() {
        for (n, mid) in [(16_000usize, 11_025u32), (12_345, 8_000), (777, 22_050)] {
            let clip = AudioClip::silence(n, 16_000).unwrap();
            let back = resample(&resample(&clip, mid).unwrap(), 16_000).unwrap();
            assert!((back.duration_seconds() - clip.duration_seconds()).abs() <= 1.0 / 16_000.0);
        }
    }

    #[test]
    fn stats_hand_example() {
        let s = duration_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.count, 4);
        assert!((s.mean_s - 2.5).abs() < 1e-12);
        assert!((s.std_s - 1.290994).abs() < 1e-6);
        assert!((s.p25_s - 1.75).abs() < 1e-12);
        assert!((s.p50_s - 2.5).abs() < 1e-12);
        assert!((s.p75_s - 3.25).abs() < 1e-12);
    }

    #[test]
    fn stats_single_value() {
        let s = duration_stats(&[2.0]).unwrap();
        assert_eq!(
            (s.mean_s, s.std_s, s.min_s, s.p25_s, s.p50_s, s.p75_s, s.max_s),
            (2.0, 0.0, 2.0, 2.0, 2.0, 2.0, 2.0)
        );
    }

    #[test]
    fn stats_errors() {
        assert_eq!(duration_stats(&[]), Err(AudioError::EmptyDurations));
        assert_eq!(duration_stats(&[1.0, 0.0]), Err(AudioError::InvalidDuration(0.0)));
    }

    #[test]
    fn stereo_mean_downmix() {
        assert_eq!(downmix_stereo(&[1.0, 0.0, -0.5, 0.5]), [0.5, 0.0]);
    }
}

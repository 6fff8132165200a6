use alloc::vec::Vec;

use rand::Rng;

use super::{AugmentError, ParamRange};
use crate::audio::{resample, rms, AudioClip};

/// Loops or trims `noise` to the clip length, scales it so the clip-to-noise
/// RMS ratio equals `snr_db`, mixes and clamps.
pub fn overlay(clip: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip, AugmentError> {
    if clip.sample_rate() != noise.sample_rate() {
        return Err(AugmentError::RateMismatch {
            clip: clip.sample_rate(),
            noise: noise.sample_rate(),
        });
    }
    if clip.is_empty() || clip.is_silent() {
        return Err(AugmentError::Silent("clip"));
    }
    if noise.is_empty() || noise.is_silent() {
        return Err(AugmentError::Silent("noise"));
    }
    let looped: Vec<f32> = noise.samples().iter().copied().cycle().take(clip.len()).collect();
    let noise_rms = rms(&looped);
    if noise_rms == 0.0 {
        // the covered stretch of noise happened to be all zeros
        return Err(AugmentError::Silent("noise"));
    }
    let target_rms = clip.rms() / libm::pow(10.0, snr_db / 20.0);
    let gain = target_rms / noise_rms;
    let mixed = clip
        .samples()
        .iter()
        .zip(&looped)
        .map(|(&s, &n)| (f64::from(s) + gain * f64::from(n)).clamp(-1.0, 1.0) as f32)
        .collect();
    Ok(clip.with_samples(mixed))
}

/// Delay lengths and gains of the Schroeder reverberator at a given rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverbTopology {
    pub comb_delays: [usize; 4],
    pub comb_gains: [f64; 4],
    pub allpass_delays: [usize; 2],
    pub allpass_gain: f64,
}

const COMB_DELAYS_S: [f64; 4] = [0.0297, 0.0371, 0.0411, 0.0437];
const ALLPASS_DELAYS_S: [f64; 2] = [0.0050, 0.0017];
const ALLPASS_GAIN: f64 = 0.7;
const WET_MIX: f64 = 0.5;

impl ReverbTopology {
    pub fn new(sample_rate: u32, rt60_s: f64) -> Self {
        let rate = f64::from(sample_rate);
        let comb_delays = COMB_DELAYS_S.map(|d| (libm::round(d * rate) as usize).max(1));
        let comb_gains = comb_delays.map(|d| {
            if rt60_s == 0.0 {
                0.0
            } else {
                libm::pow(10.0, -3.0 * (d as f64 / rate) / rt60_s)
            }
        });
        Self {
            comb_delays,
            comb_gains,
            allpass_delays: ALLPASS_DELAYS_S.map(|d| (libm::round(d * rate) as usize).max(1)),
            allpass_gain: ALLPASS_GAIN,
        }
    }

    /// Wet path only: four parallel feedback combs (averaged) into two series
    /// all-pass sections.
    pub fn wet(&self, input: &[f64]) -> Vec<f64> {
        let n = input.len();
        let mut sum = alloc::vec![0.0; n];
        for (&d, &g) in self.comb_delays.iter().zip(&self.comb_gains) {
            // y[i] = x[i - d] + g * y[i - d]
            let mut y = alloc::vec![0.0; n];
            for i in d..n {
                y[i] = input[i - d] + g * y[i - d];
            }
            for (s, v) in sum.iter_mut().zip(&y) {
                *s += 0.25 * v;
            }
        }
        let g = self.allpass_gain;
        let mut signal = sum;
        for &d in &self.allpass_delays {
            // y[i] = -g x[i] + x[i - d] + g y[i - d]
            let mut y = alloc::vec![0.0; n];
            for i in 0..n {
                let mut v = -g * signal[i];
                if i >= d {
                    v += signal[i - d] + g * y[i - d];
                }
                y[i] = v;
            }
            signal = y;
        }
        signal
    }
}

pub fn reverb(clip: &AudioClip, rt60_s: f64) -> Result<AudioClip, AugmentError> {
    if !rt60_s.is_finite() || rt60_s < 0.0 {
        return Err(AugmentError::NegativeRt60(rt60_s));
    }
    let topology = ReverbTopology::new(clip.sample_rate(), rt60_s);
    let dry: Vec<f64> = clip.samples().iter().map(|&s| f64::from(s)).collect();
    let wet = topology.wet(&dry);
    let out = dry
        .iter()
        .zip(&wet)
        .map(|(d, w)| ((1.0 - WET_MIX) * d + WET_MIX * w).clamp(-1.0, 1.0) as f32)
        .collect();
    Ok(clip.with_samples(out))
}

/// Resamples to `intermediate_rate` and back, then trims or zero-pads to the
/// original length (the round trip is off by at most one sample).
pub fn resample_cycle(clip: &AudioClip, intermediate_rate: u32) -> Result<AudioClip, AugmentError> {
    let down = resample(clip, intermediate_rate)?;
    let back = resample(&down, clip.sample_rate())?;
    let mut samples = back.into_samples();
    samples.resize(clip.len(), 0.0);
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(clip.with_samples(samples))
}

const MU: f64 = 255.0;
const MU_LAW_LEVELS: f64 = 127.0;

/// μ-law compresses a sample and quantizes it to a signed 8-bit code.
pub fn mu_law_encode(sample: f32) -> i8 {
    let x = f64::from(sample).clamp(-1.0, 1.0);
    let y = libm::copysign(libm::log1p(MU * x.abs()) / libm::log1p(MU), x);
    libm::round(y * MU_LAW_LEVELS) as i8
}

pub fn mu_law_decode(code: i8) -> f32 {
    let y = f64::from(code) / MU_LAW_LEVELS;
    let x = libm::copysign(libm::expm1(y.abs() * libm::log1p(MU)) / MU, y);
    x as f32
}

/// Lossy-codec stand-in: μ-law (μ = 255) companding through 8 bits.
pub fn codec_sim(clip: &AudioClip) -> AudioClip {
    let out = clip
        .samples()
        .iter()
        .map(|&s| mu_law_decode(mu_law_encode(s)))
        .collect();
    clip.with_samples(out)
}

/// Uniform gain so the RMS level equals `target_dbfs` (full scale 1.0), then
/// clamps. Silent input is returned unchanged with a warning.
pub fn level_volume(clip: &AudioClip, target_dbfs: f64) -> AudioClip {
    let current = clip.rms();
    if current == 0.0 {
        log::warn!("level_volume: silent input, gain undefined; leaving clip unchanged");
        return clip.clone();
    }
    let current_dbfs = 20.0 * libm::log10(current);
    let gain = libm::pow(10.0, (target_dbfs - current_dbfs) / 20.0);
    let out = clip
        .samples()
        .iter()
        .map(|&s| (f64::from(s) * gain).clamp(-1.0, 1.0) as f32)
        .collect();
    clip.with_samples(out)
}

/// Draws `n_segments` half-open sample intervals with lengths uniform in
/// `length_ms` milliseconds. Intervals may overlap.
pub fn dropout_intervals<R: Rng + ?Sized>(
    len: usize,
    sample_rate: u32,
    n_segments: usize,
    length_ms: ParamRange,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let mut intervals = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        let ms = length_ms.sample(rng);
        let seg = (libm::round(ms * f64::from(sample_rate) / 1000.0) as usize).min(len);
        let start = if len > seg { rng.random_range(0..=len - seg) } else { 0 };
        intervals.push((start, start + seg));
    }
    intervals
}

/// Zeroes `n_segments` random intervals.
pub fn segment_dropout<R: Rng + ?Sized>(
    clip: &AudioClip,
    n_segments: usize,
    length_ms: ParamRange,
    rng: &mut R,
) -> AudioClip {
    let mut out = clip.clone();
    let intervals = dropout_intervals(clip.len(), clip.sample_rate(), n_segments, length_ms, rng);
    for (start, end) in intervals {
        out.samples_mut()[start..end].fill(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, len: usize, amp: f64) -> AudioClip {
        let samples = (0..len)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / 16_000.0).sin()) as f32)
            .collect();
        AudioClip::new(samples, 16_000).unwrap()
    }

    fn noise(rng: &mut ChaCha8Rng, len: usize, amp: f32) -> AudioClip {
        let samples = (0..len).map(|_| rng.random_range(-amp..=amp)).collect();
        AudioClip::new(samples, 16_000).unwrap()
    }

    fn max_abs_diff(a: &AudioClip, b: &AudioClip) -> f32 {
        a.samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f32::max)
    }

    #[test]
    fn overlay_at_high_snr_is_nearly_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clip = sine(300.0, 4000, 0.5);
        let out = overlay(&clip, &noise(&mut rng, 1000, 0.9), 60.0).unwrap();
        assert!(max_abs_diff(&clip, &out) <= 0.002);
    }

    #[test]
    fn overlay_hits_requested_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let clip = noise(&mut rng, 3000, 0.3);
            let n = noise(&mut rng, 700, 0.8);
            let snr = rng.random_range(0.0..30.0);
            let out = overlay(&clip, &n, snr).unwrap();
            let added: Vec<f32> = out.samples().iter().zip(clip.samples()).map(|(o, c)| o - c).collect();
            let measured = 20.0 * (clip.rms() / rms(&added)).log10();
            assert!((measured - snr).abs() < 0.1, "{measured} vs {snr}");
        }
    }

    #[test]
    fn overlay_loops_short_noise_without_gaps() {
        let clip = AudioClip::new(alloc::vec![0.1; 900], 16_000).unwrap();
        let n = AudioClip::new(alloc::vec![0.5; 300], 16_000).unwrap();
        let out = overlay(&clip, &n, 0.0).unwrap();
        assert!(out.samples().iter().all(|&s| (s - 0.2).abs() < 1e-6));
    }

    #[test]
    fn overlay_rejects_silence() {
        let clip = sine(300.0, 100, 0.5);
        let silent = AudioClip::silence(100, 16_000).unwrap();
        assert_eq!(overlay(&clip, &silent, 10.0), Err(AugmentError::Silent("noise")));
        assert_eq!(overlay(&silent, &clip, 10.0), Err(AugmentError::Silent("clip")));
    }

    #[test]
    fn reverb_topology_delays() {
        let t = ReverbTopology::new(16_000, 0.5);
        assert_eq!(t.comb_delays, [475, 594, 658, 699]);
        assert_eq!(t.allpass_delays, [80, 27]);
        assert!(ReverbTopology::new(16_000, 0.0).comb_gains.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_rt60_impulse_trace() {
        // hand trace: combs give four echoes of 1/4 at their delays; the first
        // all-pass turns the 475 echo into -0.7/4 at 475, the second all-pass
        // multiplies by -0.7 again, so the wet path starts with +0.49/4.
        let mut impulse = alloc::vec![0.0f32; 1000];
        impulse[0] = 1.0;
        let clip = AudioClip::new(impulse, 16_000).unwrap();
        let out = reverb(&clip, 0.0).unwrap();
        assert_eq!(out.samples()[0], 0.5);
        assert!(out.samples()[1..475].iter().all(|&s| s == 0.0));
        assert!((f64::from(out.samples()[475]) - 0.5 * 0.49 * 0.25).abs() < 1e-7);
    }

    #[test]
    fn first_wet_sample_is_shortest_comb_delay() {
        for rt60 in [0.1, 0.5, 2.0] {
            let topology = ReverbTopology::new(16_000, rt60);
            let mut impulse = alloc::vec![0.0; 2000];
            impulse[0] = 1.0;
            let wet = topology.wet(&impulse);
            let first = wet.iter().position(|&v| v != 0.0).unwrap();
            assert_eq!(first, 475);
        }
    }

    #[test]
    fn reverb_of_silence_is_silent() {
        let clip = AudioClip::silence(5000, 16_000).unwrap();
        assert!(reverb(&clip, 0.8).unwrap().is_silent());
        assert_eq!(reverb(&clip, -0.1), Err(AugmentError::NegativeRt60(-0.1)));
    }

    #[test]
    fn resample_cycle_keeps_length_and_shape() {
        let clip = sine(440.0, 8001, 0.8);
        let same = resample_cycle(&clip, 16_000).unwrap();
        assert_eq!(same, clip);
        for rate in [8_000, 11_025, 12_000] {
            let out = resample_cycle(&clip, rate).unwrap();
            assert_eq!(out.len(), clip.len());
        }
    }

    #[test]
    fn mu_law_bounds() {
        let clip = AudioClip::silence(10, 16_000).unwrap();
        assert!(codec_sim(&clip).is_silent());

        // exhaustive scan of the code grid: the worst case is half the widest
        // gap between adjacent reconstruction levels
        let mut widest = 0.0f64;
        for code in -127i8..127 {
            let gap = f64::from(mu_law_decode(code + 1)) - f64::from(mu_law_decode(code));
            widest = widest.max(gap);
        }
        assert!(widest / 2.0 <= 0.031, "half gap {}", widest / 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let loud = noise(&mut rng, 20_000, 1.0);
        let out = codec_sim(&loud);
        assert!(max_abs_diff(&loud, &out) <= 0.031);
        assert!(out.samples().iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn level_volume_examples() {
        let full = sine(1000.0, 16_000, 1.0);
        let out = level_volume(&full, -3.0103);
        let gain = out.rms() / full.rms();
        assert!((gain - 1.0).abs() < 1e-4);

        let quiet = sine(1000.0, 16_000, 0.1);
        let out = level_volume(&quiet, -20.0);
        let peak = out.samples().iter().fold(0.0f32, |m, s| m.max(s.abs()));
        assert!((f64::from(peak) - 0.141421).abs() < 1e-4);

        let silent = AudioClip::silence(100, 16_000).unwrap();
        assert_eq!(level_volume(&silent, -20.0), silent);
    }

    #[test]
    fn level_volume_hits_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let amp = rng.random_range(0.01..0.5);
            let clip = noise(&mut rng, 2000, amp);
            let target = rng.random_range(-40.0..-15.0);
            let out = level_volume(&clip, target);
            let level = 20.0 * out.rms().log10();
            assert!((level - target).abs() < 0.1);
        }
    }

    #[test]
    fn dropout_behaviour() {
        let clip = AudioClip::new(alloc::vec![0.5; 16_000], 16_000).unwrap();
        let range = ParamRange(10.0, 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(segment_dropout(&clip, 0, range, &mut rng), clip);

        let out = segment_dropout(&clip, 3, range, &mut ChaCha8Rng::seed_from_u64(9));
        let again = segment_dropout(&clip, 3, range, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(out, again);

        let intervals = dropout_intervals(16_000, 16_000, 3, range, &mut ChaCha8Rng::seed_from_u64(9));
        let zeroed = out.samples().iter().filter(|&&s| s == 0.0).count();
        assert!(zeroed > 0 && zeroed <= 3 * 800);
        for (i, &s) in out.samples().iter().enumerate() {
            let inside = intervals.iter().any(|&(a, b)| (a..b).contains(&i));
            assert_eq!(s == 0.0, inside);
        }
    }
}

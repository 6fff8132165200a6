use alloc::vec::Vec;

use rand::Rng;

use super::AugmentError;
use crate::features::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Frequency,
    Time,
}

fn extent(spec: &Spectrogram, axis: Axis) -> usize {
    match axis {
        Axis::Frequency => spec.bins(),
        Axis::Time => spec.frames(),
    }
}

/// Draws `n_masks` half-open spans along an axis of length `extent`. Width is
/// uniform in `[0, max_width]`, start uniform in `[0, extent - width]`.
pub fn mask_spans<R: Rng + ?Sized>(
    extent: usize,
    max_width: usize,
    n_masks: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let max_width = if max_width > extent {
        log::warn!("mask width {max_width} exceeds axis extent {extent}; clamping");
        extent
    } else {
        max_width
    };
    let mut spans = Vec::with_capacity(n_masks);
    if max_width == 0 {
        return spans;
    }
    for _ in 0..n_masks {
        let width = rng.random_range(0..=max_width);
        let start = rng.random_range(0..=extent - width);
        spans.push((start, start + width));
    }
    spans
}

/// Sets random frequency bands or time spans to zero.
pub fn axis_mask<R: Rng + ?Sized>(
    spec: &Spectrogram,
    axis: Axis,
    max_width: usize,
    n_masks: usize,
    rng: &mut R,
) -> Spectrogram {
    let spans = mask_spans(extent(spec, axis), max_width, n_masks, rng);
    let mut out = spec.clone();
    for (start, end) in spans {
        for i in start..end {
            match axis {
                Axis::Time => {
                    for k in 0..spec.bins() {
                        out.set(i, k, 0.0);
                    }
                }
                Axis::Frequency => {
                    for t in 0..spec.frames() {
                        out.set(t, i, 0.0);
                    }
                }
            }
        }
    }
    out
}

fn lerp_at(values: &[f32], pos: f64) -> f32 {
    let last = values.len() - 1;
    if pos <= 0.0 {
        return values[0];
    }
    let lo = libm::floor(pos) as usize;
    if lo >= last {
        return values[last];
    }
    let frac = pos - lo as f64;
    (f64::from(values[lo]) * (1.0 - frac) + f64::from(values[lo + 1]) * frac) as f32
}

/// Stretches the spectrogram along one axis by `factor` with linear
/// interpolation.
///
/// Along time the frame count becomes `round(frames · factor)`. Along frequency
/// the content moves (bin `k` reads source bin `k / factor`) but the bin count
/// is kept, so content pushed past the top is dropped and vacated bins are zero.
pub fn axis_scale(spec: &Spectrogram, axis: Axis, factor: f64) -> Result<Spectrogram, AugmentError> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(AugmentError::FactorOutOfRange(factor));
    }
    if factor == 1.0 || spec.frames() == 0 {
        return Ok(spec.clone());
    }
    let (frames, bins) = (spec.frames(), spec.bins());
    match axis {
        Axis::Time => {
            let new_frames = (libm::round(frames as f64 * factor) as usize).max(1);
            let mut column = alloc::vec![0.0f32; frames];
            let mut out = alloc::vec![0.0f32; new_frames * bins];
            for k in 0..bins {
                for (t, c) in column.iter_mut().enumerate() {
                    *c = spec.get(t, k);
                }
                for j in 0..new_frames {
                    out[j * bins + k] = lerp_at(&column, j as f64 / factor);
                }
            }
            Ok(spec.with_data(out, new_frames, bins))
        }
        Axis::Frequency => {
            let mut data = Vec::with_capacity(frames * bins);
            for t in 0..frames {
                let row = spec.frame(t);
                for k in 0..bins {
                    let pos = k as f64 / factor;
                    data.push(if pos > (bins - 1) as f64 {
                        0.0
                    } else {
                        lerp_at(row, pos)
                    });
                }
            }
            Ok(spec.with_data(data, frames, bins))
        }
    }
}

/// Time warp with a single control point: a random frame `t0 ∈ [W, frames − W)`
/// moves by `w ∈ [−W, W]`, and both sides are re-timed linearly.
pub fn warp<R: Rng + ?Sized>(
    spec: &Spectrogram,
    max_shift_frames: usize,
    rng: &mut R,
) -> Result<Spectrogram, AugmentError> {
    let frames = spec.frames();
    if max_shift_frames == 0 {
        return Ok(spec.clone());
    }
    if frames <= 2 * max_shift_frames {
        return Err(AugmentError::WarpTooWide {
            frames,
            max_shift: max_shift_frames,
        });
    }
    let w_max = max_shift_frames as i64;
    let t0 = rng.random_range(max_shift_frames..frames - max_shift_frames);
    let shift = rng.random_range(-w_max..=w_max);
    let last = (frames - 1) as f64;
    let src_anchor = t0 as f64;
    // keep the moved anchor strictly inside so neither segment collapses
    let dst_anchor = (t0 as i64 + shift).clamp(1, frames as i64 - 2) as f64;

    let bins = spec.bins();
    let mut column = alloc::vec![0.0f32; frames];
    let mut out = alloc::vec![0.0f32; frames * bins];
    for k in 0..bins {
        for (t, c) in column.iter_mut().enumerate() {
            *c = spec.get(t, k);
        }
        for j in 0..frames {
            let j = j as f64;
            let src = if j <= dst_anchor {
                j * src_anchor / dst_anchor
            } else {
                src_anchor + (j - dst_anchor) * (last - src_anchor) / (last - dst_anchor)
            };
            out[j as usize * bins + k] = lerp_at(&column, src);
        }
    }
    Ok(spec.with_data(out, frames, bins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrameParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn smooth(frames: usize, bins: usize) -> Spectrogram {
        let data = (0..frames * bins)
            .map(|i| {
                let (t, k) = ((i / bins) as f64, (i % bins) as f64);
                (1.5 + (t / 7.0).sin() + 0.5 * (k / 11.0).cos()) as f32
            })
            .collect();
        Spectrogram::from_raw(data, frames, bins, FrameParams::default()).unwrap()
    }

    fn tone(frames: usize, bins: usize, peak: usize) -> Spectrogram {
        let data = (0..frames * bins)
            .map(|i| {
                let d = (i % bins) as f64 - peak as f64;
                (-(d * d) / 8.0).exp() as f32
            })
            .collect();
        Spectrogram::from_raw(data, frames, bins, FrameParams::default()).unwrap()
    }

    #[test]
    fn zero_width_mask_is_identity() {
        let spec = smooth(40, 257);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(axis_mask(&spec, Axis::Time, 0, 3, &mut rng), spec);
        assert_eq!(axis_mask(&spec, Axis::Frequency, 10, 0, &mut rng), spec);
    }

    #[test]
    fn masked_cells_are_zero_and_others_untouched() {
        let spec = smooth(40, 257);
        for axis in [Axis::Time, Axis::Frequency] {
            let spans = mask_spans(extent(&spec, axis), 12, 2, &mut ChaCha8Rng::seed_from_u64(11));
            let out = axis_mask(&spec, axis, 12, 2, &mut ChaCha8Rng::seed_from_u64(11));
            for t in 0..spec.frames() {
                for k in 0..spec.bins() {
                    let i = if axis == Axis::Time { t } else { k };
                    if spans.iter().any(|&(a, b)| (a..b).contains(&i)) {
                        assert_eq!(out.get(t, k), 0.0);
                    } else {
                        assert_eq!(out.get(t, k), spec.get(t, k));
                    }
                }
            }
        }
    }

    #[test]
    fn masked_fraction_bound() {
        let spec = smooth(50, 257);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            for (axis, ext) in [(Axis::Time, 50.0), (Axis::Frequency, 257.0)] {
                let out = axis_mask(&spec, axis, 8, 2, &mut rng);
                let zeros = out.data().iter().filter(|&&v| v == 0.0).count() as f64;
                assert!(zeros / out.data().len() as f64 <= 2.0 * 8.0 / ext + 1e-12);
            }
        }
    }

    #[test]
    fn oversized_mask_is_clamped() {
        let spec = smooth(5, 20);
        let out = axis_mask(&spec, Axis::Time, 50, 1, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out.frames(), 5);
    }

    #[test]
    fn scale_identity_and_extent_law() {
        let spec = smooth(100, 257);
        assert_eq!(axis_scale(&spec, Axis::Time, 1.0).unwrap(), spec);
        let half = axis_scale(&spec, Axis::Time, 0.5).unwrap();
        assert_eq!((half.frames(), half.bins()), (50, 257));
        let up = axis_scale(&spec, Axis::Frequency, 1.3).unwrap();
        assert_eq!((up.frames(), up.bins()), (100, 257));
        assert_eq!(
            axis_scale(&spec, Axis::Time, 2.5),
            Err(AugmentError::FactorOutOfRange(2.5))
        );
    }

    #[test]
    fn frequency_scale_moves_the_peak() {
        let spec = tone(10, 257, 32);
        let out = axis_scale(&spec, Axis::Frequency, 1.1).unwrap();
        for t in 0..out.frames() {
            let peak = out.peak_bin(t) as i64;
            assert!((peak - 35).abs() <= 1, "peak {peak}");
        }
    }

    #[test]
    fn warp_identity_and_errors() {
        let spec = smooth(30, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(warp(&spec, 0, &mut rng).unwrap(), spec);
        assert_eq!(
            warp(&spec, 15, &mut rng),
            Err(AugmentError::WarpTooWide {
                frames: 30,
                max_shift: 15
            })
        );
    }

    #[test]
    fn warp_preserves_extent_and_mass() {
        let spec = smooth(80, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let out = warp(&spec, 5, &mut rng).unwrap();
            assert_eq!((out.frames(), out.bins()), (80, 64));
            let change = (out.total_mass() - spec.total_mass()).abs() / spec.total_mass();
            assert!(change < 0.05, "mass change {change}");
        }
    }
}

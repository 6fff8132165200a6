//! RIFF/WAVE reading (PCM 16-bit or float 32-bit, mono or stereo) and
//! 16-bit mono writing.

use std::fs;
use std::path::{Path, PathBuf};

use medspeech_core::audio::{downmix_stereo, resample, AudioClip, AudioError};
use thiserror::Error;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("cannot write an empty clip")]
    EmptyClip,
    #[error(transparent)]
    Audio(#[from] AudioError),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> WavError + '_ {
    move |source| WavError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_format(body: &[u8]) -> Result<Format, WavError> {
    if body.len() < 16 {
        return Err(WavError::Malformed(format!(
            "fmt chunk is {} bytes, need 16",
            body.len()
        )));
    }
    let mut tag = u16_at(body, 0);
    if tag == FORMAT_EXTENSIBLE {
        // the sub-format GUID starts with the real format tag
        if body.len() < 26 {
            return Err(WavError::Malformed("extensible fmt chunk is truncated".into()));
        }
        tag = u16_at(body, 24);
    }
    Ok(Format {
        tag,
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        bits: u16_at(body, 14),
    })
}

/// Decodes a WAV byte buffer. Stereo is averaged to mono; 16-bit PCM is
/// divided by 32768.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::Malformed("missing RIFF/WAVE header".into()));
    }
    let mut format = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start.checked_add(size).filter(|&e| e <= bytes.len()).ok_or_else(|| {
            WavError::Malformed(format!(
                "chunk {:?} declares {size} bytes but only {} remain",
                String::from_utf8_lossy(id),
                bytes.len() - start
            ))
        })?;
        match id {
            b"fmt " => format = Some(parse_format(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // chunks are padded to even sizes
        pos = end + (size & 1);
    }
    let format = format.ok_or_else(|| WavError::Malformed("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| WavError::Malformed("no data chunk".into()))?;

    let samples: Vec<f32> = match (format.tag, format.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| f32::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
        (tag, bits) => {
            return Err(WavError::Unsupported(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    let samples = match format.channels {
        1 => samples,
        2 => downmix_stereo(&samples),
        n => return Err(WavError::Unsupported(format!("{n} channels"))),
    };
    if format.sample_rate == 0 {
        return Err(WavError::Malformed("sample rate is zero".into()));
    }
    Ok(AudioClip::new(samples, format.sample_rate)?)
}

pub fn load_wav(path: &Path) -> Result<AudioClip, WavError> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    parse_wav(&bytes)
}

/// 16-bit PCM mono. Samples are clamped to [-1, 1], scaled by 32768 and
/// rounded half away from zero; +1.0 saturates at 32767.
pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>, WavError> {
    if clip.is_empty() {
        return Err(WavError::EmptyClip);
    }
    Ok(encode_pcm16(clip.samples(), 1, clip.sample_rate()))
}

/// 16-bit PCM with any channel count; `interleaved` holds one sample per
/// channel per frame.
pub fn encode_pcm16(interleaved: &[f32], channels: u16, sample_rate: u32) -> Vec<u8> {
    let data_len = interleaved.len() * 2;
    let block = channels * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * u32::from(block)).to_le_bytes());
    out.extend_from_slice(&block.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in interleaved {
        let scaled = (f64::from(s).clamp(-1.0, 1.0) * 32768.0).round();
        let q = scaled.clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn save_wav(clip: &AudioClip, path: &Path) -> Result<(), WavError> {
    let bytes = encode_wav(clip)?;
    fs::write(path, bytes).map_err(io_error(path))
}

/// Loads, downmixes, resamples to `target_rate` and writes 16-bit mono.
pub fn convert(input: &Path, output: &Path, target_rate: u32) -> Result<AudioClip, WavError> {
    let clip = load_wav(input)?;
    let clip = resample(&clip, target_rate)?;
    save_wav(&clip, output)?;
    Ok(clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(tag: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        let block = channels * bits / 8;
        out.extend_from_slice(&(rate * u32::from(block)).to_le_bytes());
        out.extend_from_slice(&block.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn pcm16_scaling() {
        let data: Vec<u8> = [0i16, 16384, -32768].iter().flat_map(|s| s.to_le_bytes()).collect();
        let clip = parse_wav(&header(1, 1, 16000, 16, &data)).unwrap();
        assert_eq!(clip.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(clip.sample_rate(), 16000);
    }

    #[test]
    fn float_stereo_downmix() {
        let data: Vec<u8> = [1.0f32, 0.0, 0.25, 0.75].iter().flat_map(|s| s.to_le_bytes()).collect();
        let clip = parse_wav(&header(3, 2, 44100, 32, &data)).unwrap();
        assert_eq!(clip.samples(), &[0.5, 0.5]);
    }

    #[test]
    fn error_kinds() {
        let good = header(1, 1, 16000, 16, &[0, 0]);
        assert!(matches!(parse_wav(&good[..20]), Err(WavError::Malformed(_))));
        assert!(matches!(parse_wav(b"RIFX"), Err(WavError::Malformed(_))));
        assert!(matches!(
            parse_wav(&header(2, 1, 16000, 4, &[0, 0])),
            Err(WavError::Unsupported(_))
        ));
        assert!(matches!(
            parse_wav(&header(1, 1, 16000, 24, &[0, 0, 0])),
            Err(WavError::Unsupported(_))
        ));
        assert!(matches!(
            parse_wav(&header(1, 3, 16000, 16, &[0; 6])),
            Err(WavError::Unsupported(_))
        ));
        assert!(matches!(
            load_wav(Path::new("/nonexistent/x.wav")),
            Err(WavError::Io { .. })
        ));
    }

    #[test]
    fn save_clamps_and_round_trips() {
        let clip = AudioClip::new(vec![0.0, 2.0, -1.0, 0.123_456, -0.5], 8000).unwrap();
        let back = parse_wav(&encode_wav(&clip).unwrap()).unwrap();
        assert_eq!(back.sample_rate(), 8000);
        assert!((back.samples()[1] - 32767.0 / 32768.0).abs() < 1e-9);
        for (a, b) in clip.samples().iter().zip(back.samples()) {
            assert!((a.clamp(-1.0, 1.0) - b).abs() <= 1.0 / 32768.0);
        }
        assert!(matches!(
            encode_wav(&AudioClip::new(vec![], 16000).unwrap()),
            Err(WavError::EmptyClip)
        ));
    }

    #[test]
    fn stereo_encoding_downmixes_on_load() {
        let bytes = encode_pcm16(&[0.5, 0.25, -0.5, 0.0], 2, 22050);
        let clip = parse_wav(&bytes).unwrap();
        assert_eq!(clip.sample_rate(), 22050);
        assert_eq!(clip.samples(), &[0.375, -0.25]);
    }

    #[test]
    fn skips_unknown_and_odd_chunks() {
        let mut bytes = header(1, 1, 16000, 16, &[0, 64]);
        // insert an odd-sized LIST chunk after WAVE
        let list = [b"LIST".as_slice(), &3u32.to_le_bytes(), &[1, 2, 3, 0]].concat();
        bytes.splice(12..12, list);
        let clip = parse_wav(&bytes).unwrap();
        assert_eq!(clip.samples(), &[0.5]);
    }
}

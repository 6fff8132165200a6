//! Binary matrix files: `CTCL` for logits and `SPEC` for spectrograms.
//!
//! Both share one layout: four magic bytes, then little-endian u32 version
//! (1), u32 rows, u32 columns and rows·columns little-endian f32 values,
//! row-major.

use std::fs;
use std::path::{Path, PathBuf};

use medspeech_core::decode::{DecodeError, LogitMatrix};
use medspeech_core::features::{FeatureError, FrameParams, Spectrogram};
use thiserror::Error;

pub const LOGITS_MAGIC: [u8; 4] = *b"CTCL";
pub const SPECTROGRAM_MAGIC: [u8; 4] = *b"SPEC";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("header declares {rows}x{cols} values ({expected} bytes) but the payload has {found} bytes")]
    Length {
        rows: u32,
        cols: u32,
        expected: u128,
        found: usize,
    },
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Raw decoded matrix: rows, columns and row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

pub fn encode_matrix(magic: [u8; 4], rows: usize, cols: usize, values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Checks magic, version and payload length before allocating.
pub fn decode_matrix(magic: [u8; 4], bytes: &[u8]) -> Result<RawMatrix, MatrixError> {
    let word = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    if bytes.len() < HEADER_LEN || bytes[..4] != magic {
        return Err(MatrixError::Magic {
            expected: String::from_utf8_lossy(&magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(MatrixError::Version(version));
    }
    let (rows, cols) = (word(8), word(12));
    let expected = u128::from(rows) * u128::from(cols) * 4;
    let payload = &bytes[HEADER_LEN..];
    if expected != payload.len() as u128 {
        return Err(MatrixError::Length {
            rows,
            cols,
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(RawMatrix {
        rows: rows as usize,
        cols: cols as usize,
        values,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, MatrixError> {
    fs::read(path).map_err(|source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), MatrixError> {
    fs::write(path, bytes).map_err(|source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_logits(logits: &LogitMatrix) -> Vec<u8> {
    encode_matrix(
        LOGITS_MAGIC,
        logits.frames(),
        logits.classes(),
        logits.data().iter().map(|&v| v as f32),
    )
}

/// Parses a `CTCL` buffer; frames are normalization-checked by
/// [`LogitMatrix::new`].
pub fn parse_logits(bytes: &[u8]) -> Result<LogitMatrix, MatrixError> {
    let raw = decode_matrix(LOGITS_MAGIC, bytes)?;
    let data = raw.values.iter().map(|&v| f64::from(v)).collect();
    Ok(LogitMatrix::new(data, raw.rows, raw.cols)?)
}

pub fn read_logits(path: &Path) -> Result<LogitMatrix, MatrixError> {
    parse_logits(&read_file(path)?)
}

pub fn write_logits(logits: &LogitMatrix, path: &Path) -> Result<(), MatrixError> {
    write_file(path, &encode_logits(logits))
}

pub fn encode_spectrogram(spec: &Spectrogram) -> Vec<u8> {
    encode_matrix(
        SPECTROGRAM_MAGIC,
        spec.frames(),
        spec.bins(),
        spec.data().iter().copied(),
    )
}

/// The file does not store frame parameters; the caller supplies them.
pub fn parse_spectrogram(bytes: &[u8], params: FrameParams) -> Result<Spectrogram, MatrixError> {
    let raw = decode_matrix(SPECTROGRAM_MAGIC, bytes)?;
    Ok(Spectrogram::from_raw(raw.values, raw.rows, raw.cols, params)?)
}

pub fn write_spectrogram(spec: &Spectrogram, path: &Path) -> Result<(), MatrixError> {
    write_file(path, &encode_spectrogram(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logits_round_trip() {
        let m = LogitMatrix::from_probabilities(&[vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        let bytes = encode_logits(&m);
        assert_eq!(&bytes[..4], b"CTCL");
        assert_eq!(bytes.len(), 16 + 4 * 4);
        let back = parse_logits(&bytes).unwrap();
        assert_eq!((back.frames(), back.classes()), (2, 2));
        assert_eq!(back.get(1, 1), f64::NEG_INFINITY);
        assert!((back.get(0, 0) - 0.25f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn header_errors() {
        let m = LogitMatrix::from_probabilities(&[vec![0.5, 0.5]]).unwrap();
        let good = encode_logits(&m);
        assert!(matches!(parse_logits(b"CTC"), Err(MatrixError::Magic { .. })));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(parse_logits(&bad), Err(MatrixError::Magic { .. })));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(parse_logits(&bad), Err(MatrixError::Version(2))));
        assert!(matches!(
            parse_logits(&good[..good.len() - 1]),
            Err(MatrixError::Length { .. })
        ));
        // a huge declared shape is rejected without allocating
        let mut huge = good[..16].to_vec();
        huge[8..16].copy_from_slice(&[0xff; 8]);
        assert!(matches!(parse_logits(&huge), Err(MatrixError::Length { .. })));
        let unnormalized = encode_matrix(LOGITS_MAGIC, 1, 2, [0.0f32, 0.0]);
        assert!(matches!(parse_logits(&unnormalized), Err(MatrixError::Decode(_))));
        // spectrogram magic is not accepted as logits
        let spec = encode_matrix(SPECTROGRAM_MAGIC, 1, 2, [0.0f32, 0.0]);
        assert!(matches!(parse_logits(&spec), Err(MatrixError::Magic { .. })));
    }

    #[test]
    fn spectrogram_round_trip() {
        let params = FrameParams::speech_16k();
        let spec = Spectrogram::from_raw(vec![0.0, 1.5, 2.0, 3.25], 2, 2, params).unwrap();
        let back = parse_spectrogram(&encode_spectrogram(&spec), params).unwrap();
        assert_eq!(back, spec);
    }
}

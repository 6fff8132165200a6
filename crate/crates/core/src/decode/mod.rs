//! CTC decoding over per-frame class log-probabilities.
//!
//! Class `C − 1` is the blank; classes `0..C − 1` are alphabet positions.

mod search;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::Alphabet;

pub use search::{beam_search, brute_force_decode, Hypothesis, LmFusion, MAX_BRUTE_FORCE_CANDIDATES};

/// Frames whose probabilities sum within this of 1 are kept as they are.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;
/// Frames within this of 1 are renormalized; anything further is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("logit matrix needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("logit data has {found} values, expected {frames} x {classes}")]
    ShapeMismatch {
        frames: usize,
        classes: usize,
        found: usize,
    },
    #[error("frame {frame} has an invalid value {value}")]
    InvalidValue { frame: usize, value: f64 },
    #[error("frame {frame} probabilities sum to {sum}, not 1")]
    NotNormalized { frame: usize, sum: f64 },
    #[error("logit matrix has {classes} classes but the alphabet needs {expected}")]
    AlphabetMismatch { classes: usize, expected: usize },
    #[error("label index {index} is not a character class (blank is {blank})")]
    LabelOutOfRange { index: usize, blank: usize },
    #[error("beam width must be at least 1")]
    ZeroBeamWidth,
    #[error("brute-force search over {0} candidates exceeds the enumeration guard")]
    TooManyCandidates(u128),
    #[error("language model token {0:?} cannot be spelled with the alphabet")]
    IncompatibleLm(String),
}

/// `T × C` natural-log probabilities, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

impl LogitMatrix {
    /// Validates shape and per-frame normalization. Frames off by at most
    /// [`RENORMALIZE_TOLERANCE`] are renormalized; `-inf` entries are allowed.
    pub fn new(mut data: Vec<f64>, frames: usize, classes: usize) -> Result<Self, DecodeError> {
        if classes < 2 {
            return Err(DecodeError::TooFewClasses(classes));
        }
        if data.len() != frames * classes {
            return Err(DecodeError::ShapeMismatch {
                frames,
                classes,
                found: data.len(),
            });
        }
        for (frame, row) in data.chunks_mut(classes).enumerate() {
            if let Some(&value) = row.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
                return Err(DecodeError::InvalidValue { frame, value });
            }
            let sum: f64 = row.iter().map(|&v| libm::exp(v)).sum();
            let err = libm::fabs(sum - 1.0);
            if err > RENORMALIZE_TOLERANCE {
                return Err(DecodeError::NotNormalized { frame, sum });
            }
            if err > NORMALIZATION_TOLERANCE {
                log::warn!("frame {frame} sums to {sum}; renormalizing");
                let shift = libm::log(sum);
                row.iter_mut().for_each(|v| *v -= shift);
            }
        }
        Ok(Self { frames, classes, data })
    }

    /// Builds from linear probabilities, one row per frame.
    pub fn from_probabilities(rows: &[Vec<f64>]) -> Result<Self, DecodeError> {
        let classes = rows.first().map_or(2, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * classes);
        for (frame, row) in rows.iter().enumerate() {
            if row.len() != classes {
                return Err(DecodeError::ShapeMismatch {
                    frames: frame + 1,
                    classes,
                    found: data.len() + row.len(),
                });
            }
            data.extend(row.iter().map(|&p| libm::log(p)));
        }
        Self::new(data, rows.len(), classes)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn blank(&self) -> usize {
        self.classes - 1
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.classes + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn check_alphabet(&self, alphabet: &Alphabet) -> Result<(), DecodeError> {
        if self.classes != alphabet.len() + 1 {
            return Err(DecodeError::AlphabetMismatch {
                classes: self.classes,
                expected: alphabet.len() + 1,
            });
        }
        Ok(())
    }
}

/// `ln(e^a + e^b)` without overflow; `-inf` is the identity.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + libm::log1p(libm::exp(lo - hi))
}

/// Best path: per-frame argmax (lowest index on ties), repeats collapsed,
/// blanks removed.
pub fn greedy_decode(logits: &LogitMatrix, alphabet: &Alphabet) -> Result<String, DecodeError> {
    logits.check_alphabet(alphabet)?;
    let blank = logits.blank();
    let mut labels = Vec::new();
    let mut previous = blank;
    for t in 0..logits.frames() {
        let row = logits.row(t);
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best != blank && best != previous {
            labels.push(best);
        }
        previous = best;
    }
    Ok(alphabet.decode(&labels))
}

/// Natural-log probability that the frames collapse to `label`, summed over
/// every alignment by the CTC forward recursion. Labels that need more frames
/// than available get `-inf`.
pub fn ctc_label_logprob(logits: &LogitMatrix, label: &[usize]) -> Result<f64, DecodeError> {
    let blank = logits.blank();
    if let Some(&index) = label.iter().find(|&&c| c >= blank) {
        return Err(DecodeError::LabelOutOfRange { index, blank });
    }
    let frames = logits.frames();
    let repeats = label.windows(2).filter(|w| w[0] == w[1]).count();
    if label.len() + repeats > frames {
        return Ok(f64::NEG_INFINITY);
    }
    if frames == 0 {
        return Ok(0.0);
    }

    // extended label: blank, l1, blank, l2, ..., blank
    let mut ext = Vec::with_capacity(2 * label.len() + 1);
    ext.push(blank);
    for &c in label {
        ext.push(c);
        ext.push(blank);
    }
    let s = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; s];
    alpha[0] = logits.get(0, ext[0]);
    if s > 1 {
        alpha[1] = logits.get(0, ext[1]);
    }
    let mut next = vec![f64::NEG_INFINITY; s];
    for t in 1..frames {
        for i in 0..s {
            let mut acc = alpha[i];
            if i >= 1 {
                acc = log_add(acc, alpha[i - 1]);
            }
            if i >= 2 && ext[i] != blank && ext[i] != ext[i - 2] {
                acc = log_add(acc, alpha[i - 2]);
            }
            next[i] = acc + logits.get(t, ext[i]);
        }
        core::mem::swap(&mut alpha, &mut next);
    }
    Ok(if s > 1 {
        log_add(alpha[s - 1], alpha[s - 2])
    } else {
        alpha[0]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab() -> Alphabet {
        Alphabet::new(vec!['a', 'b']).unwrap()
    }

    fn one_hot(path: &[usize], classes: usize) -> LogitMatrix {
        let rows: Vec<Vec<f64>> = path
            .iter()
            .map(|&c| (0..classes).map(|k| if k == c { 1.0 } else { 0.0 }).collect())
            .collect();
        LogitMatrix::from_probabilities(&rows).unwrap()
    }

    /// Sums path probabilities by enumerating every `C^T` alignment.
    fn enumerate_paths(logits: &LogitMatrix, label: &[usize]) -> f64 {
        let (t_len, c) = (logits.frames(), logits.classes());
        let mut total = 0.0;
        for code in 0..c.pow(t_len as u32) {
            let mut rest = code;
            let mut path = Vec::new();
            let mut p = 1.0;
            for t in 0..t_len {
                let k = rest % c;
                rest /= c;
                p *= logits.get(t, k).exp();
                path.push(k);
            }
            let mut collapsed = Vec::new();
            let mut prev = None;
            for &k in &path {
                if Some(k) != prev && k != logits.blank() {
                    collapsed.push(k);
                }
                prev = Some(k);
            }
            if collapsed == label {
                total += p;
            }
        }
        total
    }

    #[test]
    fn greedy_collapse_rules() {
        let a = Alphabet::new(vec!['a']).unwrap();
        assert_eq!(greedy_decode(&one_hot(&[0, 1, 0], 2), &a).unwrap(), "aa");
        assert_eq!(greedy_decode(&one_hot(&[0, 0, 0], 2), &a).unwrap(), "a");
        assert_eq!(greedy_decode(&one_hot(&[1, 1], 2), &a).unwrap(), "");
        assert_eq!(greedy_decode(&one_hot(&[0, 2, 1, 1], 3), &ab()).unwrap(), "ab");
    }

    #[test]
    fn greedy_ties_take_lowest_index() {
        let m = LogitMatrix::from_probabilities(&[vec![0.4, 0.4, 0.2]]).unwrap();
        assert_eq!(greedy_decode(&m, &ab()).unwrap(), "a");
    }

    #[test]
    fn greedy_rejects_wrong_alphabet() {
        let m = one_hot(&[0], 2);
        assert_eq!(
            greedy_decode(&m, &ab()),
            Err(DecodeError::AlphabetMismatch {
                classes: 2,
                expected: 3
            })
        );
    }

    #[test]
    fn two_frame_worked_example() {
        // paths for "a": aa, a-, -a = 0.36 + 0.24 + 0.24; "" is -- = 0.16
        let m = LogitMatrix::from_probabilities(&[vec![0.6, 0.4], vec![0.6, 0.4]]).unwrap();
        let pa = ctc_label_logprob(&m, &[0]).unwrap().exp();
        let pe = ctc_label_logprob(&m, &[]).unwrap().exp();
        assert!((pa - 0.84).abs() < 1e-12);
        assert!((pe - 0.16).abs() < 1e-12);
        assert!((pa + pe - 1.0).abs() < 1e-12);
        assert_eq!(ctc_label_logprob(&m, &[0, 0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn single_frame() {
        let m = LogitMatrix::from_probabilities(&[vec![0.5, 0.5]]).unwrap();
        assert!((ctc_label_logprob(&m, &[0]).unwrap().exp() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_matrix() {
        let m = LogitMatrix::new(vec![], 0, 3).unwrap();
        assert_eq!(ctc_label_logprob(&m, &[]).unwrap(), 0.0);
        assert_eq!(ctc_label_logprob(&m, &[0]).unwrap(), f64::NEG_INFINITY);
        assert_eq!(greedy_decode(&m, &ab()).unwrap(), "");
    }

    #[test]
    fn label_must_avoid_blank() {
        let m = one_hot(&[0], 3);
        assert_eq!(
            ctc_label_logprob(&m, &[2]),
            Err(DecodeError::LabelOutOfRange { index: 2, blank: 2 })
        );
    }

    #[test]
    fn normalization_checks() {
        assert!(LogitMatrix::from_probabilities(&[vec![0.6, 0.4]]).is_ok());
        let m = LogitMatrix::from_probabilities(&[vec![0.603, 0.4]]).unwrap();
        let sum: f64 = m.row(0).iter().map(|v| v.exp()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(matches!(
            LogitMatrix::from_probabilities(&[vec![0.7, 0.4]]),
            Err(DecodeError::NotNormalized { frame: 0, .. })
        ));
        assert!(matches!(
            LogitMatrix::new(vec![f64::NAN, 0.0], 1, 2),
            Err(DecodeError::InvalidValue { .. })
        ));
        assert_eq!(LogitMatrix::new(vec![0.0], 1, 1), Err(DecodeError::TooFewClasses(1)));
        assert!(matches!(
            LogitMatrix::new(vec![0.0; 3], 2, 2),
            Err(DecodeError::ShapeMismatch { .. })
        ));
    }

    fn random_matrix() -> impl Strategy<Value = LogitMatrix> {
        (0usize..=4, 2usize..=3).prop_flat_map(|(t, c)| {
            proptest::collection::vec(0.01f64..1.0, t * c).prop_map(move |raw| {
                let rows: Vec<Vec<f64>> = raw
                    .chunks(c)
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.iter().map(|v| v / s).collect()
                    })
                    .collect();
                if rows.is_empty() {
                    LogitMatrix::new(vec![], 0, c).unwrap()
                } else {
                    LogitMatrix::from_probabilities(&rows).unwrap()
                }
            })
        })
    }

    fn all_labels(symbols: usize, max_len: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut grown = Vec::new();
            for l in &frontier {
                for c in 0..symbols {
                    let mut n: Vec<usize> = l.clone();
                    n.push(c);
                    grown.push(n);
                }
            }
            out.extend(grown.iter().cloned());
            frontier = grown;
        }
        out
    }

    proptest! {
        #[test]
        fn forward_matches_path_enumeration(m in random_matrix()) {
            for label in all_labels(m.classes() - 1, m.frames()) {
                let forward = ctc_label_logprob(&m, &label).unwrap().exp();
                let oracle = enumerate_paths(&m, &label);
                prop_assert!((forward - oracle).abs() <= 1e-12 * oracle.max(1e-300) + 1e-15);
            }
        }

        #[test]
        fn label_probabilities_sum_to_one(m in random_matrix()) {
            let total: f64 = all_labels(m.classes() - 1, m.frames())
                .iter()
                .map(|l| ctc_label_logprob(&m, l).unwrap().exp())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}

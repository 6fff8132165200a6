//! Word and character error rates, and per-dataset reports.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::normalize_transcript;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("references contain no tokens, the error rate is undefined")]
    EmptyReference,
    #[error("a report needs at least one group")]
    NoGroups,
}

/// Edit operations turning a reference into a hypothesis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditOps {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
}

impl EditOps {
    pub fn distance(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Errors over reference length; `None` when the reference is empty.
    pub fn rate(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| self.distance() as f64 / self.ref_len as f64)
    }
}

impl core::ops::Add for EditOps {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            ref_len: self.ref_len + o.ref_len,
        }
    }
}

impl core::iter::Sum for EditOps {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Levenshtein alignment with unit costs. Operation counts come from the
/// backtrace, preferring substitution (or match), then deletion, then
/// insertion when several moves are optimal.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let (n, m) = (reference.len(), hypothesis.len());
    let width = m + 1;
    let mut dp = vec![0usize; (n + 1) * width];
    for i in 0..=n {
        dp[i * width] = i;
    }
    for (j, cell) in dp[..width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = dp[(i - 1) * width + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = dp[(i - 1) * width + j] + 1;
            let ins = dp[i * width + j - 1] + 1;
            dp[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = EditOps {
        ref_len: n,
        ..EditOps::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let differs = reference[i - 1] != hypothesis[j - 1];
            if dp[(i - 1) * width + j - 1] + usize::from(differs) == here {
                ops.substitutions += usize::from(differs);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + 1 == here {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    ops
}

fn words(text: &str) -> Vec<String> {
    normalize_transcript(text)
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

fn chars(text: &str) -> Vec<char> {
    normalize_transcript(text).chars().collect()
}

/// Word-level edit operations after normalizing both sides.
pub fn word_ops(reference: &str, hypothesis: &str) -> EditOps {
    edit_distance(&words(reference), &words(hypothesis))
}

/// Character-level edit operations (space included) after normalizing both sides.
pub fn char_ops(reference: &str, hypothesis: &str) -> EditOps {
    edit_distance(&chars(reference), &chars(hypothesis))
}

fn micro_rate<R: AsRef<str>, H: AsRef<str>>(
    pairs: &[(R, H)],
    ops: fn(&str, &str) -> EditOps,
) -> Result<f64, EvalError> {
    let total: EditOps = pairs.iter().map(|(r, h)| ops(r.as_ref(), h.as_ref())).sum();
    total.rate().ok_or(EvalError::EmptyReference)
}

/// Summed word errors over summed reference words, as a ratio. May exceed 1.
pub fn wer<R: AsRef<str>, H: AsRef<str>>(pairs: &[(R, H)]) -> Result<f64, EvalError> {
    micro_rate(pairs, word_ops)
}

/// Summed character errors over summed reference characters, as a ratio.
pub fn cer<R: AsRef<str>, H: AsRef<str>>(pairs: &[(R, H)]) -> Result<f64, EvalError> {
    micro_rate(pairs, char_ops)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub tag: String,
    pub utterances: usize,
    pub word: EditOps,
    pub char: EditOps,
}

impl ReportRow {
    fn from_pairs<R: AsRef<str>, H: AsRef<str>>(tag: &str, pairs: &[(R, H)]) -> Self {
        Self {
            tag: tag.into(),
            utterances: pairs.len(),
            word: pairs.iter().map(|(r, h)| word_ops(r.as_ref(), h.as_ref())).sum(),
            char: pairs.iter().map(|(r, h)| char_ops(r.as_ref(), h.as_ref())).sum(),
        }
    }

    /// `None` when the group has no reference words.
    pub fn wer(&self) -> Option<f64> {
        self.word.rate()
    }

    pub fn cer(&self) -> Option<f64> {
        self.char.rate()
    }
}

/// One row per group in input order plus a micro-averaged overall row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub overall: ReportRow,
}

pub const OVERALL_TAG: &str = "Overall";

/// Builds the report from `(tag, pairs)` groups. Overall sums edit operations
/// and reference lengths over every group passed in.
pub fn build_report<T, R, H>(groups: &[(T, Vec<(R, H)>)]) -> Result<EvalReport, EvalError>
where
    T: AsRef<str>,
    R: AsRef<str>,
    H: AsRef<str>,
{
    if groups.is_empty() {
        return Err(EvalError::NoGroups);
    }
    let rows: Vec<ReportRow> = groups
        .iter()
        .map(|(tag, pairs)| ReportRow::from_pairs(tag.as_ref(), pairs))
        .collect();
    Ok(EvalReport::from_rows(rows))
}

fn percent(rate: Option<f64>) -> String {
    rate.map(|r| format!("{:.2}%", r * 100.0)).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.into()
    }
}

impl EvalReport {
    /// Report from precomputed rows, e.g. tallies gathered elsewhere.
    pub fn from_rows(rows: Vec<ReportRow>) -> Self {
        let overall = ReportRow {
            tag: OVERALL_TAG.into(),
            utterances: rows.iter().map(|r| r.utterances).sum(),
            word: rows.iter().map(|r| r.word).sum(),
            char: rows.iter().map(|r| r.char).sum(),
        };
        Self { rows, overall }
    }

    fn all_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().chain(core::iter::once(&self.overall))
    }

    /// Aligned plain-text table; metrics are percentages with 2 decimals.
    pub fn render_text(&self) -> String {
        let header = ["Dataset", "Utterances", "WER", "CER"];
        let cells: Vec<[String; 4]> = self
            .all_rows()
            .map(|r| {
                [
                    r.tag.clone(),
                    format!("{}", r.utterances),
                    percent(r.wer()),
                    percent(r.cer()),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: [&str; 4]| {
            let pad = |s: &str, w: usize| " ".repeat(w - s.chars().count());
            let mut out = format!("{}{}", row[0], pad(row[0], widths[0]));
            for k in 1..4 {
                out += &format!("  {}{}", pad(row[k], widths[k]), row[k]);
            }
            out.trim_end().into()
        };
        let mut out: String = line(header);
        out.push('\n');
        let rule: usize = widths.iter().sum::<usize>() + 6;
        out += &"-".repeat(rule);
        out.push('\n');
        for (i, row) in cells.iter().enumerate() {
            if i == cells.len() - 1 {
                out += &"-".repeat(rule);
                out.push('\n');
            }
            let s: String = line([&row[0], &row[1], &row[2], &row[3]]);
            out += &s;
            out.push('\n');
        }
        out
    }

    /// CSV with a header; metrics are percentages with 2 decimals, blank when
    /// undefined.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("dataset,utterances,wer_percent,cer_percent\n");
        let num = |rate: Option<f64>| rate.map(|r| format!("{:.2}", r * 100.0)).unwrap_or_default();
        for r in self.all_rows() {
            out += &format!(
                "{},{},{},{}\n",
                csv_field(&r.tag),
                r.utterances,
                num(r.wer()),
                num(r.cer())
            );
        }
        out
    }
}

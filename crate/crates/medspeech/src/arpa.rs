//! ARPA back-off language model text format.

use std::fs;
use std::path::{Path, PathBuf};

use medspeech_core::lm::{ArpaDocument, ArpaEntry, LmError, NGramModel, TokenMode};
use thiserror::Error;

/// How the space character is spelled in char-mode files, where a bare space
/// could not survive whitespace-separated fields.
pub const SPACE_TOKEN: &str = "<space>";

const MODE_PREFIX: &str = "# medspeech token_mode=";

#[derive(Debug, Error)]
pub enum ArpaError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] LmError),
}

fn parse_error(line: usize, message: impl Into<String>) -> ArpaError {
    ArpaError::Parse {
        line,
        message: message.into(),
    }
}

/// A parsed file plus the token mode named in its preamble, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedArpa {
    pub document: ArpaDocument,
    pub mode_hint: Option<TokenMode>,
}

fn parse_value(text: &str, line: usize, what: &str) -> Result<f64, ArpaError> {
    let v: f64 = text
        .parse()
        .map_err(|_| parse_error(line, format!("{what} {text:?} is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_error(line, format!("{what} {text:?} is not finite")))
    }
}

/// Parses ARPA text. Never panics; every failure carries the 1-based line it
/// was detected on.
pub fn parse_arpa(bytes: &[u8]) -> Result<ParsedArpa, ArpaError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        parse_error(line, "invalid UTF-8")
    })?;
    let mut lines = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).trim())
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .peekable();
    let total_lines = text.split('\n').count();

    let mut mode_hint = None;
    loop {
        let Some((n, line)) = lines.next() else {
            return Err(parse_error(total_lines, "missing \\data\\ section"));
        };
        if line == "\\data\\" {
            break;
        }
        if let Some(mode) = line.strip_prefix(MODE_PREFIX) {
            mode_hint = Some(match mode.trim() {
                "word" => TokenMode::Word,
                "char" => TokenMode::Char,
                other => return Err(parse_error(n, format!("unknown token mode {other:?}"))),
            });
        }
    }

    let mut counts: Vec<usize> = Vec::new();
    while let Some(&(n, line)) = lines.peek() {
        if line.is_empty() {
            lines.next();
            if counts.is_empty() {
                continue;
            }
            break;
        }
        let Some(spec) = line.strip_prefix("ngram ") else {
            break;
        };
        lines.next();
        let (order, count) = spec
            .split_once('=')
            .ok_or_else(|| parse_error(n, format!("malformed count line {line:?}")))?;
        let order: usize = order
            .trim()
            .parse()
            .map_err(|_| parse_error(n, format!("order {order:?} is not an integer")))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| parse_error(n, format!("count {count:?} is not an integer")))?;
        if order != counts.len() + 1 {
            return Err(parse_error(
                n,
                format!("expected ngram {}, found ngram {order}", counts.len() + 1),
            ));
        }
        counts.push(count);
    }
    if counts.is_empty() {
        let n = lines.peek().map_or(total_lines, |&(n, _)| n);
        return Err(parse_error(n, "\\data\\ section lists no n-gram counts"));
    }

    let mut ngrams: Vec<Vec<ArpaEntry>> = Vec::with_capacity(counts.len());
    for (i, &expected) in counts.iter().enumerate() {
        let order = i + 1;
        let header = format!("\\{order}-grams:");
        let start = loop {
            match lines.next() {
                Some((_, "")) => continue,
                Some((n, l)) if l == header => break n,
                Some((n, l)) => return Err(parse_error(n, format!("expected {header}, found {l:?}"))),
                None => return Err(parse_error(total_lines, format!("missing {header} section"))),
            }
        };
        let mut entries = Vec::new();
        while let Some(&(n, line)) = lines.peek() {
            if line.is_empty() || line.starts_with('\\') {
                break;
            }
            lines.next();
            let fields: Vec<&str> = line.split_whitespace().collect();
            let log10_backoff = match fields.len().checked_sub(order) {
                Some(1) => None,
                Some(2) => Some(parse_value(fields[order + 1], n, "back-off")?),
                _ => {
                    return Err(parse_error(
                        n,
                        format!("order-{order} record needs {order} tokens, got {} fields", fields.len()),
                    ))
                }
            };
            entries.push(ArpaEntry {
                log10_prob: parse_value(fields[0], n, "probability")?,
                tokens: fields[1..=order].iter().map(|t| t.to_string()).collect(),
                log10_backoff,
            });
        }
        if entries.len() != expected {
            return Err(parse_error(
                start,
                format!(
                    "header declares {expected} {order}-grams, section has {}",
                    entries.len()
                ),
            ));
        }
        ngrams.push(entries);
    }

    loop {
        match lines.next() {
            Some((_, "")) => continue,
            Some((_, "\\end\\")) => break,
            Some((n, l)) => return Err(parse_error(n, format!("expected \\end\\, found {l:?}"))),
            None => return Err(parse_error(total_lines, "missing \\end\\")),
        }
    }
    Ok(ParsedArpa {
        document: ArpaDocument { ngrams },
        mode_hint,
    })
}

/// Builds a model from parsed text. `mode` overrides the preamble; files
/// without one are word mode.
pub fn model_from_parsed(parsed: &ParsedArpa, mode: Option<TokenMode>) -> Result<NGramModel, ArpaError> {
    let mode = mode.or(parsed.mode_hint).unwrap_or(TokenMode::Word);
    let doc = if mode == TokenMode::Char {
        let mut doc = parsed.document.clone();
        for entry in doc.ngrams.iter_mut().flatten() {
            for t in &mut entry.tokens {
                if t == SPACE_TOKEN {
                    *t = " ".into();
                }
            }
        }
        doc
    } else {
        parsed.document.clone()
    };
    Ok(NGramModel::from_arpa(&doc, mode)?)
}

/// ARPA text with values printed to 7 decimal places. Char-mode models get a
/// preamble naming the mode and spell the space as [`SPACE_TOKEN`].
pub fn format_arpa(model: &NGramModel) -> String {
    let doc = model.to_arpa();
    let char_mode = model.token_mode() == TokenMode::Char;
    let mut out = String::new();
    if char_mode {
        out.push_str(MODE_PREFIX);
        out.push_str("char\n\n");
    }
    out.push_str("\\data\\\n");
    for (i, entries) in doc.ngrams.iter().enumerate() {
        out.push_str(&format!("ngram {}={}\n", i + 1, entries.len()));
    }
    for (i, entries) in doc.ngrams.iter().enumerate() {
        out.push_str(&format!("\n\\{}-grams:\n", i + 1));
        for e in entries {
            let tokens: Vec<&str> = e
                .tokens
                .iter()
                .map(|t| if char_mode && t == " " { SPACE_TOKEN } else { t.as_str() })
                .collect();
            out.push_str(&format!("{:.7}\t{}", e.log10_prob, tokens.join(" ")));
            if let Some(bo) = e.log10_backoff {
                out.push_str(&format!("\t{bo:.7}"));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

pub fn read_arpa(path: &Path, mode: Option<TokenMode>) -> Result<NGramModel, ArpaError> {
    let bytes = fs::read(path).map_err(|source| ArpaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_parsed(&parse_arpa(&bytes)?, mode)
}

pub fn write_arpa(model: &NGramModel, path: &Path) -> Result<(), ArpaError> {
    fs::write(path, format_arpa(model)).map_err(|source| ArpaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

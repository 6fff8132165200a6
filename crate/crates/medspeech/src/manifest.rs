//! Manifest CSV (`wav_filename,wav_filesize,transcript,dataset_tag`) and the
//! `alphabets.csv` character list.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use medspeech_core::corpus::{Alphabet, CorpusError, ManifestEntry};
use thiserror::Error;

pub const MANIFEST_HEADER: [&str; 4] = ["wav_filename", "wav_filesize", "transcript", "dataset_tag"];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header column {index} is {found:?}, expected {expected:?}")]
    Header {
        index: usize,
        expected: &'static str,
        found: String,
    },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("line {line}: {message}")]
    Alphabet { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(e: csv::Error) -> ManifestError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("row has {len} columns, expected {expected_len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        _ => e.to_string(),
    };
    ManifestError::Row { line, message }
}

/// Parses a manifest; the header must match [`MANIFEST_HEADER`] exactly.
pub fn read_manifest_from<R: Read>(reader: R) -> Result<Vec<ManifestEntry>, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    for (index, expected) in MANIFEST_HEADER.iter().enumerate() {
        let found = headers.get(index).unwrap_or("");
        if found != *expected {
            return Err(ManifestError::Header {
                index,
                expected,
                found: found.to_string(),
            });
        }
    }
    if headers.len() > MANIFEST_HEADER.len() {
        return Err(ManifestError::Header {
            index: MANIFEST_HEADER.len(),
            expected: "",
            found: headers[MANIFEST_HEADER.len()].to_string(),
        });
    }
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let wav_filesize = record[1].parse().map_err(|_| ManifestError::Row {
            line,
            message: format!("wav_filesize {:?} is not a byte count", &record[1]),
        })?;
        entries.push(ManifestEntry {
            wav_filename: record[0].to_string(),
            wav_filesize,
            transcript: record[2].to_string(),
            dataset_tag: record[3].to_string(),
        });
    }
    Ok(entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    read_manifest_from(std::io::BufReader::new(file))
}

/// Writes with LF line endings and RFC 4180 quoting. Every transcript must
/// already be normalized.
pub fn write_manifest_to<W: Write>(entries: &[ManifestEntry], writer: W) -> Result<(), ManifestError> {
    for e in entries {
        e.validate()?;
    }
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(MANIFEST_HEADER).map_err(csv_error)?;
    for e in entries {
        wtr.write_record([
            e.wav_filename.as_str(),
            &e.wav_filesize.to_string(),
            &e.transcript,
            &e.dataset_tag,
        ])
        .map_err(csv_error)?;
    }
    wtr.flush().map_err(|e| ManifestError::Row {
        line: 0,
        message: e.to_string(),
    })
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<(), ManifestError> {
    let mut buf = Vec::new();
    write_manifest_to(entries, &mut buf)?;
    fs::write(path, buf).map_err(io_error(path))
}

/// One character per line, `#` starts a comment line, a line holding a single
/// space is the space character. Blank lines are skipped.
pub fn parse_alphabet(text: &str) -> Result<Alphabet, ManifestError> {
    let mut chars = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => chars.push(c),
            _ => {
                return Err(ManifestError::Alphabet {
                    line: i + 1,
                    message: format!("{line:?} is not a single character"),
                })
            }
        }
    }
    Alphabet::new(chars).map_err(ManifestError::from)
}

pub fn format_alphabet(alphabet: &Alphabet) -> String {
    let mut out = String::new();
    for c in alphabet.chars() {
        out.push(*c);
        out.push('\n');
    }
    out
}

pub fn read_alphabet(path: &Path) -> Result<Alphabet, ManifestError> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let line = e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        ManifestError::Alphabet {
            line,
            message: "invalid UTF-8".into(),
        }
    })?;
    parse_alphabet(&text)
}

pub fn write_alphabet(alphabet: &Alphabet, path: &Path) -> Result<(), ManifestError> {
    fs::write(path, format_alphabet(alphabet)).map_err(io_error(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, size: u64, transcript: &str, tag: &str) -> ManifestEntry {
        ManifestEntry {
            wav_filename: name.into(),
            wav_filesize: size,
            transcript: transcript.into(),
            dataset_tag: tag.into(),
        }
    }

    #[test]
    fn round_trip_with_quoting() {
        let entries = vec![
            entry("a.wav", 44, "জ্বর আছে", "standard"),
            entry("dir, with comma/b.wav", 100, "মাথা ব্যথা", "sylheti"),
            entry("c.wav", 0, "", "custom \"tag\""),
        ];
        let mut buf = Vec::new();
        write_manifest_to(&entries, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("wav_filename,wav_filesize,transcript,dataset_tag\n"));
        assert!(text.contains("\"dir, with comma/b.wav\""));
        assert!(!text.contains('\r'));
        assert_eq!(read_manifest_from(buf.as_slice()).unwrap(), entries);
    }

    #[test]
    fn header_mismatch_names_column() {
        let err = read_manifest_from("wav_filename,size,transcript,dataset_tag\n".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            ManifestError::Header {
                index: 1,
                expected: "wav_filesize",
                ..
            }
        ));
        assert!(err.to_string().contains("\"size\""));
    }

    #[test]
    fn bad_rows() {
        let text = "wav_filename,wav_filesize,transcript,dataset_tag\na.wav,1,x,standard\nb.wav,2,y\n";
        assert!(matches!(
            read_manifest_from(text.as_bytes()),
            Err(ManifestError::Row { line: 3, .. })
        ));
        let text = "wav_filename,wav_filesize,transcript,dataset_tag\na.wav,big,x,standard\n";
        assert!(matches!(
            read_manifest_from(text.as_bytes()),
            Err(ManifestError::Row { line: 2, .. })
        ));
        let mut bytes = b"wav_filename,wav_filesize,transcript,dataset_tag\na.wav,1,".to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe, b',', b'x', b'\n']);
        assert!(matches!(
            read_manifest_from(bytes.as_slice()),
            Err(ManifestError::Row { .. })
        ));
    }

    #[test]
    fn write_rejects_unnormalized() {
        let mut buf = Vec::new();
        assert!(write_manifest_to(&[entry("a.wav", 1, "hi!", "standard")], &mut buf).is_err());
    }

    #[test]
    fn alphabet_file_format() {
        let a = parse_alphabet("# comment\n \na\nb\r\n\nক\n").unwrap();
        assert_eq!(a.chars(), &[' ', 'a', 'b', 'ক']);
        assert_eq!(parse_alphabet(&format_alphabet(&a)).unwrap(), a);
        assert!(matches!(
            parse_alphabet("a\nab\n"),
            Err(ManifestError::Alphabet { line: 2, .. })
        ));
        assert!(matches!(parse_alphabet("a\na\n"), Err(ManifestError::Corpus(_))));
    }
}

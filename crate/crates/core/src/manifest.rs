//! Ingestion of app permission metadata.
//!
//! Three on-disk representations are supported and normalized into
//! [`AppRecord`] values:
//!
//! * plain-text `AndroidManifest.xml` documents ([`parse_manifest_xml`]),
//! * JSONL metadata dumps, one object per line ([`parse_metadata_jsonl`]),
//! * wide 0/1 CSV permission tables ([`parse_csv_dataset`]).
//!
//! Binary AXML is out of scope; manifests must be pre-decoded to text.
//! Permission names are compared byte-exactly after whitespace trimming —
//! vendor-specific names are case-significant.

use std::collections::BTreeSet;
use std::fmt;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class assignment of an app.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malware,
    Unlabeled,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Benign => write!(f, "benign"),
            Label::Malware => write!(f, "malware"),
            Label::Unlabeled => write!(f, "unlabeled"),
        }
    }
}

/// One app's identity, label, and requested permissions.
///
/// The permission set is deduplicated, contains no empty strings, and
/// every name is stored without surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppRecord {
    pub id: String,
    pub label: Label,
    pub permissions: BTreeSet<String>,
}

impl AppRecord {
    /// Builds a record, trimming permission names and dropping empties.
    pub fn new<I, S>(id: impl Into<String>, label: Label, permissions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let permissions = permissions
            .into_iter()
            .map(|p| p.as_ref().trim().to_string())
            .filter(|p| !p.is_empty())
            .collect();
        AppRecord {
            id: id.into(),
            label,
            permissions,
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    MalformedXml {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("malformed JSONL line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("unknown label {label:?} on line {line} (expected \"benign\" or \"malware\")")]
    UnknownLabel { line: usize, label: String },
    #[error("CSV header row missing")]
    HeaderMissing,
    #[error("CSV label column {0:?} missing from header")]
    LabelColumnMissing(String),
    #[error("non-binary cell at row {row}, column {column}: {value:?}")]
    NonBinaryCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row} has {got} fields, expected {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        got: usize,
    },
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.bytes().filter(|&b| b == b'\n').count() + 1;
    let column = offset - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

/// Extracts the `android:name` values of every `uses-permission` element.
///
/// Elements lacking the attribute are skipped; duplicates collapse to one
/// entry. The result is independent of element order in the document.
pub fn parse_manifest_xml(document: &str) -> Result<BTreeSet<String>, ParseError> {
    let mut reader = Reader::from_str(document);
    reader.config_mut().check_end_names = true;

    let malformed = |reader: &Reader<&[u8]>, message: String| {
        let (line, column) = line_col(document, reader.buffer_position() as usize);
        ParseError::MalformedXml {
            line,
            column,
            message,
        }
    };

    let mut permissions = BTreeSet::new();
    let mut depth = 0usize;
    loop {
        let event = reader
            .read_event()
            .map_err(|err| malformed(&reader, err.to_string()))?;
        match &event {
            Event::Start(e) | Event::Empty(e) => {
                if matches!(&event, Event::Start(_)) {
                    depth += 1;
                }
                if e.name().as_ref() == b"uses-permission" {
                    for attr in e.attributes() {
                        let attr = attr
                            .map_err(|err| malformed(&reader, format!("bad attribute: {err}")))?;
                        if attr.key.as_ref() == b"android:name" {
                            let value = attr.unescape_value().map_err(|err| {
                                malformed(&reader, format!("bad attribute value: {err}"))
                            })?;
                            let value = value.trim();
                            if !value.is_empty() {
                                permissions.insert(value.to_string());
                            }
                        }
                    }
                }
            }
            Event::End(_) => {
                depth = depth.checked_sub(1).ok_or_else(|| {
                    malformed(&reader, "close tag without matching open tag".into())
                })?;
            }
            Event::Eof => {
                if depth != 0 {
                    return Err(malformed(&reader, format!("{depth} unclosed element(s)")));
                }
                break;
            }
            _ => {}
        }
    }
    Ok(permissions)
}

/// Parse mode for JSONL ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JsonlMode {
    /// Any malformed line aborts the parse.
    #[default]
    Strict,
    /// Malformed lines are skipped and counted; unknown labels still abort.
    Lenient,
}

/// Result of a JSONL parse: records in input order plus skipped line numbers
/// (only populated in lenient mode).
#[derive(Debug, Clone, Default)]
pub struct JsonlParse {
    pub records: Vec<AppRecord>,
    pub skipped_lines: Vec<usize>,
}

#[derive(Deserialize)]
struct RawJsonlRecord {
    id: String,
    #[serde(default)]
    label: Option<String>,
    permissions: Vec<String>,
}

/// Parses JSONL metadata: one object per non-empty line with fields `id`,
/// optional `label` (`"benign"` / `"malware"`), and `permissions`.
pub fn parse_metadata_jsonl(input: &str, mode: JsonlMode) -> Result<JsonlParse, ParseError> {
    let mut out = JsonlParse::default();
    for (idx, raw_line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let raw: RawJsonlRecord = match serde_json::from_str(line) {
            Ok(raw) => raw,
            Err(err) => match mode {
                JsonlMode::Lenient => {
                    out.skipped_lines.push(line_no);
                    continue;
                }
                JsonlMode::Strict => {
                    return Err(ParseError::MalformedLine {
                        line: line_no,
                        message: err.to_string(),
                    })
                }
            },
        };
        if raw.id.trim().is_empty() {
            match mode {
                JsonlMode::Lenient => {
                    out.skipped_lines.push(line_no);
                    continue;
                }
                JsonlMode::Strict => {
                    return Err(ParseError::MalformedLine {
                        line: line_no,
                        message: "empty id".into(),
                    })
                }
            }
        }
        let label = match raw.label.as_deref() {
            None => Label::Unlabeled,
            Some("benign") => Label::Benign,
            Some("malware") => Label::Malware,
            Some(other) => {
                return Err(ParseError::UnknownLabel {
                    line: line_no,
                    label: other.to_string(),
                })
            }
        };
        out.records
            .push(AppRecord::new(raw.id, label, raw.permissions));
    }
    Ok(out)
}

/// Serializes records to the JSONL interchange format (UTF-8, one object per
/// line, LF terminators). `Unlabeled` records omit the label field.
pub fn write_metadata_jsonl(records: &[AppRecord]) -> String {
    let mut out = String::new();
    for record in records {
        let mut object = serde_json::Map::new();
        object.insert("id".into(), serde_json::Value::String(record.id.clone()));
        match record.label {
            Label::Benign => {
                object.insert("label".into(), serde_json::Value::String("benign".into()));
            }
            Label::Malware => {
                object.insert("label".into(), serde_json::Value::String("malware".into()));
            }
            Label::Unlabeled => {}
        }
        object.insert(
            "permissions".into(),
            serde_json::Value::Array(
                record
                    .permissions
                    .iter()
                    .map(|p| serde_json::Value::String(p.clone()))
                    .collect(),
            ),
        );
        out.push_str(&serde_json::Value::Object(object).to_string());
        out.push('\n');
    }
    out
}

/// Parses the wide CSV layout: a header of permission names plus one label
/// column, then 0/1 rows. Row `i` (1-based over data rows) becomes
/// `AppRecord { id: "row<i>", .. }`.
pub fn parse_csv_dataset(input: &str, label_column: &str) -> Result<Vec<AppRecord>, ParseError> {
    let mut lines = input.lines();
    let header_line = loop {
        match lines.next() {
            Some(line) if line.trim().is_empty() => continue,
            Some(line) => break line,
            None => return Err(ParseError::HeaderMissing),
        }
    };
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();
    let label_idx = header
        .iter()
        .position(|name| *name == label_column)
        .ok_or_else(|| ParseError::LabelColumnMissing(label_column.to_string()))?;

    let mut records = Vec::new();
    let mut row_no = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        row_no += 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(ParseError::RowWidth {
                row: row_no,
                expected: header.len(),
                got: cells.len(),
            });
        }
        let mut permissions = Vec::new();
        let mut label = Label::Benign;
        for (col, cell) in cells.iter().enumerate() {
            let bit = match *cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(ParseError::NonBinaryCell {
                        row: row_no,
                        column: header[col].to_string(),
                        value: other.to_string(),
                    })
                }
            };
            if col == label_idx {
                label = if bit == 1 { Label::Malware } else { Label::Benign };
            } else if bit == 1 {
                permissions.push(header[col]);
            }
        }
        records.push(AppRecord::new(format!("row{row_no}"), label, permissions));
    }
    Ok(records)
}

/// Default header name of the CSV label column.
pub const DEFAULT_LABEL_COLUMN: &str = "Result";

//! Binary feature datasets and the PDSV text format.
//!
//! A dataset row is one label bit followed by `P` permission-indicator
//! bits. PDSV ("permission dataset, version 1") lays that out as plain
//! UTF-8 text:
//!
//! ```text
//! line 1        : P (number of permissions)
//! lines 2..=P+1 : permission names in canonical order
//! remaining     : rows as comma-separated bits, label first (P+1 fields)
//! ```
//!
//! All lines end in LF. The canonical permission order is strictly
//! increasing lexicographic byte order, which keeps rebuilt datasets
//! byte-identical run to run.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("permission list not strictly increasing at index {0}")]
    UnsortedPermissionList(usize),
    #[error("invalid permission name {name:?}: {reason}")]
    InvalidPermissionName { name: String, reason: String },
    #[error("PDSV line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("PDSV line {line}: label {value:?} outside {{0,1}}")]
    BadLabel { line: usize, value: String },
    #[error("PDSV line {line}: feature bit {value:?} outside {{0,1}}")]
    BadBit { line: usize, value: String },
    #[error("row at line {line} has {got} fields, expected {expected}")]
    RowWidth {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ordered, deduplicated permission names; the feature axis of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionList {
    names: Vec<String>,
}

impl PermissionList {
    /// Builds a list from names in any order; sorts and rejects duplicates
    /// and names that would corrupt the text formats.
    pub fn new(mut names: Vec<String>) -> Result<Self, DatasetError> {
        for name in &names {
            validate_permission_name(name)?;
        }
        names.sort_unstable();
        for i in 1..names.len() {
            if names[i - 1] >= names[i] {
                return Err(DatasetError::UnsortedPermissionList(i));
            }
        }
        Ok(PermissionList { names })
    }

    /// Wraps names that are already strictly increasing.
    pub fn from_sorted(names: Vec<String>) -> Result<Self, DatasetError> {
        for (i, name) in names.iter().enumerate() {
            validate_permission_name(name)?;
            if i > 0 && names[i - 1] >= names[i] {
                return Err(DatasetError::UnsortedPermissionList(i));
            }
        }
        Ok(PermissionList { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn validate_permission_name(name: &str) -> Result<(), DatasetError> {
    if name.is_empty() {
        return Err(DatasetError::InvalidPermissionName {
            name: name.into(),
            reason: "empty".into(),
        });
    }
    if name.contains(',') || name.contains('\n') || name.contains('\r') {
        return Err(DatasetError::InvalidPermissionName {
            name: name.into(),
            reason: "contains a comma or line break".into(),
        });
    }
    if name.trim() != name {
        return Err(DatasetError::InvalidPermissionName {
            name: name.into(),
            reason: "has surrounding whitespace".into(),
        });
    }
    Ok(())
}

/// One labeled row: label bit (0 benign, 1 malware) plus `P` feature bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    pub label: u8,
    pub features: Vec<u8>,
}

impl FeatureVector {
    pub fn new(label: u8, features: Vec<u8>) -> Self {
        debug_assert!(label <= 1);
        debug_assert!(features.iter().all(|&b| b <= 1));
        FeatureVector { label, features }
    }
}

/// Labeled binary feature matrix over a fixed permission list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub permission_list: PermissionList,
    pub rows: Vec<FeatureVector>,
}

impl Dataset {
    pub fn new(permission_list: PermissionList, rows: Vec<FeatureVector>) -> Self {
        debug_assert!(rows.iter().all(|r| r.features.len() == permission_list.len()));
        Dataset {
            permission_list,
            rows,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.permission_list.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// (benign, malware) row counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let malware = self.rows.iter().filter(|r| r.label == 1).count();
        (self.rows.len() - malware, malware)
    }

    /// Serializes to PDSV text.
    pub fn to_pdsv(&self) -> String {
        let p = self.permission_list.len();
        let mut out = String::with_capacity(16 + p * 24 + self.rows.len() * (2 * p + 4));
        writeln!(out, "{p}").unwrap();
        for name in self.permission_list.names() {
            out.push_str(name);
            out.push('\n');
        }
        for row in &self.rows {
            write!(out, "{}", row.label).unwrap();
            for &bit in &row.features {
                out.push(',');
                out.push(if bit == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses PDSV text, validating every bit.
    pub fn from_pdsv(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or(DatasetError::Malformed {
            line: 1,
            message: "empty file".into(),
        })?;
        let p: usize = first.trim().parse().map_err(|_| DatasetError::Malformed {
            line: 1,
            message: format!("expected permission count, found {first:?}"),
        })?;

        let mut names = Vec::with_capacity(p);
        for _ in 0..p {
            let (idx, name) = lines.next().ok_or(DatasetError::Malformed {
                line: names.len() + 2,
                message: "truncated permission list".into(),
            })?;
            let _ = idx;
            names.push(name.to_string());
        }
        let permission_list = PermissionList::from_sorted(names)?;

        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label_field = fields.next().unwrap_or("");
            let label = match label_field {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(DatasetError::BadLabel {
                        line: line_no,
                        value: other.to_string(),
                    })
                }
            };
            let mut features = Vec::with_capacity(p);
            for field in fields {
                match field {
                    "0" => features.push(0),
                    "1" => features.push(1),
                    other => {
                        return Err(DatasetError::BadBit {
                            line: line_no,
                            value: other.to_string(),
                        })
                    }
                }
            }
            if features.len() != p {
                return Err(DatasetError::RowWidth {
                    line: line_no,
                    expected: p + 1,
                    got: features.len() + 1,
                });
            }
            rows.push(FeatureVector { label, features });
        }
        Ok(Dataset {
            permission_list,
            rows,
        })
    }

    pub fn write_pdsv(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_pdsv()).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_pdsv(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_pdsv(&text)
    }
}

/// Rows whose feature bits collide while their labels disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DuplicateConflicts {
    /// Distinct feature patterns with both labels present.
    pub groups: usize,
    /// Total rows belonging to those patterns.
    pub rows: usize,
    pub benign_rows: usize,
    pub malware_rows: usize,
}

/// Counts identical feature rows carrying conflicting labels. The rows are
/// reported, never dropped.
pub fn audit_duplicate_conflicts(dataset: &Dataset) -> DuplicateConflicts {
    let mut groups: HashMap<&[u8], (usize, usize)> = HashMap::new();
    for row in &dataset.rows {
        let entry = groups.entry(row.features.as_slice()).or_insert((0, 0));
        if row.label == 1 {
            entry.1 += 1;
        } else {
            entry.0 += 1;
        }
    }
    let mut out = DuplicateConflicts::default();
    for (benign, malware) in groups.into_values() {
        if benign > 0 && malware > 0 {
            out.groups += 1;
            out.rows += benign + malware;
            out.benign_rows += benign;
            out.malware_rows += malware;
        }
    }
    out
}

//! Feature pipeline: permission statistics, filtering, vectorization,
//! splitting, and class balancing.
//!
//! Statistics count *apps*, not requests: an app contributes at most once
//! per permission. Filtering applies two rules — a minimum total
//! occurrence count (default 26, i.e. totals of 25 and below are removed)
//! and, by default, the requirement that a permission occur in both
//! classes. Permissions seen only in malware (or only in benign) samples
//! would otherwise teach a classifier shortcuts that do not generalize.
//!
//! Statistics are computed over the full labeled corpus before any split,
//! which mirrors the upstream procedure but does leak filter decisions
//! across splits; callers that care can split records first.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, FeatureVector, PermissionList};
use crate::manifest::{AppRecord, Label};
use crate::rng;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("record {0:?} is unlabeled")]
    UnlabeledRecord(String),
    #[error("class {class} has {have} rows, need at least {need}")]
    InsufficientClassCount {
        class: &'static str,
        have: usize,
        need: usize,
    },
    #[error("cannot balance: class {0} is empty")]
    EmptyClass(&'static str),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Per-permission app counts by class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PermissionStats {
    entries: BTreeMap<String, ClassCounts>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub benign: u64,
    pub malware: u64,
}

impl ClassCounts {
    pub fn total(self) -> u64 {
        self.benign + self.malware
    }
}

impl PermissionStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds one labeled record into the counts.
    pub fn add_record(&mut self, record: &AppRecord) -> Result<(), PipelineError> {
        let malware = match record.label {
            Label::Benign => false,
            Label::Malware => true,
            Label::Unlabeled => return Err(PipelineError::UnlabeledRecord(record.id.clone())),
        };
        for permission in &record.permissions {
            let entry = self.entries.entry(permission.clone()).or_default();
            if malware {
                entry.malware += 1;
            } else {
                entry.benign += 1;
            }
        }
        Ok(())
    }

    /// Merges counts computed over another shard. Counts add, so stats may
    /// be gathered over disjoint record sets in any order.
    pub fn merge(&mut self, other: PermissionStats) {
        for (permission, counts) in other.entries {
            let entry = self.entries.entry(permission).or_default();
            entry.benign += counts.benign;
            entry.malware += counts.malware;
        }
    }

    pub fn get(&self, permission: &str) -> Option<ClassCounts> {
        self.entries.get(permission).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ClassCounts)> {
        self.entries.iter().map(|(name, c)| (name.as_str(), *c))
    }

    /// Sum of totals over all entries; equals the sum of `|permissions|`
    /// over the contributing records.
    pub fn total_occurrences(&self) -> u64 {
        self.entries.values().map(|c| c.total()).sum()
    }

    /// CSV export, `permission,benign,malware,total`, sorted by total
    /// descending (name ascending on ties). Names that would corrupt the
    /// unquoted CSV (commas, line breaks) are rejected at write time.
    pub fn to_csv(&self) -> Result<String, DatasetError> {
        let mut rows: Vec<(&str, ClassCounts)> = self.iter().collect();
        rows.sort_by(|a, b| b.1.total().cmp(&a.1.total()).then_with(|| a.0.cmp(b.0)));
        let mut out = String::from("permission,benign,malware,total\n");
        for (name, counts) in rows {
            if name.contains(',') || name.contains('\n') || name.contains('\r') {
                return Err(DatasetError::InvalidPermissionName {
                    name: name.to_string(),
                    reason: "contains a comma or line break".into(),
                });
            }
            writeln!(
                out,
                "{name},{},{},{}",
                counts.benign,
                counts.malware,
                counts.total()
            )
            .unwrap();
        }
        Ok(out)
    }
}

/// Collects per-permission class counts over labeled records.
pub fn collect_permission_stats<'a, I>(records: I) -> Result<PermissionStats, PipelineError>
where
    I: IntoIterator<Item = &'a AppRecord>,
{
    let mut stats = PermissionStats::new();
    for record in records {
        stats.add_record(record)?;
    }
    Ok(stats)
}

/// Rules for pruning the permission vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    /// Keep a permission only if benign + malware occurrences reach this
    /// count. The default of 26 removes everything seen in 25 or fewer apps.
    pub min_total_occurrences: u64,
    /// Keep a permission only if it occurs in both classes.
    pub require_both_classes: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_total_occurrences: 26,
            require_both_classes: true,
        }
    }
}

/// Applies the filter rules and returns the kept names in canonical
/// (lexicographic) order.
pub fn filter_permissions(
    stats: &PermissionStats,
    config: &FilterConfig,
) -> Result<PermissionList, DatasetError> {
    let names: Vec<String> = stats
        .iter()
        .filter(|(_, counts)| {
            counts.total() >= config.min_total_occurrences
                && (!config.require_both_classes || (counts.benign >= 1 && counts.malware >= 1))
        })
        .map(|(name, _)| name.to_string())
        .collect();
    // BTreeMap iteration is already sorted.
    PermissionList::from_sorted(names)
}

/// Encodes one labeled record against a permission list. Permissions the
/// list does not contain are ignored.
pub fn vectorize(record: &AppRecord, list: &PermissionList) -> Result<FeatureVector, PipelineError> {
    let label = match record.label {
        Label::Benign => 0u8,
        Label::Malware => 1u8,
        Label::Unlabeled => return Err(PipelineError::UnlabeledRecord(record.id.clone())),
    };
    let features = list
        .names()
        .iter()
        .map(|name| u8::from(record.permissions.contains(name)))
        .collect();
    Ok(FeatureVector::new(label, features))
}

/// Vectorizes a whole corpus in record order.
pub fn vectorize_dataset(
    records: &[AppRecord],
    list: &PermissionList,
) -> Result<Dataset, PipelineError> {
    let rows = records
        .iter()
        .map(|record| vectorize(record, list))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(list.clone(), rows))
}

/// Per-class holdout sizes and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub test_per_class: usize,
    pub validation_per_class: usize,
    pub seed: u64,
}

/// Train/validation/test partition of a dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

const STREAM_SPLIT_BENIGN: u64 = 0x5701;
const STREAM_SPLIT_MALWARE: u64 = 0x5702;
const STREAM_BALANCE: u64 = 0xBA1A;

/// Splits per class: a seeded shuffle assigns exactly `test_per_class`
/// rows to test and `validation_per_class` to validation; the rest train.
/// Every input row lands in exactly one split; row order within each
/// split follows the input.
pub fn split_dataset(dataset: &Dataset, spec: &SplitSpec) -> Result<Split, PipelineError> {
    let need = spec.test_per_class + spec.validation_per_class;
    let mut benign_idx: Vec<usize> = Vec::new();
    let mut malware_idx: Vec<usize> = Vec::new();
    for (i, row) in dataset.rows.iter().enumerate() {
        if row.label == 1 {
            malware_idx.push(i);
        } else {
            benign_idx.push(i);
        }
    }
    for (class, idx) in [("benign", &benign_idx), ("malware", &malware_idx)] {
        if idx.len() < need {
            return Err(PipelineError::InsufficientClassCount {
                class: if class == "benign" { "benign" } else { "malware" },
                have: idx.len(),
                need,
            });
        }
    }

    let mut test_rows = Vec::with_capacity(2 * spec.test_per_class);
    let mut val_rows = Vec::with_capacity(2 * spec.validation_per_class);
    let mut train_rows = Vec::new();
    for (stream, mut idx) in [
        (STREAM_SPLIT_BENIGN, benign_idx),
        (STREAM_SPLIT_MALWARE, malware_idx),
    ] {
        let mut rng = rng::seeded(rng::derive_seed(spec.seed, stream));
        idx.shuffle(&mut rng);
        let (test, rest) = idx.split_at(spec.test_per_class);
        let (val, train) = rest.split_at(spec.validation_per_class);
        let mut test = test.to_vec();
        let mut val = val.to_vec();
        let mut train = train.to_vec();
        test.sort_unstable();
        val.sort_unstable();
        train.sort_unstable();
        test_rows.extend(test);
        val_rows.extend(val);
        train_rows.extend(train);
    }
    test_rows.sort_unstable();
    val_rows.sort_unstable();
    train_rows.sort_unstable();

    let take = |indices: &[usize]| {
        Dataset::new(
            dataset.permission_list.clone(),
            indices.iter().map(|&i| dataset.rows[i].clone()).collect(),
        )
    };
    Ok(Split {
        train: take(&train_rows),
        validation: take(&val_rows),
        test: take(&test_rows),
    })
}

/// Equalizes class counts by duplicating minority rows: every minority row
/// `floor(B/M)` times, plus `B mod M` distinct rows sampled without
/// replacement. Majority rows appear exactly once. An already balanced
/// dataset passes through unchanged.
pub fn balance_by_duplication(train: &Dataset, seed: u64) -> Result<Dataset, PipelineError> {
    let (benign, malware) = train.class_counts();
    if benign == 0 {
        return Err(PipelineError::EmptyClass("benign"));
    }
    if malware == 0 {
        return Err(PipelineError::EmptyClass("malware"));
    }
    let (majority, minority, minority_label) = if benign >= malware {
        (benign, malware, 1u8)
    } else {
        (malware, benign, 0u8)
    };
    let copies = majority / minority;
    let remainder = majority % minority;

    let minority_idx: Vec<usize> = train
        .rows
        .iter()
        .enumerate()
        .filter(|(_, row)| row.label == minority_label)
        .map(|(i, _)| i)
        .collect();

    // Original rows once (covers one copy of the minority), then the extra
    // full copies, then the sampled remainder.
    let mut rows = train.rows.clone();
    for _ in 1..copies {
        rows.extend(minority_idx.iter().map(|&i| train.rows[i].clone()));
    }
    if remainder > 0 {
        let mut shuffled = minority_idx.clone();
        let mut rng = rng::seeded(rng::derive_seed(seed, STREAM_BALANCE));
        shuffled.shuffle(&mut rng);
        let mut extra: Vec<usize> = shuffled[..remainder].to_vec();
        extra.sort_unstable();
        rows.extend(extra.iter().map(|&i| train.rows[i].clone()));
    }
    Ok(Dataset::new(train.permission_list.clone(), rows))
}
